#pragma once

namespace cvdecode {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace cvdecode
