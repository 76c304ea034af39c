#pragma once

#include <stdexcept>
#include <string>

namespace cvdecode {

/// Base class for all library errors. `kind()` is a stable machine-readable
/// tag that the CLI forwards into its error JSON.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& msg) : Error("invalid-input", msg) {}
};

/// A channel whose baseline has zero variance cannot be z-scored.
struct DegenerateChannelError : Error {
    explicit DegenerateChannelError(const std::string& msg) : Error("degenerate-channel", msg) {}
};

struct ClassTooSmallError : Error {
    explicit ClassTooSmallError(const std::string& msg) : Error("class-too-small", msg) {}
};

struct UnknownLabelError : Error {
    explicit UnknownLabelError(const std::string& msg) : Error("unknown-label", msg) {}
};

struct ChecksumMismatchError : Error {
    explicit ChecksumMismatchError(const std::string& msg) : Error("checksum-mismatch", msg) {}
};

struct ShapeMismatchError : Error {
    explicit ShapeMismatchError(const std::string& msg) : Error("shape-mismatch", msg) {}
};

/// Training produced a non-finite loss; carries the offending epoch.
struct DivergedError : Error {
    DivergedError(const std::string& msg, int epoch)
        : Error("diverged", msg), epoch(epoch) {}
    int epoch;
};

struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& msg) : Error("non-convergence", msg) {}
};

struct SearchFailedError : Error {
    explicit SearchFailedError(const std::string& msg) : Error("search-failed", msg) {}
};

struct UndefinedTaskError : Error {
    explicit UndefinedTaskError(const std::string& msg) : Error("undefined-task", msg) {}
};

struct UndefinedTestError : Error {
    explicit UndefinedTestError(const std::string& msg) : Error("undefined-test", msg) {}
};

struct SplitUndefinedError : Error {
    explicit SplitUndefinedError(const std::string& msg) : Error("split-undefined", msg) {}
};

struct GroupEmptyError : Error {
    explicit GroupEmptyError(const std::string& msg) : Error("group-empty", msg) {}
};

struct TrialRangeError : Error {
    explicit TrialRangeError(const std::string& msg) : Error("trial-out-of-range", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io", msg) {}
};

}  // namespace cvdecode
