#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cvdecode/error.hpp"

namespace cvdecode::labels {

/// Marker emitted in place of a task label for trials the task cannot
/// categorize (e.g. a consonant outside the 3-category location subset).
/// Downstream dataset construction drops marked trials.
inline constexpr const char* kExcludedLabel = "_excluded_";

/// Category name in the feature table meaning "not in the categorized
/// subset" for that dimension. A real category for feature vectors, an
/// exclusion for classification tasks.
inline constexpr const char* kUncategorized = "none";

inline const std::vector<std::string>& consonant_inventory() {
    static const std::vector<std::string> kConsonants = {
        "b", "d", "f", "g", "h", "k", "l", "m", "n", "p",
        "r", "s", "sh", "t", "th", "v", "w", "y", "z"};
    return kConsonants;
}

inline const std::vector<std::string>& vowel_inventory() {
    static const std::vector<std::string> kVowels = {"a", "i", "u"};
    return kVowels;
}

struct CvLabel {
    std::string consonant;
    std::string vowel;
    std::string str() const { return consonant + vowel; }
    bool operator==(const CvLabel& o) const {
        return consonant == o.consonant && vowel == o.vowel;
    }
};

/// Split a syllable string into consonant + vowel. Digraphs ("sh", "th")
/// win by longest match; the remainder must be exactly one vowel.
inline CvLabel parse_cv(const std::string& label) {
    CvLabel best;
    for (const auto& c : consonant_inventory()) {
        if (label.size() <= c.size() || label.compare(0, c.size(), c) != 0) continue;
        const std::string rest = label.substr(c.size());
        const auto& vowels = vowel_inventory();
        if (std::find(vowels.begin(), vowels.end(), rest) == vowels.end()) continue;
        if (c.size() > best.consonant.size()) best = {c, rest};
    }
    if (best.consonant.empty())
        throw UnknownLabelError("'" + label + "' is not a consonant-vowel syllable");
    return best;
}

/// All syllables in canonical order: consonants in inventory order, vowels
/// nested inside.
inline std::vector<std::string> all_cv_labels() {
    std::vector<std::string> out;
    out.reserve(consonant_inventory().size() * vowel_inventory().size());
    for (const auto& c : consonant_inventory())
        for (const auto& v : vowel_inventory()) out.push_back(c + v);
    return out;
}

// ---------------------------------------------------------------------------
// Articulatory features
// ---------------------------------------------------------------------------

/// Category assignment per consonant along the three articulatory
/// dimensions. "none" is an explicit category, not a missing value.
struct ArticulatoryFeatureTable {
    std::vector<std::string> consonants;  // table order
    std::map<std::string, std::string> major;
    std::map<std::string, std::string> location;
    std::map<std::string, std::string> degree;

    const std::map<std::string, std::string>& dimension(const std::string& name) const {
        if (name == "major") return major;
        if (name == "location") return location;
        if (name == "degree") return degree;
        throw InvalidInputError("unknown articulatory dimension '" + name + "'");
    }

    std::string lookup(const std::string& dim, const std::string& consonant) const {
        const auto& table = dimension(dim);
        auto it = table.find(consonant);
        if (it == table.end())
            throw UnknownLabelError("consonant '" + consonant + "' missing from feature table");
        return it->second;
    }

    /// One-hot over one block's categories (sorted order). Blocks: major,
    /// location, degree over the consonant, or vowel over the vowel.
    /// Exactly one entry is active.
    std::vector<double> block_vector(const std::string& block, const CvLabel& cv) const {
        std::vector<double> v;
        if (block == "vowel") {
            for (const auto& vw : vowel_inventory()) v.push_back(vw == cv.vowel ? 1.0 : 0.0);
            return v;
        }
        const auto& table = dimension(block);
        std::set<std::string> cats;
        for (const auto& [c, cat] : table) cats.insert(cat);
        const std::string mine = lookup(block, cv.consonant);
        for (const auto& cat : cats) v.push_back(cat == mine ? 1.0 : 0.0);
        return v;
    }

    /// Full binary feature vector: major | location | degree | vowel.
    std::vector<double> cv_feature_vector(const CvLabel& cv) const {
        std::vector<double> v;
        for (const char* block : {"major", "location", "degree", "vowel"}) {
            auto b = block_vector(block, cv);
            v.insert(v.end(), b.begin(), b.end());
        }
        return v;
    }
};

/// Parse the tab-separated table: header row "consonant major location
/// degree", one consonant per following row.
inline ArticulatoryFeatureTable parse_feature_table(std::istream& in) {
    ArticulatoryFeatureTable t;
    std::string line;
    if (!std::getline(in, line))
        throw InvalidInputError("feature table: empty input");
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        std::string cur;
        for (char ch : s) {
            if (ch == '\t') {
                f.push_back(cur);
                cur.clear();
            } else if (ch != '\r') {
                cur += ch;
            }
        }
        f.push_back(cur);
        return f;
    };
    const auto header = split(line);
    if (header != std::vector<std::string>{"consonant", "major", "location", "degree"})
        throw InvalidInputError("feature table: bad header row");
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != 4)
            throw InvalidInputError("feature table: line " + std::to_string(lineno) +
                                    " has " + std::to_string(f.size()) + " fields, want 4");
        if (t.major.count(f[0]))
            throw InvalidInputError("feature table: duplicate consonant '" + f[0] + "'");
        t.consonants.push_back(f[0]);
        t.major[f[0]] = f[1];
        t.location[f[0]] = f[2];
        t.degree[f[0]] = f[3];
    }
    if (t.consonants.empty()) throw InvalidInputError("feature table: no consonant rows");
    return t;
}

inline ArticulatoryFeatureTable load_feature_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open feature table '" + path + "'");
    return parse_feature_table(in);
}

/// Built-in table for the standard 19-consonant inventory, identical in
/// format to the on-disk TSV.
inline const char* default_feature_table_tsv() {
    return
        "consonant\tmajor\tlocation\tdegree\n"
        "b\tlips\tbilabial\tstop\n"
        "d\tfront_tongue\talveolar\tstop\n"
        "f\tlips\tlabiodental\tfricative\n"
        "g\tback_tongue\tnone\tstop\n"
        "h\tglottal\tnone\tfricative\n"
        "k\tback_tongue\tnone\tstop\n"
        "l\tfront_tongue\talveolar\tnone\n"
        "m\tlips\tbilabial\tnasal\n"
        "n\tfront_tongue\talveolar\tnasal\n"
        "p\tlips\tbilabial\tstop\n"
        "r\tfront_tongue\tnone\tnone\n"
        "s\tfront_tongue\talveolar\tfricative\n"
        "sh\tfront_tongue\tnone\tfricative\n"
        "t\tfront_tongue\talveolar\tstop\n"
        "th\tfront_tongue\tnone\tfricative\n"
        "v\tlips\tlabiodental\tfricative\n"
        "w\tlips\tnone\tnone\n"
        "y\tback_tongue\tnone\tnone\n"
        "z\tfront_tongue\talveolar\tfricative\n";
}

inline const ArticulatoryFeatureTable& default_feature_table() {
    static const ArticulatoryFeatureTable t = [] {
        std::istringstream in(default_feature_table_tsv());
        return parse_feature_table(in);
    }();
    return t;
}

// ---------------------------------------------------------------------------
// Classification tasks
// ---------------------------------------------------------------------------

enum class Task { cv, consonant, vowel, major, location, degree };

inline std::string to_string(Task t) {
    switch (t) {
        case Task::cv: return "cv";
        case Task::consonant: return "consonant";
        case Task::vowel: return "vowel";
        case Task::major: return "major";
        case Task::location: return "location";
        case Task::degree: return "degree";
    }
    throw UndefinedTaskError("unreachable task value");
}

inline Task task_from_string(const std::string& s) {
    for (Task t : {Task::cv, Task::consonant, Task::vowel, Task::major, Task::location,
                   Task::degree})
        if (to_string(t) == s) return t;
    throw UndefinedTaskError("unknown task '" + s + "'");
}

/// Project one syllable onto a task label. For the location and degree
/// tasks, consonants outside the categorized subset yield the excluded
/// marker rather than a class.
inline std::string derive_task_label(const std::string& cv_label, Task task,
                                     const ArticulatoryFeatureTable& table =
                                         default_feature_table()) {
    const CvLabel cv = parse_cv(cv_label);
    switch (task) {
        case Task::cv: return cv.str();
        case Task::consonant: return cv.consonant;
        case Task::vowel: return cv.vowel;
        case Task::major: return table.lookup("major", cv.consonant);
        case Task::location:
        case Task::degree: {
            const std::string cat =
                table.lookup(task == Task::location ? "location" : "degree", cv.consonant);
            return cat == kUncategorized ? kExcludedLabel : cat;
        }
    }
    throw UndefinedTaskError("unreachable task value");
}

inline std::vector<std::string> derive_task_labels(
    const std::vector<std::string>& cv_labels, Task task,
    const ArticulatoryFeatureTable& table = default_feature_table()) {
    std::vector<std::string> out;
    out.reserve(cv_labels.size());
    for (const auto& s : cv_labels) out.push_back(derive_task_label(s, task, table));
    return out;
}

}  // namespace cvdecode::labels
