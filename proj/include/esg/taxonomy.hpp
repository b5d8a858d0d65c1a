#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace esg {

// Hierarchical sector code: a section letter A-U followed by dotted digit
// groups, e.g. "H", "H.49", "H.49.1".
class NaceCode {
public:
    // Throws Error(Validation) when `code` does not match the pattern.
    static NaceCode parse(std::string_view code);
    static bool is_valid(std::string_view code);

    const std::string& str() const noexcept { return code_; }
    std::size_t depth() const noexcept { return segments_; }

    // True when this code's segment chain is a leading part of `other`'s
    // (H.49 prefixes H.49 and H.49.1, not H.491).
    bool prefixes(const NaceCode& other) const;

    friend bool operator==(const NaceCode& a, const NaceCode& b) { return a.code_ == b.code_; }
    friend auto operator<=>(const NaceCode& a, const NaceCode& b) { return a.code_ <=> b.code_; }

private:
    explicit NaceCode(std::string code, std::size_t segments)
        : code_(std::move(code)), segments_(segments) {}

    std::string code_;
    std::size_t segments_ = 1;
};

struct EsgActivity {
    std::string activity_id;
    std::string title;
    std::string full_description;
    // Compact rephrasing used as both the retrieval query and the classifier input.
    std::string short_description;
    std::vector<NaceCode> nace_codes;  // empty: applies to every sector
    std::string objective;

    bool operator==(const EsgActivity&) const = default;
};

struct Taxonomy {
    std::string version = "unversioned";
    std::vector<EsgActivity> activities;

    const EsgActivity* find(std::string_view activity_id) const;
    bool operator==(const Taxonomy&) const = default;
};

// Throws Error(Validation) on duplicate ids or empty short descriptions.
void validate(const Taxonomy& taxonomy);

// One JSON record per line. A record carrying only {"version": ...} sets the
// taxonomy version. Blank lines are ignored. Errors cite the line number.
Taxonomy parse_taxonomy(std::istream& in);
Taxonomy load_taxonomy(const std::filesystem::path& path);
std::string serialize_taxonomy(const Taxonomy& taxonomy);

nlohmann::json to_json(const EsgActivity& activity);
EsgActivity activity_from_json(const nlohmann::json& record);

// Activities applicable to the given sector codes, ordered by activity_id.
// Matching is bidirectional prefixing; activities without codes always match;
// an empty `codes` disables the filter.
std::vector<EsgActivity> select_activities(const Taxonomy& taxonomy,
                                           std::span<const NaceCode> codes);

}  // namespace esg
