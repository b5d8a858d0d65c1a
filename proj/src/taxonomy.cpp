#include "esg/taxonomy.hpp"

#include "esg/error.hpp"
#include "esg/text.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace esg {

using nlohmann::json;

bool NaceCode::is_valid(std::string_view code)
{
    if (code.empty() || code[0] < 'A' || code[0] > 'U') return false;
    std::size_t i = 1;
    while (i < code.size()) {
        if (code[i] != '.') return false;
        ++i;
        std::size_t digits = 0;
        while (i < code.size() && code[i] >= '0' && code[i] <= '9') {
            ++i;
            ++digits;
        }
        if (digits == 0) return false;
    }
    return true;
}

NaceCode NaceCode::parse(std::string_view code)
{
    if (!is_valid(code))
        throw Error(ErrorKind::Validation, "invalid NACE code \"" + std::string(code) + "\"");
    auto segments = static_cast<std::size_t>(std::count(code.begin(), code.end(), '.')) + 1;
    return NaceCode(std::string(code), segments);
}

bool NaceCode::prefixes(const NaceCode& other) const
{
    if (segments_ > other.segments_) return false;
    if (!other.code_.starts_with(code_)) return false;
    return other.code_.size() == code_.size() || other.code_[code_.size()] == '.';
}

const EsgActivity* Taxonomy::find(std::string_view activity_id) const
{
    for (const auto& a : activities)
        if (a.activity_id == activity_id) return &a;
    return nullptr;
}

void validate(const Taxonomy& taxonomy)
{
    std::set<std::string_view> seen;
    for (const auto& a : taxonomy.activities) {
        if (a.activity_id.empty()) throw Error(ErrorKind::Validation, "activity with empty id");
        if (!seen.insert(a.activity_id).second)
            throw Error(ErrorKind::Validation, "duplicate activity_id \"" + a.activity_id + "\"");
        if (trim(a.short_description).empty())
            throw Error(ErrorKind::Validation,
                        "activity \"" + a.activity_id + "\" has an empty short_description");
    }
}

json to_json(const EsgActivity& a)
{
    json codes = json::array();
    for (const auto& c : a.nace_codes) codes.push_back(c.str());
    return json{{"activity_id", a.activity_id},
                {"title", a.title},
                {"full_description", a.full_description},
                {"short_description", a.short_description},
                {"nace_codes", std::move(codes)},
                {"objective", a.objective}};
}

EsgActivity activity_from_json(const json& r)
{
    if (!r.is_object()) throw Error(ErrorKind::Parse, "activity record is not an object");
    EsgActivity a;
    try {
        a.activity_id = r.at("activity_id").get<std::string>();
        a.title = r.value("title", "");
        a.full_description = r.value("full_description", "");
        a.short_description = r.at("short_description").get<std::string>();
        a.objective = r.value("objective", "");
        if (r.contains("nace_codes")) {
            for (const auto& c : r.at("nace_codes")) a.nace_codes.push_back(NaceCode::parse(c.get<std::string>()));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
    return a;
}

Taxonomy parse_taxonomy(std::istream& in)
{
    Taxonomy tax;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto where = [&] { return "taxonomy line " + std::to_string(line_no) + ": "; };
        json r;
        try {
            r = json::parse(line);
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::Parse, where() + e.what());
        }
        if (r.is_object() && !r.contains("activity_id") && r.contains("version")) {
            tax.version = r.at("version").get<std::string>();
            continue;
        }
        try {
            tax.activities.push_back(activity_from_json(r));
        } catch (const Error& e) {
            throw Error(e.kind(), where() + e.what());
        }
    }
    validate(tax);
    return tax;
}

Taxonomy load_taxonomy(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open taxonomy " + path.string());
    return parse_taxonomy(in);
}

std::string serialize_taxonomy(const Taxonomy& taxonomy)
{
    std::string out = json{{"version", taxonomy.version}}.dump() + "\n";
    for (const auto& a : taxonomy.activities) out += to_json(a).dump() + "\n";
    return out;
}

std::vector<EsgActivity> select_activities(const Taxonomy& taxonomy,
                                           std::span<const NaceCode> codes)
{
    std::vector<EsgActivity> out;
    for (const auto& a : taxonomy.activities) {
        bool keep = codes.empty() || a.nace_codes.empty();
        for (std::size_t i = 0; !keep && i < a.nace_codes.size(); ++i) {
            for (const auto& c : codes) {
                if (a.nace_codes[i].prefixes(c) || c.prefixes(a.nace_codes[i])) {
                    keep = true;
                    break;
                }
            }
        }
        if (keep) out.push_back(a);
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& x, const auto& y) { return x.activity_id < y.activity_id; });
    return out;
}

}  // namespace esg
