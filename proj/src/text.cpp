#include "esg/text.hpp"

#include "esg/error.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace esg {

namespace utf8 {

namespace {

// Length of the sequence introduced by `lead`, or 0 when `lead` cannot start one.
int sequence_length(unsigned char lead)
{
    if (lead < 0x80) return 1;
    if (lead >= 0xC2 && lead <= 0xDF) return 2;
    if (lead >= 0xE0 && lead <= 0xEF) return 3;
    if (lead >= 0xF0 && lead <= 0xF4) return 4;
    return 0;
}

bool is_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

}  // namespace

bool is_valid(std::string_view s)
{
    std::size_t i = 0;
    while (i < s.size()) {
        auto lead = static_cast<unsigned char>(s[i]);
        int len = sequence_length(lead);
        if (len == 0 || i + len > s.size()) return false;
        for (int k = 1; k < len; ++k)
            if (!is_continuation(static_cast<unsigned char>(s[i + k]))) return false;
        if (len >= 3) {
            auto second = static_cast<unsigned char>(s[i + 1]);
            if (lead == 0xE0 && second < 0xA0) return false;  // overlong
            if (lead == 0xED && second > 0x9F) return false;  // surrogates
            if (lead == 0xF0 && second < 0x90) return false;  // overlong
            if (lead == 0xF4 && second > 0x8F) return false;  // > U+10FFFF
        }
        i += static_cast<std::size_t>(len);
    }
    return true;
}

std::size_t length(std::string_view s)
{
    std::size_t n = 0;
    for (char c : s)
        if (!is_continuation(static_cast<unsigned char>(c))) ++n;
    return n;
}

std::vector<std::size_t> code_point_offsets(std::string_view s)
{
    std::vector<std::size_t> offsets;
    offsets.reserve(s.size() + 1);
    for (std::size_t i = 0; i < s.size(); ++i)
        if (!is_continuation(static_cast<unsigned char>(s[i]))) offsets.push_back(i);
    offsets.push_back(s.size());
    return offsets;
}

std::string slice(std::string_view s, std::size_t start, std::size_t end)
{
    if (start > end) throw Error(ErrorKind::InvalidArgument, "slice start after end");
    std::size_t cp = 0;
    std::size_t byte_start = s.size();
    std::size_t byte_end = s.size();
    bool have_start = false;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        bool boundary = i == s.size() || !is_continuation(static_cast<unsigned char>(s[i]));
        if (!boundary) continue;
        if (cp == start && !have_start) {
            byte_start = i;
            have_start = true;
        }
        if (cp == end) {
            byte_end = i;
            break;
        }
        ++cp;
        if (i == s.size()) break;
    }
    if (!have_start || cp < end)
        throw Error(ErrorKind::InvalidArgument, "slice [" + std::to_string(start) + ", " +
                                                    std::to_string(end) + ") out of range");
    return std::string(s.substr(byte_start, byte_end - byte_start));
}

}  // namespace utf8

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed)
{
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

std::string to_lower_ascii(std::string_view s)
{
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::string trim(std::string_view s)
{
    constexpr std::string_view ws = " \t\r\n\f\v";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::string normalize_newlines(std::string_view s)
{
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorKind::Io, "read failed: " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    if (bound <= 1) return 0;
    // Reject the top partial block so every residue is equally likely.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace esg
