#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Small shared helpers: UTF-8 handling, stable hashing, file IO and a
// platform-independent shuffle.
namespace esg {

namespace utf8 {

bool is_valid(std::string_view s);

// Number of code points. Input must be valid UTF-8.
std::size_t length(std::string_view s);

// Byte offset of every code point, plus a final entry equal to s.size().
std::vector<std::size_t> code_point_offsets(std::string_view s);

// Substring by code point positions [start, end).
std::string slice(std::string_view s, std::size_t start, std::size_t end);

}  // namespace utf8

// 64-bit FNV-1a. The seed is folded into the offset basis so distinct seeds
// give independent hash families.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0);
std::string hex64(std::uint64_t value);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);

// CRLF and lone CR become LF.
std::string normalize_newlines(std::string_view s);

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Fisher-Yates over mt19937_64 with rejection sampling. std::shuffle and
// std::uniform_int_distribution differ across standard libraries, this does not.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound);

template <typename T>
void stable_shuffle(std::span<T> items, std::mt19937_64& rng)
{
    for (std::size_t i = items.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace esg
