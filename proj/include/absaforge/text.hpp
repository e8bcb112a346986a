#pragma once

// Small string helpers shared by the parsers, the inclusion gate and the
// scorer. All functions operate on UTF-8 bytes; case folding is ASCII-only.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace absaforge::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);

/// Collapse internal whitespace runs to one space and trim.
std::string normalize_space(std::string_view s);

/// Lowercased, whitespace-normalized key used for term comparison.
std::string term_key(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Word characters are ASCII alphanumerics plus any non-ASCII code point
/// that is not a common typographic punctuation mark.
bool is_word_char_at(std::string_view s, std::size_t pos);

/// Byte range of a match.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// First case-insensitive occurrence of `needle` in `haystack` whose
/// boundaries both fall between a word and a non-word character (or the
/// string edge). Internal whitespace in the needle matches any whitespace
/// run in the haystack.
std::optional<Span> find_word_bounded(std::string_view haystack, std::string_view needle);

/// Python-style repr list: ['a', 'b']. Items containing a single quote are
/// double-quoted; items with both quote kinds are single-quoted and escaped.
std::string python_list(const std::vector<std::string>& items);

/// FNV-1a 64-bit.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace absaforge::text
