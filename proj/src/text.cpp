#include "absaforge/text.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

namespace absaforge::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

char lower(char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

struct CodePoint {
    char32_t value = 0;
    std::size_t length = 1;
};

CodePoint decode(std::string_view s, std::size_t pos) {
    auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3 : (b0 >> 3) == 0x1E ? 4 : 1;
    if (pos + len > s.size()) return {b0, 1};
    char32_t cp = len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (std::size_t k = 1; k < len; ++k) {
        auto b = static_cast<unsigned char>(s[pos + k]);
        if ((b & 0xC0) != 0x80) return {b0, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

std::size_t prev_start(std::string_view s, std::size_t pos) {
    std::size_t p = pos - 1;
    while (p > 0 && (static_cast<unsigned char>(s[p]) & 0xC0) == 0x80) --p;
    return p;
}

bool is_word_code_point(char32_t cp) {
    if (cp < 0x80) return std::isalnum(static_cast<int>(cp)) != 0;
    if (cp == 0x00A0 || cp == 0x00AB || cp == 0x00BB || cp == 0x00BF || cp == 0x00A1) return false;
    if (cp >= 0x2000 && cp <= 0x206F) return false;  // general punctuation
    if (cp >= 0x3000 && cp <= 0x303F) return false;
    if (cp >= 0xFF01 && cp <= 0xFF0F) return false;
    return true;
}

bool plain_word_char(std::string_view s, std::size_t pos) {
    return is_word_code_point(decode(s, pos).value);
}

}  // namespace

std::string_view trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return s.substr(b, e - b);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), lower);
    return out;
}

std::string to_upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](char c) {
        return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
    });
    return out;
}

std::string normalize_space(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : trim(s)) {
        if (is_space(c)) {
            pending = true;
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

std::string term_key(std::string_view s) { return to_lower(normalize_space(s)); }

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view s) {
    auto lines = split(s, '\n');
    for (auto& l : lines) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
    }
    return lines;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (lower(s[i]) != lower(prefix[i])) return false;
    }
    return true;
}

bool is_word_char_at(std::string_view s, std::size_t pos) {
    if (pos >= s.size()) return false;
    if (s[pos] == '-') {
        // A hyphen joins two word characters into one token.
        return pos > 0 && pos + 1 < s.size() && plain_word_char(s, prev_start(s, pos)) &&
               plain_word_char(s, pos + 1);
    }
    return plain_word_char(s, pos);
}

std::optional<Span> find_word_bounded(std::string_view haystack, std::string_view needle) {
    const std::string pattern = normalize_space(needle);
    if (pattern.empty()) return std::nullopt;
    const bool word_start = is_word_char_at(pattern, 0);
    const bool word_end = is_word_char_at(pattern, prev_start(pattern, pattern.size()));

    for (std::size_t i = 0; i < haystack.size(); ++i) {
        if (word_start && i > 0 && is_word_char_at(haystack, prev_start(haystack, i))) continue;
        std::size_t h = i;
        std::size_t p = 0;
        bool ok = true;
        while (p < pattern.size()) {
            if (h >= haystack.size()) {
                ok = false;
                break;
            }
            if (pattern[p] == ' ') {
                if (!is_space(haystack[h])) {
                    ok = false;
                    break;
                }
                while (h < haystack.size() && is_space(haystack[h])) ++h;
                ++p;
                continue;
            }
            if (lower(pattern[p]) != lower(haystack[h])) {
                ok = false;
                break;
            }
            ++p;
            ++h;
        }
        if (!ok) continue;
        if (word_end && is_word_char_at(haystack, h)) continue;
        return Span{i, h};
    }
    return std::nullopt;
}

std::string python_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        const auto& item = items[i];
        const bool has_single = item.find('\'') != std::string::npos;
        const bool has_double = item.find('"') != std::string::npos;
        const char quote = (has_single && !has_double) ? '"' : '\'';
        out.push_back(quote);
        for (char c : item) {
            if (c == quote || c == '\\') out.push_back('\\');
            out.push_back(c);
        }
        out.push_back(quote);
    }
    out += "]";
    return out;
}

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace absaforge::text
