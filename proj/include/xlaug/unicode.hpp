#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "xlaug/unicode_tables.hpp"

namespace xlaug::unicode {

inline constexpr char32_t kReplacement = 0xFFFD;

// Decodes UTF-8 into Unicode scalar values. Invalid sequences decode to
// U+FFFD, one replacement per bogus byte.
inline std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    const auto cont = [&](std::size_t j) {
        return j < s.size() && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80;
    };
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            out.push_back(c);
            i += 1;
        } else if ((c & 0xE0) == 0xC0 && cont(i + 1)) {
            char32_t cp = (char32_t(c & 0x1F) << 6) | (s[i + 1] & 0x3F);
            out.push_back(cp < 0x80 ? kReplacement : cp);
            i += 2;
        } else if ((c & 0xF0) == 0xE0 && cont(i + 1) && cont(i + 2)) {
            char32_t cp = (char32_t(c & 0x0F) << 12) | (char32_t(s[i + 1] & 0x3F) << 6) |
                          (s[i + 2] & 0x3F);
            if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) cp = kReplacement;
            out.push_back(cp);
            i += 3;
        } else if ((c & 0xF8) == 0xF0 && cont(i + 1) && cont(i + 2) && cont(i + 3)) {
            char32_t cp = (char32_t(c & 0x07) << 18) | (char32_t(s[i + 1] & 0x3F) << 12) |
                          (char32_t(s[i + 2] & 0x3F) << 6) | (s[i + 3] & 0x3F);
            if (cp < 0x10000 || cp > 0x10FFFF) cp = kReplacement;
            out.push_back(cp);
            i += 4;
        } else {
            out.push_back(kReplacement);
            i += 1;
        }
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode_utf8(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) append_utf8(out, cp);
    return out;
}

// Length in Unicode scalar values.
inline std::size_t scalar_length(std::string_view s) { return decode_utf8(s).size(); }

// Substring by scalar offsets; clamps to the end.
inline std::string substr_scalars(std::string_view s, std::size_t pos, std::size_t len) {
    const std::u32string cps = decode_utf8(s);
    if (pos >= cps.size()) return {};
    return encode_utf8(std::u32string_view(cps).substr(pos, len));
}

inline bool is_punct(char32_t cp) {
    using tables::kPunctuation;
    using tables::kPunctuationCount;
    const auto* end = kPunctuation + kPunctuationCount;
    const auto* it = std::upper_bound(kPunctuation, end, cp,
                                      [](char32_t v, const tables::CpRange& r) { return v < r.first; });
    return it != kPunctuation && cp <= (it - 1)->last;
}

inline bool is_space(char32_t cp) {
    using tables::kWhitespace;
    using tables::kWhitespaceCount;
    return std::binary_search(kWhitespace, kWhitespace + kWhitespaceCount, cp);
}

// Simple 1:1 lowercase; identity when no simple mapping exists.
inline char32_t to_lower(char32_t cp) {
    using tables::kLowercase;
    using tables::kLowercaseCount;
    const auto* end = kLowercase + kLowercaseCount;
    const auto* it = std::lower_bound(kLowercase, end, cp,
                                      [](const tables::CpPair& p, char32_t v) { return p.from < v; });
    return (it != end && it->from == cp) ? it->to : cp;
}

// True for cased capitals: codepoints whose simple lowercase differs.
inline bool is_upper(char32_t cp) { return to_lower(cp) != cp; }

inline bool is_cjk(char32_t cp) {
    return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF) ||
           (cp >= 0x2A700 && cp <= 0x2EBEF) || (cp >= 0x2F800 && cp <= 0x2FA1F);
}

inline bool is_ascii_digit(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

// Splits on Unicode whitespace; empty tokens never appear.
inline std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    const std::u32string cps = decode_utf8(s);
    std::u32string cur;
    for (char32_t cp : cps) {
        if (is_space(cp)) {
            if (!cur.empty()) {
                out.push_back(encode_utf8(cur));
                cur.clear();
            }
        } else {
            cur.push_back(cp);
        }
    }
    if (!cur.empty()) out.push_back(encode_utf8(cur));
    return out;
}

}  // namespace xlaug::unicode
