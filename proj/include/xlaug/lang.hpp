#pragma once

#include <array>
#include <compare>
#include <functional>
#include <string>
#include <string_view>

#include "xlaug/errors.hpp"

namespace xlaug {

// Two-letter lowercase ISO-639-1 identifier.
class LanguageCode {
public:
    LanguageCode() : cc_{'x', 'x'} {}

    static LanguageCode parse(std::string_view s) {
        if (s.size() != 2 || !is_lower_ascii(s[0]) || !is_lower_ascii(s[1]))
            throw ValidationError("language code must be exactly two lowercase ASCII letters, got \"" +
                                  std::string(s) + "\"");
        LanguageCode lc;
        lc.cc_ = {s[0], s[1]};
        return lc;
    }

    std::string str() const { return std::string(cc_.data(), 2); }

    auto operator<=>(const LanguageCode&) const = default;

private:
    static bool is_lower_ascii(char c) { return c >= 'a' && c <= 'z'; }
    std::array<char, 2> cc_;
};

inline LanguageCode lang(std::string_view s) { return LanguageCode::parse(s); }

// The MLQA language set the training-side corpora cover.
inline const std::array<LanguageCode, 7>& mlqa_languages() {
    static const std::array<LanguageCode, 7> v = {lang("en"), lang("ar"), lang("de"), lang("es"),
                                                  lang("hi"), lang("vi"), lang("zh")};
    return v;
}

// Languages used only for unseen-language evaluation.
inline const std::array<LanguageCode, 3>& unseen_eval_languages() {
    static const std::array<LanguageCode, 3> v = {lang("fr"), lang("it"), lang("ko")};
    return v;
}

inline bool is_mlqa_language(LanguageCode lc) {
    for (auto m : mlqa_languages())
        if (m == lc) return true;
    return false;
}

inline bool is_unseen_eval_language(LanguageCode lc) {
    for (auto m : unseen_eval_languages())
        if (m == lc) return true;
    return false;
}

// Natural-language name used by the language-word prompt mode.
inline std::string language_word(LanguageCode lc) {
    const std::string c = lc.str();
    if (c == "en") return "English";
    if (c == "es") return "Español";
    if (c == "de") return "Deutsch";
    if (c == "ar") return "العربية";
    if (c == "hi") return "हिन्दी";
    if (c == "vi") return "Tiếng Việt";
    if (c == "zh") return "中文";
    if (c == "fr") return "Français";
    if (c == "it") return "Italiano";
    if (c == "ko") return "한국어";
    throw ValidationError("no language-word form registered for \"" + c + "\"");
}

}  // namespace xlaug

template <>
struct std::hash<xlaug::LanguageCode> {
    std::size_t operator()(const xlaug::LanguageCode& lc) const noexcept {
        const std::string s = lc.str();
        return std::hash<std::string>{}(s);
    }
};
