#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/unicode.hpp"

namespace xlaug::metrics {

enum class Tokenization { whitespace, mixed_script_character };

// Per-language normalization rules, mirroring the reference multilingual QA
// evaluation script. Total over all languages: unknown codes fall back to
// whitespace tokenization with no article stripping.
struct NormalizationRules {
    LanguageCode language;
    std::set<std::string> articles;
    Tokenization tokenization = Tokenization::whitespace;
    bool strip_arabic_article_prefix = false;
};

inline NormalizationRules rules_for(LanguageCode lc) {
    NormalizationRules r;
    r.language = lc;
    const std::string c = lc.str();
    if (c == "en") {
        r.articles = {"a", "an", "the"};
    } else if (c == "es") {
        r.articles = {"un", "una", "unos", "unas", "el", "la", "los", "las"};
    } else if (c == "de") {
        r.articles = {"ein", "eine", "einen", "einem", "eines", "einer",
                      "der", "die", "das", "den", "dem", "des"};
    } else if (c == "vi") {
        r.articles = {"của", "là", "cái", "chiếc", "những"};
    } else if (c == "ar") {
        r.strip_arabic_article_prefix = true;
    } else if (c == "zh") {
        r.tokenization = Tokenization::mixed_script_character;
    }
    return r;
}

namespace detail {

// "ال" (alef + lam)
inline const std::u32string& arabic_article() {
    static const std::u32string v = U"ال";
    return v;
}

inline std::vector<std::u32string> split_cjk(const std::u32string& token) {
    std::vector<std::u32string> out;
    std::u32string run;
    for (char32_t cp : token) {
        if (unicode::is_cjk(cp)) {
            if (!run.empty()) {
                out.push_back(run);
                run.clear();
            }
            out.push_back(std::u32string(1, cp));
        } else {
            run.push_back(cp);
        }
    }
    if (!run.empty()) out.push_back(run);
    return out;
}

}  // namespace detail

// Pipeline: lowercase -> strip punctuation -> whitespace tokens -> article
// handling -> (zh) per-character CJK tokens. May return an empty list.
inline std::vector<std::string> normalize_answer(const std::string& text, LanguageCode lc) {
    const NormalizationRules rules = rules_for(lc);
    std::u32string cps = unicode::decode_utf8(text);
    for (auto& cp : cps) cp = unicode::to_lower(cp);
    for (auto& cp : cps)
        if (unicode::is_punct(cp)) cp = U' ';

    std::vector<std::u32string> tokens;
    std::u32string cur;
    for (char32_t cp : cps) {
        if (unicode::is_space(cp)) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(cp);
        }
    }
    if (!cur.empty()) tokens.push_back(cur);

    std::vector<std::u32string> kept;
    kept.reserve(tokens.size());
    if (rules.strip_arabic_article_prefix) {
        for (auto& t : tokens) {
            if (t.size() > 2 && t.compare(0, 2, detail::arabic_article()) == 0)
                kept.push_back(t.substr(2));
            else
                kept.push_back(t);
        }
    } else if (!rules.articles.empty()) {
        for (auto& t : tokens)
            if (!rules.articles.count(unicode::encode_utf8(t))) kept.push_back(t);
    } else {
        kept = std::move(tokens);
    }

    std::vector<std::string> out;
    if (rules.tokenization == Tokenization::mixed_script_character) {
        for (const auto& t : kept)
            for (const auto& piece : detail::split_cjk(t)) out.push_back(unicode::encode_utf8(piece));
    } else {
        out.reserve(kept.size());
        for (const auto& t : kept) out.push_back(unicode::encode_utf8(t));
    }
    return out;
}

namespace detail {

inline double f1_from_tokens(const std::vector<std::string>& pred,
                             const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    if (pred.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string, int> gold_counts;
    for (const auto& t : gold) ++gold_counts[t];
    long long common = 0;
    for (const auto& t : pred) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            ++common;
            --it->second;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace detail

// Token-bag F1, maximized over gold answers.
inline double f1(const std::string& prediction, const std::vector<std::string>& golds,
                 LanguageCode lc) {
    if (golds.empty()) throw ValidationError("f1 requires at least one gold answer");
    const auto pred = normalize_answer(prediction, lc);
    double best = 0.0;
    for (const auto& g : golds) best = std::max(best, detail::f1_from_tokens(pred, normalize_answer(g, lc)));
    return best;
}

// 1 iff the normalized token sequence equals that of some gold answer.
inline double exact_match(const std::string& prediction, const std::vector<std::string>& golds,
                          LanguageCode lc) {
    if (golds.empty()) throw ValidationError("exact_match requires at least one gold answer");
    const auto pred = normalize_answer(prediction, lc);
    for (const auto& g : golds)
        if (pred == normalize_answer(g, lc)) return 1.0;
    return 0.0;
}

struct PairScore {
    LanguageCode context_lang;
    LanguageCode question_lang;
    double f1 = 0.0;
    double exact_match = 0.0;
    std::size_t n = 0;
};

struct EvalReport {
    std::vector<PairScore> pair_scores;
    double macro_f1 = 0.0;
    double macro_em = 0.0;
};

// Groups by (context_lang, question_lang); per-pair means, then an unweighted
// macro mean over the pairs present.
inline EvalReport evaluate(const std::vector<QAExample>& examples,
                           const std::map<std::string, std::string>& predictions) {
    struct Acc {
        double f1_sum = 0.0;
        double em_sum = 0.0;
        std::size_t n = 0;
    };
    std::map<std::pair<LanguageCode, LanguageCode>, Acc> groups;
    for (const auto& ex : examples) {
        auto it = predictions.find(ex.id);
        if (it == predictions.end())
            throw ValidationError("missing prediction for example id \"" + ex.id + "\"");
        std::vector<std::string> golds;
        golds.reserve(ex.answers.size());
        for (const auto& a : ex.answers) golds.push_back(a.text);
        Acc& acc = groups[{ex.context_lang, ex.question_lang}];
        acc.f1_sum += f1(it->second, golds, ex.context_lang);
        acc.em_sum += exact_match(it->second, golds, ex.context_lang);
        acc.n += 1;
    }
    EvalReport report;
    for (const auto& [key, acc] : groups) {
        PairScore ps;
        ps.context_lang = key.first;
        ps.question_lang = key.second;
        ps.n = acc.n;
        ps.f1 = acc.f1_sum / static_cast<double>(acc.n);
        ps.exact_match = acc.em_sum / static_cast<double>(acc.n);
        report.pair_scores.push_back(ps);
    }
    if (!report.pair_scores.empty()) {
        double f = 0.0, e = 0.0;
        for (const auto& ps : report.pair_scores) {
            f += ps.f1;
            e += ps.exact_match;
        }
        report.macro_f1 = f / static_cast<double>(report.pair_scores.size());
        report.macro_em = e / static_cast<double>(report.pair_scores.size());
    }
    return report;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["pairs"] = nlohmann::json::array();
    for (const auto& ps : r.pair_scores)
        j["pairs"].push_back({{"cl", ps.context_lang.str()},
                              {"ql", ps.question_lang.str()},
                              {"f1", ps.f1},
                              {"em", ps.exact_match},
                              {"n", ps.n}});
    j["macro_f1"] = r.macro_f1;
    j["macro_em"] = r.macro_em;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    for (const auto& p : j.at("pairs")) {
        PairScore ps;
        ps.context_lang = lang(p.at("cl").get<std::string>());
        ps.question_lang = lang(p.at("ql").get<std::string>());
        ps.f1 = p.at("f1").get<double>();
        ps.exact_match = p.at("em").get<double>();
        ps.n = p.at("n").get<std::size_t>();
        r.pair_scores.push_back(ps);
    }
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.macro_em = j.at("macro_em").get<double>();
    return r;
}

// Flat CSV, one row per language pair.
inline std::string report_to_csv(const EvalReport& r) {
    std::string out = "context_lang,question_lang,f1,em,n\n";
    for (const auto& ps : r.pair_scores) {
        out += ps.context_lang.str() + "," + ps.question_lang.str() + "," +
               nlohmann::json(ps.f1).dump() + "," + nlohmann::json(ps.exact_match).dump() + "," +
               std::to_string(ps.n) + "\n";
    }
    return out;
}

}  // namespace xlaug::metrics
