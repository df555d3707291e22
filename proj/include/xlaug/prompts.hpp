#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"

namespace xlaug::prompts {

enum class PromptTask { qa, qg, qg_controlled };

inline std::string to_string(PromptTask t) {
    switch (t) {
        case PromptTask::qa: return "qa";
        case PromptTask::qg: return "qg";
        case PromptTask::qg_controlled: return "qg_controlled";
    }
    throw ValidationError("unknown prompt task");
}

inline PromptTask prompt_task_from_string(const std::string& s) {
    if (s == "qa") return PromptTask::qa;
    if (s == "qg") return PromptTask::qg;
    if (s == "qg_controlled") return PromptTask::qg_controlled;
    throw ValidationError("unknown prompt task \"" + s + "\"");
}

// How the target-language control token is rendered: a dedicated special
// token per language, or the language's own name word.
enum class LangTokenMode { special_token, language_word };

struct SpecialTokens {
    std::string sep = "<SEP>";
    // Configured training-language set; exactly these are emittable in
    // special_token mode.
    std::map<LanguageCode, std::string> lang_tokens;
};

inline std::string lang_control_token(LanguageCode lc) { return "<LANG:" + lc.str() + ">"; }

template <typename Range>
inline SpecialTokens make_special_tokens(const Range& training_langs) {
    SpecialTokens st;
    std::set<std::string> seen;
    for (LanguageCode lc : training_langs) {
        st.lang_tokens[lc] = lang_control_token(lc);
        if (!seen.insert(st.lang_tokens[lc]).second)
            throw ValidationError("duplicate language control token for " + lc.str());
    }
    return st;
}

inline SpecialTokens make_special_tokens(std::initializer_list<LanguageCode> training_langs) {
    return make_special_tokens<std::initializer_list<LanguageCode>>(training_langs);
}

struct PromptMeta {
    std::string example_id;  // empty when the source example carries no id
    std::optional<LanguageCode> context_lang;
    std::optional<LanguageCode> question_lang;  // for QG tasks: the target language
};

struct PromptedPair {
    std::string source;
    std::string target;
    PromptTask task = PromptTask::qa;
    PromptMeta meta;
};

namespace detail {

inline void require_sep_free(const std::string& payload, const std::string& sep,
                             const char* field) {
    if (payload.find(sep) != std::string::npos)
        throw ValidationError(std::string("separator token appears inside ") + field);
}

}  // namespace detail

// Resolves the language-control prefix. special_token mode only emits tokens
// for the configured training languages; language_word mode renders any
// supported language's name word.
inline std::string control_token_for(LanguageCode target_lang, const SpecialTokens& tokens,
                                     LangTokenMode mode) {
    if (mode == LangTokenMode::special_token) {
        auto it = tokens.lang_tokens.find(target_lang);
        if (it == tokens.lang_tokens.end())
            throw ValidationError("no control token configured for language " + target_lang.str());
        return it->second;
    }
    return language_word(target_lang);
}

// Inference-time source encodings; no target question required.
inline std::string qa_source(const std::string& question, const std::string& context,
                             const SpecialTokens& tokens) {
    if (question.empty()) throw ValidationError("QA question text is empty");
    detail::require_sep_free(question, tokens.sep, "question");
    detail::require_sep_free(context, tokens.sep, "context");
    return question + " " + tokens.sep + " " + context;
}

inline std::string qg_source(const std::string& answer, const std::string& context,
                             const SpecialTokens& tokens) {
    if (answer.empty()) throw ValidationError("QG answer text is empty");
    detail::require_sep_free(answer, tokens.sep, "answer");
    detail::require_sep_free(context, tokens.sep, "context");
    return answer + " " + tokens.sep + " " + context;
}

inline std::string qg_controlled_source(const std::string& answer, const std::string& context,
                                        LanguageCode target_lang, const SpecialTokens& tokens,
                                        LangTokenMode mode = LangTokenMode::special_token) {
    return control_token_for(target_lang, tokens, mode) + " " + tokens.sep + " " +
           qg_source(answer, context, tokens);
}

// source = question ⊕ " <SEP> " ⊕ context; target = first gold answer.
inline PromptedPair encode_qa(const QAExample& ex, const SpecialTokens& tokens) {
    corpus::require_valid(ex);
    PromptedPair p;
    p.source = qa_source(ex.question, ex.context, tokens);
    p.target = ex.answers.front().text;
    p.task = PromptTask::qa;
    p.meta.example_id = ex.id;
    p.meta.context_lang = ex.context_lang;
    p.meta.question_lang = ex.question_lang;
    return p;
}

// source = answer ⊕ " <SEP> " ⊕ context; target = the question.
inline PromptedPair encode_qg(const QGExample& ex, const SpecialTokens& tokens) {
    if (ex.target_question.empty()) throw ValidationError("QG target question is empty");
    PromptedPair p;
    p.source = qg_source(ex.answer.text, ex.context, tokens);
    p.target = ex.target_question;
    p.task = PromptTask::qg;
    p.meta.question_lang = ex.target_lang;
    return p;
}

// source = <control token> ⊕ " <SEP> " ⊕ answer ⊕ " <SEP> " ⊕ context.
// special_token mode only emits tokens for the configured training languages;
// language_word mode renders any supported language's name word.
inline PromptedPair encode_qg_controlled(const QGExample& ex, LanguageCode target_lang,
                                         const SpecialTokens& tokens, LangTokenMode mode) {
    if (ex.target_question.empty()) throw ValidationError("QG target question is empty");
    PromptedPair p;
    p.source = qg_controlled_source(ex.answer.text, ex.context, target_lang, tokens, mode);
    p.target = ex.target_question;
    p.task = PromptTask::qg_controlled;
    p.meta.question_lang = target_lang;
    return p;
}

// Inverse of the encoders: splits on " <SEP> " into the task's exact arity
// (2 for qa/qg, 3 for qg_controlled).
inline std::vector<std::string> parse_source(const std::string& source, PromptTask task,
                                             const SpecialTokens& tokens) {
    const std::string delim = " " + tokens.sep + " ";
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        std::size_t hit = source.find(delim, pos);
        if (hit == std::string::npos) {
            parts.push_back(source.substr(pos));
            break;
        }
        parts.push_back(source.substr(pos, hit - pos));
        pos = hit + delim.size();
    }
    const std::size_t want = task == PromptTask::qg_controlled ? 3 : 2;
    if (parts.size() != want)
        throw ParseError("expected " + std::to_string(want) + " <SEP>-separated components, got " +
                         std::to_string(parts.size()));
    return parts;
}

inline std::vector<std::string> parse_source(const std::string& source, PromptTask task) {
    return parse_source(source, task, SpecialTokens{});
}

inline nlohmann::json pair_to_json(const PromptedPair& p) {
    nlohmann::json meta = nlohmann::json::object();
    if (!p.meta.example_id.empty()) meta["example_id"] = p.meta.example_id;
    if (p.meta.context_lang) meta["context_lang"] = p.meta.context_lang->str();
    if (p.meta.question_lang) meta["question_lang"] = p.meta.question_lang->str();
    return nlohmann::json{
        {"source", p.source}, {"target", p.target}, {"task", to_string(p.task)}, {"meta", meta}};
}

inline PromptedPair pair_from_json(const nlohmann::json& j) {
    PromptedPair p;
    p.source = j.at("source").get<std::string>();
    p.target = j.at("target").get<std::string>();
    p.task = prompt_task_from_string(j.at("task").get<std::string>());
    if (j.contains("meta")) {
        const auto& m = j.at("meta");
        if (m.contains("example_id")) p.meta.example_id = m.at("example_id").get<std::string>();
        if (m.contains("context_lang")) p.meta.context_lang = lang(m.at("context_lang").get<std::string>());
        if (m.contains("question_lang"))
            p.meta.question_lang = lang(m.at("question_lang").get<std::string>());
    }
    return p;
}

inline void save_pairs_jsonl(const std::vector<PromptedPair>& pairs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    for (const auto& p : pairs) out << pair_to_json(p).dump() << "\n";
    if (!out) throw IoError("failed writing " + path);
}

inline std::vector<PromptedPair> load_pairs_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::vector<PromptedPair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(pair_from_json(corpus::detail::parse_json_text(line, path)));
    }
    return out;
}

}  // namespace xlaug::prompts
