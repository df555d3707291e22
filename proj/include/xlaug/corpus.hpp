#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/unicode.hpp"

namespace xlaug {

// One gold answer: text plus its character offset into the context, counted
// in Unicode scalar values.
struct AnswerSpan {
    std::string text;
    std::size_t start = 0;
};

struct QAExample {
    std::string id;
    std::string context;
    std::string question;
    std::vector<AnswerSpan> answers;
    LanguageCode context_lang;
    LanguageCode question_lang;
    std::map<std::string, std::string> provenance;  // optional, carried through JSONL

    bool operator==(const QAExample& o) const {
        if (id != o.id || context != o.context || question != o.question ||
            context_lang != o.context_lang || question_lang != o.question_lang ||
            provenance != o.provenance || answers.size() != o.answers.size())
            return false;
        for (std::size_t i = 0; i < answers.size(); ++i)
            if (answers[i].text != o.answers[i].text || answers[i].start != o.answers[i].start)
                return false;
        return true;
    }
};

// The reversal of a QA example: generate the question from answer + context.
struct QGExample {
    std::string context;
    AnswerSpan answer;
    std::string target_question;
    LanguageCode target_lang;
};

enum class SourceKind { human, translated, synthetic };

inline std::string to_string(SourceKind k) {
    switch (k) {
        case SourceKind::human: return "human";
        case SourceKind::translated: return "translated";
        case SourceKind::synthetic: return "synthetic";
    }
    return "human";
}

inline SourceKind source_kind_from_string(const std::string& s) {
    if (s == "human") return SourceKind::human;
    if (s == "translated") return SourceKind::translated;
    if (s == "synthetic") return SourceKind::synthetic;
    throw ValidationError("unknown source_kind \"" + s + "\"");
}

struct Dataset {
    std::string name;
    SourceKind source_kind = SourceKind::human;
    std::vector<QAExample> examples;

    bool operator==(const Dataset& o) const {
        return name == o.name && source_kind == o.source_kind && examples == o.examples;
    }
};

namespace corpus {

struct Violation {
    std::string field;
    std::string rule;
    std::string message;
};

namespace detail {

inline bool trimmed_empty(const std::string& s) {
    for (char32_t cp : unicode::decode_utf8(s))
        if (!unicode::is_space(cp)) return false;
    return true;
}

inline bool span_matches(const std::u32string& context_cps, const std::u32string& text_cps,
                         std::size_t pos) {
    if (pos + text_cps.size() > context_cps.size()) return false;
    return context_cps.compare(pos, text_cps.size(), text_cps) == 0;
}

}  // namespace detail

// Checks every QAExample invariant; an empty result means the example is valid.
inline std::vector<Violation> validate(const QAExample& ex) {
    std::vector<Violation> out;
    if (ex.id.empty())
        out.push_back({"id", "non_empty", "example id is empty"});
    if (detail::trimmed_empty(ex.context))
        out.push_back({"context", "non_empty", "context is empty after trimming"});
    if (detail::trimmed_empty(ex.question))
        out.push_back({"question", "non_empty", "question is empty after trimming"});
    if (ex.answers.empty()) {
        out.push_back({"answers", "non_empty", "answers list is empty"});
        return out;
    }
    const std::u32string ctx = unicode::decode_utf8(ex.context);
    for (std::size_t i = 0; i < ex.answers.size(); ++i) {
        const auto& a = ex.answers[i];
        const std::u32string txt = unicode::decode_utf8(a.text);
        if (!detail::span_matches(ctx, txt, a.start)) {
            out.push_back({"answers[" + std::to_string(i) + "]", "substring",
                           "answer \"" + a.text + "\" at offset " + std::to_string(a.start) +
                               " does not match the context"});
        }
    }
    return out;
}

inline void require_valid(const QAExample& ex) {
    const auto violations = validate(ex);
    if (!violations.empty()) {
        std::string msg = "example \"" + ex.id + "\" invalid:";
        for (const auto& v : violations) msg += " [" + v.field + ": " + v.message + "]";
        throw ValidationError(msg);
    }
}

// Dataset invariant: every example valid, ids unique.
inline void require_valid(const Dataset& d) {
    std::set<std::string> ids;
    for (const auto& ex : d.examples) {
        require_valid(ex);
        if (!ids.insert(ex.id).second)
            throw ValidationError("dataset \"" + d.name + "\" has duplicate example id \"" +
                                  ex.id + "\"");
    }
}

namespace detail {

// Offsets in third-party SQuAD files are occasionally byte-based or slightly
// off. Accept an exact scalar-offset match, otherwise search a +/-16 scalar
// window around the stated offset and re-derive; ambiguity is an error.
inline std::size_t resolve_answer_start(const std::u32string& ctx, const std::string& text,
                                        long long stated, const std::string& example_id) {
    const std::u32string txt = unicode::decode_utf8(text);
    if (stated >= 0 && span_matches(ctx, txt, static_cast<std::size_t>(stated)))
        return static_cast<std::size_t>(stated);
    const long long lo = stated > 16 ? stated - 16 : 0;
    const long long hi = stated + 16;
    std::vector<std::size_t> hits;
    for (long long p = lo; p <= hi; ++p) {
        if (p < 0) continue;
        if (span_matches(ctx, txt, static_cast<std::size_t>(p))) hits.push_back(static_cast<std::size_t>(p));
    }
    if (hits.size() == 1) return hits[0];
    throw ValidationError("example \"" + example_id + "\": answer_start " + std::to_string(stated) +
                          (hits.empty() ? " does not match answer text \"" + text + "\" (no match in +/-16 window)"
                                        : " is ambiguous (multiple matches in +/-16 window)"));
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(what + ": " + e.what(), e.byte);
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failure on \"" + path + "\"");
    return ss.str();
}

}  // namespace detail

// Reads a SQuAD v1.1 file; language fields are stamped from the arguments.
inline Dataset load_squad_json(const std::string& path, LanguageCode context_lang,
                               LanguageCode question_lang) {
    const nlohmann::json root = detail::parse_json_text(detail::read_file(path), path);
    if (!root.is_object() || !root.contains("data") || !root["data"].is_array())
        throw ParseError(path + ": missing top-level \"data\" array");

    Dataset ds;
    ds.name = path;
    ds.source_kind = SourceKind::human;
    for (const auto& article : root["data"]) {
        for (const auto& para : article.value("paragraphs", nlohmann::json::array())) {
            const std::string context = para.value("context", std::string{});
            const std::u32string ctx_cps = unicode::decode_utf8(context);
            for (const auto& qa : para.value("qas", nlohmann::json::array())) {
                QAExample ex;
                ex.id = qa.value("id", std::string{});
                ex.context = context;
                ex.question = qa.value("question", std::string{});
                ex.context_lang = context_lang;
                ex.question_lang = question_lang;
                if (!qa.contains("answers") || !qa["answers"].is_array() || qa["answers"].empty())
                    throw ValidationError("example \"" + ex.id + "\" has no answers");
                for (const auto& ans : qa["answers"]) {
                    AnswerSpan span;
                    span.text = ans.value("text", std::string{});
                    const long long stated = ans.value("answer_start", -1LL);
                    span.start = detail::resolve_answer_start(ctx_cps, span.text, stated, ex.id);
                    ex.answers.push_back(std::move(span));
                }
                require_valid(ex);
                ds.examples.push_back(std::move(ex));
            }
        }
    }
    std::set<std::string> ids;
    for (const auto& ex : ds.examples)
        if (!ids.insert(ex.id).second)
            throw ValidationError(path + ": duplicate example id \"" + ex.id + "\"");
    return ds;
}

// MLQA split files are SQuAD-schema with the language pair encoded in the
// filename: test-context-{cl}-question-{ql}.json.
inline Dataset load_mlqa_file(const std::string& path) {
    const auto slash = path.find_last_of("/\\");
    const std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    const std::string ctx_marker = "context-";
    const std::string q_marker = "-question-";
    const auto cpos = base.find(ctx_marker);
    const auto qpos = base.find(q_marker);
    if (cpos == std::string::npos || qpos == std::string::npos || qpos < cpos + ctx_marker.size())
        throw UsageError("MLQA filename \"" + base +
                         "\" does not match test-context-{cl}-question-{ql}.json");
    const std::string cl = base.substr(cpos + ctx_marker.size(), qpos - cpos - ctx_marker.size());
    std::string ql = base.substr(qpos + q_marker.size());
    if (auto dot = ql.find('.'); dot != std::string::npos) ql = ql.substr(0, dot);
    return load_squad_json(path, lang(cl), lang(ql));
}

// Switches the generation target from the answer to the question. Multi-answer
// examples use the first gold answer.
inline std::vector<QGExample> reverse_to_qg(const Dataset& ds) {
    std::vector<QGExample> out;
    out.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) {
        require_valid(ex);
        QGExample qg;
        qg.context = ex.context;
        qg.answer = ex.answers.front();
        qg.target_question = ex.question;
        qg.target_lang = ex.question_lang;
        out.push_back(std::move(qg));
    }
    return out;
}

inline constexpr int kDatasetSchemaVersion = 1;

namespace detail {

inline nlohmann::json example_to_json(const QAExample& ex) {
    nlohmann::json j;
    j["id"] = ex.id;
    j["context"] = ex.context;
    j["question"] = ex.question;
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& a : ex.answers) answers.push_back({{"text", a.text}, {"start", a.start}});
    j["answers"] = std::move(answers);
    j["context_lang"] = ex.context_lang.str();
    j["question_lang"] = ex.question_lang.str();
    if (!ex.provenance.empty()) j["provenance"] = ex.provenance;
    return j;
}

inline QAExample example_from_json(const nlohmann::json& j) {
    QAExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.context = j.at("context").get<std::string>();
    ex.question = j.at("question").get<std::string>();
    for (const auto& a : j.at("answers")) {
        AnswerSpan span;
        span.text = a.at("text").get<std::string>();
        span.start = a.at("start").get<std::size_t>();
        ex.answers.push_back(std::move(span));
    }
    ex.context_lang = lang(j.at("context_lang").get<std::string>());
    ex.question_lang = lang(j.at("question_lang").get<std::string>());
    if (j.contains("provenance"))
        ex.provenance = j["provenance"].get<std::map<std::string, std::string>>();
    return ex;
}

}  // namespace detail

// One header object line, then one example object per line.
inline void save_jsonl(const Dataset& ds, const std::string& path) {
    std::set<std::string> ids;
    for (const auto& ex : ds.examples)
        if (!ids.insert(ex.id).second)
            throw ValidationError("dataset \"" + ds.name + "\": duplicate example id \"" + ex.id +
                                  "\"");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    nlohmann::json header;
    header["format"] = "xlaug-dataset";
    header["version"] = kDatasetSchemaVersion;
    header["name"] = ds.name;
    header["source_kind"] = to_string(ds.source_kind);
    out << header.dump() << "\n";
    for (const auto& ex : ds.examples) out << detail::example_to_json(ex).dump() << "\n";
    if (!out) throw IoError("write failure on \"" + path + "\"");
}

inline Dataset load_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    const nlohmann::json header = detail::parse_json_text(line, path + " header");
    if (header.value("format", std::string{}) != "xlaug-dataset")
        throw ParseError(path + ": not an xlaug-dataset JSONL file");
    if (header.value("version", -1) != kDatasetSchemaVersion)
        throw ValidationError(path + ": schema version mismatch (file " +
                              std::to_string(header.value("version", -1)) + ", expected " +
                              std::to_string(kDatasetSchemaVersion) + ")");
    Dataset ds;
    ds.name = header.value("name", std::string{});
    ds.source_kind = source_kind_from_string(header.value("source_kind", std::string{"human"}));
    std::set<std::string> ids;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        QAExample ex = detail::example_from_json(
            detail::parse_json_text(line, path + ":" + std::to_string(lineno)));
        require_valid(ex);
        if (!ids.insert(ex.id).second)
            throw ValidationError(path + ": duplicate example id \"" + ex.id + "\"");
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

}  // namespace corpus
}  // namespace xlaug
