#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "xlaug/augment.hpp"
#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/metrics.hpp"
#include "xlaug/pipeline.hpp"
#include "xlaug/prompts.hpp"
#include "xlaug/seq2seq.hpp"
#include "xlaug/toybench.hpp"
#include "xlaug/wikiscrap.hpp"

namespace xlaug::cli {

// A fully resolved invocation: every option of the chosen subcommand with its
// final value after precedence (flag > config file > environment > default).
struct CommandConfig {
    std::string command;
    nlohmann::json parameters = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Option table: one declarative spec per flag, shared by the CLI parser, the
// config-file merger, and the environment fallback.
// ---------------------------------------------------------------------------

namespace detail {

enum class Kind { text, path, integer, real, toggle, text_list, path_list, int_list };

struct OptSpec {
    std::string name;  // long flag without the leading dashes
    Kind kind = Kind::text;
    nlohmann::json def;  // null = no default (absent unless provided)
    std::string help;
    bool required = false;
    std::string env;  // optional environment-variable fallback
};

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        std::size_t next = s.find(',', pos);
        if (next == std::string::npos) next = s.size();
        if (next > pos) out.push_back(s.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

inline std::string resolve_relative(const std::string& value,
                                    const std::filesystem::path& base) {
    if (base.empty() || !std::filesystem::path(value).is_relative()) return value;
    return (base / value).string();
}

// Type-checks one config-file value against its spec; paths are resolved
// relative to the config file's directory.
inline nlohmann::json coerce_config_value(const OptSpec& spec, const nlohmann::json& v,
                                          const std::filesystem::path& cfg_dir) {
    auto mismatch = [&]() -> nlohmann::json {
        throw UsageError("config key \"" + spec.name + "\": type mismatch (got " +
                         std::string(v.type_name()) + ")");
    };
    switch (spec.kind) {
        case Kind::text:
            return v.is_string() ? v : mismatch();
        case Kind::path:
            if (!v.is_string()) return mismatch();
            return resolve_relative(v.get<std::string>(), cfg_dir);
        case Kind::integer:
            if (v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0))
                return v.get<std::uint64_t>();
            return mismatch();
        case Kind::real:
            return v.is_number() ? nlohmann::json(v.get<double>()) : mismatch();
        case Kind::toggle:
            return v.is_boolean() ? v : mismatch();
        case Kind::text_list:
        case Kind::path_list: {
            std::vector<std::string> items;
            if (v.is_string()) {
                items = split_commas(v.get<std::string>());
            } else if (v.is_array()) {
                for (const auto& e : v)
                    if (e.is_string())
                        items.push_back(e.get<std::string>());
                    else
                        return mismatch();
            } else {
                return mismatch();
            }
            if (spec.kind == Kind::path_list)
                for (auto& item : items) item = resolve_relative(item, cfg_dir);
            return items;
        }
        case Kind::int_list: {
            std::vector<std::uint64_t> items;
            if (v.is_string()) {
                for (const auto& part : split_commas(v.get<std::string>())) {
                    try {
                        items.push_back(std::stoull(part));
                    } catch (const std::exception&) {
                        return mismatch();
                    }
                }
            } else if (v.is_array()) {
                for (const auto& e : v)
                    if (e.is_number_unsigned() ||
                        (e.is_number_integer() && e.get<std::int64_t>() >= 0))
                        items.push_back(e.get<std::uint64_t>());
                    else
                        return mismatch();
            } else {
                return mismatch();
            }
            return items;
        }
    }
    return mismatch();
}

inline nlohmann::json coerce_env_value(const OptSpec& spec, const std::string& raw) {
    try {
        switch (spec.kind) {
            case Kind::text:
            case Kind::path:
                return raw;
            case Kind::integer:
                return static_cast<std::uint64_t>(std::stoull(raw));
            case Kind::real:
                return std::stod(raw);
            case Kind::toggle:
                return raw == "1" || raw == "true" || raw == "yes";
            case Kind::text_list:
            case Kind::path_list:
                return split_commas(raw);
            case Kind::int_list: {
                std::vector<std::uint64_t> items;
                for (const auto& part : split_commas(raw)) items.push_back(std::stoull(part));
                return items;
            }
        }
    } catch (const std::exception&) {
        throw UsageError("environment variable " + spec.env + ": cannot parse \"" + raw +
                         "\" for --" + spec.name);
    }
    throw UsageError("environment variable " + spec.env + " is not supported here");
}

// Binds one subcommand's specs to CLI11 and resolves final values after the
// parse (precedence: flag > config file > environment > default).
class ArgTable {
public:
    ArgTable(CLI::App* app, std::vector<OptSpec> specs)
        : app_(app), specs_(std::move(specs)) {
        for (const auto& s : specs_) bind(s);
        opts_["config"] = app_->add_option_function<std::string>(
            "--config",
            [this](const std::string& v) { config_path_ = v; },
            "JSON config file; flags override file values");
    }

    nlohmann::json resolve() const {
        nlohmann::json file = nlohmann::json::object();
        std::filesystem::path cfg_dir;
        if (!config_path_.empty()) {
            std::ifstream in(config_path_, std::ios::binary);
            if (!in) throw UsageError("cannot open config file \"" + config_path_ + "\"");
            std::ostringstream buf;
            buf << in.rdbuf();
            try {
                file = corpus::detail::parse_json_text(buf.str(), config_path_);
            } catch (const Error& e) {
                throw UsageError(std::string("config file: ") + e.what());
            }
            if (!file.is_object())
                throw UsageError("config file \"" + config_path_ + "\" must hold a JSON object");
            cfg_dir = std::filesystem::path(config_path_).parent_path();
            for (const auto& [key, value] : file.items()) {
                (void)value;
                if (!spec_of(key)) throw UsageError("unknown config key \"" + key + "\"");
            }
        }

        nlohmann::json out = nlohmann::json::object();
        for (const auto& spec : specs_) {
            if (opts_.at(spec.name)->count() > 0) {
                out[spec.name] = flag_values_.at(spec.name);
            } else if (file.contains(spec.name)) {
                out[spec.name] = coerce_config_value(spec, file.at(spec.name), cfg_dir);
            } else if (!spec.env.empty() && std::getenv(spec.env.c_str()) != nullptr) {
                out[spec.name] = coerce_env_value(spec, std::getenv(spec.env.c_str()));
            } else {
                out[spec.name] = spec.def;
            }
            if (spec.required && out[spec.name].is_null())
                throw UsageError("missing required option --" + spec.name + " for command \"" +
                                 app_->get_name() + "\"");
        }
        return out;
    }

private:
    const OptSpec* spec_of(const std::string& name) const {
        for (const auto& s : specs_)
            if (s.name == name) return &s;
        return nullptr;
    }

    void bind(const OptSpec& s) {
        const std::string flag = "--" + s.name;
        std::string help = s.help;
        if (!s.def.is_null()) help += " [default: " + s.def.dump() + "]";
        if (s.required) help += " (required)";
        switch (s.kind) {
            case Kind::text:
            case Kind::path:
                opts_[s.name] = app_->add_option_function<std::string>(
                    flag, [this, n = s.name](const std::string& v) { flag_values_[n] = v; },
                    help);
                break;
            case Kind::integer:
                opts_[s.name] = app_->add_option_function<std::uint64_t>(
                    flag, [this, n = s.name](const std::uint64_t& v) { flag_values_[n] = v; },
                    help);
                break;
            case Kind::real:
                opts_[s.name] = app_->add_option_function<double>(
                    flag, [this, n = s.name](const double& v) { flag_values_[n] = v; }, help);
                break;
            case Kind::toggle:
                opts_[s.name] = app_->add_flag_function(
                    flag, [this, n = s.name](std::int64_t) { flag_values_[n] = true; }, help);
                break;
            case Kind::text_list:
            case Kind::path_list:
                opts_[s.name] =
                    app_->add_option_function<std::vector<std::string>>(
                            flag,
                            [this, n = s.name](const std::vector<std::string>& v) {
                                flag_values_[n] = v;
                            },
                            help)
                        ->delimiter(',');
                break;
            case Kind::int_list:
                opts_[s.name] =
                    app_->add_option_function<std::vector<std::uint64_t>>(
                            flag,
                            [this, n = s.name](const std::vector<std::uint64_t>& v) {
                                flag_values_[n] = v;
                            },
                            help)
                        ->delimiter(',');
                break;
        }
    }

    CLI::App* app_;
    std::vector<OptSpec> specs_;
    std::map<std::string, CLI::Option*> opts_;
    std::map<std::string, nlohmann::json> flag_values_;
    std::string config_path_;
};

inline void add_global_opts(std::vector<OptSpec>& v) {
    v.push_back({"seed", Kind::integer, 0, "master random seed", false, "XLA_SEED"});
    v.push_back({"jobs", Kind::integer, 1,
                 "worker cap (execution is sequential-deterministic; accepted for "
                 "interface stability)",
                 false, "XLA_JOBS"});
    v.push_back({"log-level", Kind::text, "info", "quiet | info | debug"});
}

inline void add_model_opts(std::vector<OptSpec>& v) {
    v.push_back({"embed", Kind::integer, 64, "embedding dimension"});
    v.push_back({"hidden", Kind::integer, 128, "GRU hidden dimension"});
    v.push_back({"layers", Kind::integer, 2, "encoder/decoder layer count"});
    v.push_back({"max-source", Kind::integer, 128, "source truncation length (tokens)"});
    v.push_back({"max-target", Kind::integer, 32, "target truncation length (tokens)"});
    v.push_back({"precision", Kind::text, "f32", "model precision: f32 | f64"});
}

inline void add_train_opts(std::vector<OptSpec>& v) {
    v.push_back({"epochs", Kind::integer, 5, "training epochs"});
    v.push_back({"batch", Kind::integer, 32, "batch size"});
    v.push_back({"lr", Kind::real, 3e-4, "Adam learning rate"});
    v.push_back({"clip", Kind::real, 1.0, "global gradient-norm clip"});
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parameter access helpers for handlers.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string S(const CommandConfig& c, const std::string& k) {
    return c.parameters.at(k).get<std::string>();
}
inline std::optional<std::string> opt_S(const CommandConfig& c, const std::string& k) {
    const auto& v = c.parameters.at(k);
    if (v.is_null()) return std::nullopt;
    return v.get<std::string>();
}
inline std::uint64_t U(const CommandConfig& c, const std::string& k) {
    return c.parameters.at(k).get<std::uint64_t>();
}
inline std::optional<std::uint64_t> opt_U(const CommandConfig& c, const std::string& k) {
    const auto& v = c.parameters.at(k);
    if (v.is_null()) return std::nullopt;
    return v.get<std::uint64_t>();
}
inline double D(const CommandConfig& c, const std::string& k) {
    return c.parameters.at(k).get<double>();
}
inline bool B(const CommandConfig& c, const std::string& k) {
    const auto& v = c.parameters.at(k);
    return v.is_boolean() && v.get<bool>();
}
inline std::vector<std::string> SL(const CommandConfig& c, const std::string& k) {
    const auto& v = c.parameters.at(k);
    if (v.is_null()) return {};
    return v.get<std::vector<std::string>>();
}
inline std::vector<std::uint64_t> UL(const CommandConfig& c, const std::string& k) {
    const auto& v = c.parameters.at(k);
    if (v.is_null()) return {};
    return v.get<std::vector<std::uint64_t>>();
}

inline std::vector<LanguageCode> parse_langs(const std::vector<std::string>& codes,
                                             const std::string& what) {
    std::vector<LanguageCode> out;
    for (const auto& c : codes) {
        try {
            out.push_back(lang(c));
        } catch (const Error& e) {
            throw UsageError("--" + what + ": " + e.what());
        }
    }
    return out;
}

inline bool log_at(const CommandConfig& c, const char* level) {
    const std::string cur = S(c, "log-level");
    if (cur == "quiet") return false;
    if (cur == "info") return std::string(level) != "debug";
    return true;  // debug
}

inline void note(const CommandConfig& c, std::ostream& err, const std::string& msg,
                 const char* level = "info") {
    if (log_at(c, level)) err << "[xlaug] " << msg << "\n";
}

inline nlohmann::json resolved_config_json(const CommandConfig& c) {
    return nlohmann::json{{"command", c.command}, {"parameters", c.parameters}};
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write \"" + path + "\"");
    out << content;
    if (!out) throw IoError("write failure on \"" + path + "\"");
}

// Every artifact-producing invocation records its resolved configuration:
// run directories get config.json, single-file outputs get a sidecar.
inline void write_config_sidecar(const CommandConfig& c, const std::string& artifact_path) {
    write_text_file(artifact_path + ".config.json",
                    resolved_config_json(c).dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& path) { return corpus::load_jsonl(path); }

inline seq2seq::Vocabulary vocab_from_pairs(const std::vector<prompts::PromptedPair>& pairs,
                                            const std::vector<std::string>& specials) {
    std::vector<std::string> texts;
    texts.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        texts.push_back(p.source);
        texts.push_back(p.target);
    }
    return seq2seq::Vocabulary::build(texts, specials);
}

inline std::vector<std::string> specials_of(const prompts::SpecialTokens& tokens) {
    std::vector<std::string> specials = {tokens.sep};
    for (const auto& [lc, tok] : tokens.lang_tokens) specials.push_back(tok);
    return specials;
}

inline seq2seq::ModelConfig model_config_from(const CommandConfig& c) {
    seq2seq::ModelConfig mc;
    mc.embed_dim = U(c, "embed");
    mc.hidden_dim = U(c, "hidden");
    mc.layers = U(c, "layers");
    mc.max_source_len = U(c, "max-source");
    mc.max_target_len = U(c, "max-target");
    try {
        mc.precision = seq2seq::precision_from_string(S(c, "precision"));
    } catch (const Error& e) {
        throw UsageError(std::string("--precision: ") + e.what());
    }
    mc.seed = U(c, "seed");
    return mc;
}

inline seq2seq::TrainConfig train_config_from(const CommandConfig& c) {
    seq2seq::TrainConfig tc;
    tc.epochs = U(c, "epochs");
    tc.batch_size = U(c, "batch");
    tc.learning_rate = D(c, "lr");
    tc.clip_norm = D(c, "clip");
    tc.shuffle_seed = U(c, "seed");
    return tc;
}

inline seq2seq::DecodeConfig decode_from(std::uint64_t beam) {
    if (beam <= 1) return seq2seq::DecodeConfig::greedy_mode();
    return seq2seq::DecodeConfig::beam_mode(beam);
}

// Refuses to reuse a non-empty output directory unless forced.
inline void prepare_out_dir(const std::string& dir, bool force) {
    std::error_code ec;
    if (std::filesystem::exists(dir, ec) && !std::filesystem::is_empty(dir, ec)) {
        if (!force)
            throw IoError("output directory \"" + dir +
                          "\" is not empty (pass --force to replace it)");
        std::filesystem::remove_all(dir, ec);
        if (ec) throw IoError("cannot clear output directory \"" + dir + "\"");
    }
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory \"" + dir + "\"");
}

inline std::string fmt_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommand handlers.
// ---------------------------------------------------------------------------

namespace handlers {

using namespace xlaug::cli::detail;

inline void cmd_scrape(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    std::vector<Article> pool = wikiscrap::load_articles_jsonl(S(c, "articles"));

    wikiscrap::ScrapConfig sc;
    sc.top_k = U(c, "top");
    sc.min_chars = U(c, "min-chars");
    sc.max_chars = U(c, "max-chars");
    sc.min_paragraphs = U(c, "min-paragraphs");
    sc.articles_per_language = U(c, "sample");
    sc.damping = D(c, "damping");
    sc.seed = U(c, "seed");

    if (auto links = opt_S(c, "links")) {
        const wikiscrap::ArticleGraph graph = wikiscrap::load_edge_list(*links);
        const wikiscrap::PageRankResult pr = wikiscrap::pagerank(graph, sc);
        const std::vector<std::size_t> top = wikiscrap::select_top(pr.ranks, sc.top_k);
        std::set<std::string> chosen;
        for (std::size_t idx : top) chosen.insert(graph.ids()[idx]);
        std::vector<Article> ranked;
        for (auto& a : pool)
            if (chosen.count(a.id)) ranked.push_back(std::move(a));
        note(c, err,
             "pagerank over " + std::to_string(graph.size()) + " nodes (converged=" +
                 (pr.converged ? "yes" : "no") + ", iterations=" +
                 std::to_string(pr.iterations) + "), kept top " +
                 std::to_string(ranked.size()));
        pool = std::move(ranked);
    }

    const wikiscrap::ScrapReport report = wikiscrap::run_scrap(pool, sc);
    wikiscrap::save_articles_jsonl(report.selected, S(c, "out"));
    write_config_sidecar(c, S(c, "out"));
    note(c, err,
         "scrape: considered=" + std::to_string(report.considered) +
             " rejected=" + std::to_string(report.rejected) +
             " selected=" + std::to_string(report.selected.size()) + " -> " + S(c, "out"));
}

inline void cmd_toybench(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    toybench::ToyWorldConfig cfg;
    cfg.n_entities = U(c, "entities");
    cfg.n_attributes = U(c, "attributes");
    cfg.n_values = U(c, "values");
    cfg.facts_per_context = U(c, "facts");
    cfg.languages = parse_langs(SL(c, "languages"), "languages");
    cfg.seed = U(c, "seed");

    const toybench::ToyWorld world = toybench::build_toy_corpus(cfg);
    const std::string dir = S(c, "out");
    prepare_out_dir(dir, B(c, "force"));
    const std::filesystem::path root(dir);

    for (LanguageCode lc : cfg.languages) {
        const auto& split = world.split_for(lc);
        corpus::save_jsonl(split.train, (root / ("toy-train-" + lc.str() + ".jsonl")).string());
        corpus::save_jsonl(split.eval, (root / ("toy-eval-" + lc.str() + ".jsonl")).string());
        wikiscrap::save_articles_jsonl(
            split.unlabeled, (root / ("toy-unlabeled-" + lc.str() + ".jsonl")).string());
    }
    for (std::size_t i = 0; i < cfg.languages.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.languages.size(); ++j)
            toybench::write_dictionary_tsv(
                world, cfg.languages[i], cfg.languages[j],
                (root / ("dict-" + cfg.languages[i].str() + "-" + cfg.languages[j].str() +
                         ".tsv"))
                    .string());
    for (LanguageCode cl : cfg.languages)
        for (LanguageCode ql : cfg.languages)
            if (cl != ql)
                corpus::save_jsonl(
                    toybench::cross_eval_set(world, cl, ql),
                    (root / ("toy-cross-" + cl.str() + "-" + ql.str() + ".jsonl")).string());

    write_text_file((root / "config.json").string(),
                    resolved_config_json(c).dump(2) + "\n");
    note(c, err, "toybench: wrote corpora for " + std::to_string(cfg.languages.size()) +
                     " languages into " + dir);
}

inline void cmd_train_qg(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    const std::vector<std::string> data_paths = SL(c, "data");
    if (data_paths.empty()) throw UsageError("--data needs at least one dataset");
    const bool controlled = B(c, "controlled");
    const bool cross = B(c, "cross");
    if (cross && !controlled)
        throw UsageError("--cross requires --controlled (cross-lingual pairs need language "
                         "control tokens)");

    std::vector<Dataset> datasets;
    for (const auto& p : data_paths) datasets.push_back(load_dataset(p));

    // Control-token languages: explicit flag, else every question language
    // observed in the training data.
    std::vector<LanguageCode> langs = parse_langs(SL(c, "langs"), "langs");
    if (langs.empty()) {
        std::set<LanguageCode> seen;
        for (const auto& ds : datasets)
            for (const auto& ex : ds.examples) seen.insert(ex.question_lang);
        langs.assign(seen.begin(), seen.end());
    }
    const prompts::SpecialTokens tokens = prompts::make_special_tokens(langs);

    std::vector<prompts::PromptedPair> pairs;
    for (const auto& ds : datasets)
        for (const auto& qg : corpus::reverse_to_qg(ds))
            pairs.push_back(controlled
                                ? prompts::encode_qg_controlled(
                                      qg, qg.target_lang, tokens,
                                      prompts::LangTokenMode::special_token)
                                : prompts::encode_qg(qg, tokens));
    if (cross) {
        for (std::size_t i = 0; i < datasets.size(); ++i)
            for (std::size_t j = 0; j < datasets.size(); ++j) {
                if (i == j) continue;
                const Dataset& a = datasets[i];
                const Dataset& b = datasets[j];
                if (a.examples.size() != b.examples.size())
                    throw ValidationError("--cross: datasets \"" + a.name + "\" and \"" +
                                          b.name + "\" are not aligned (sizes differ)");
                for (std::size_t k = 0; k < a.examples.size(); ++k) {
                    const QAExample& ea = a.examples[k];
                    const QAExample& eb = b.examples[k];
                    if (ea.id != eb.id)
                        throw ValidationError("--cross: datasets \"" + a.name + "\" and \"" +
                                              b.name + "\" misaligned at index " +
                                              std::to_string(k));
                    QGExample qg;
                    qg.context = ea.context;
                    qg.answer = ea.answers.front();
                    qg.target_question = eb.question;
                    qg.target_lang = eb.question_lang;
                    pairs.push_back(prompts::encode_qg_controlled(
                        qg, qg.target_lang, tokens, prompts::LangTokenMode::special_token));
                }
            }
    }
    if (pairs.empty()) throw ValidationError("no QG training pairs could be built");

    const seq2seq::Vocabulary vocab = vocab_from_pairs(pairs, specials_of(tokens));
    seq2seq::ModelConfig mc = model_config_from(c);
    mc.vocab_size = vocab.size();
    const seq2seq::TrainConfig tc = train_config_from(c);

    note(c, err, "train-qg: " + std::to_string(pairs.size()) + " pairs, vocab " +
                     std::to_string(vocab.size()));
    const seq2seq::Checkpoint ckpt = seq2seq::train(seq2seq::init(mc, vocab), pairs, tc);
    seq2seq::save_checkpoint(ckpt, S(c, "out"));
    write_config_sidecar(c, S(c, "out"));
    note(c, err, "train-qg: checkpoint " + seq2seq::checkpoint_id(ckpt) + " -> " + S(c, "out"));
}

inline void cmd_generate(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    const std::vector<Article> articles = wikiscrap::load_articles_jsonl(S(c, "articles"));
    const seq2seq::Checkpoint ckpt = seq2seq::load_checkpoint(S(c, "model"));

    const std::vector<LanguageCode> targets = parse_langs(SL(c, "langs"), "langs");
    const augment::SynthMode mode =
        targets.empty() ? augment::SynthMode::synth : augment::SynthMode::synth_trans;

    augment::GenerateConfig gc;
    gc.candidates.per_paragraph = U(c, "per-paragraph");
    gc.candidates.max_span_tokens = U(c, "max-span");
    gc.candidates.seed = U(c, "seed");
    gc.tokens = prompts::make_special_tokens(targets);
    gc.model_id = opt_S(c, "model-id").value_or(seq2seq::checkpoint_id(ckpt));
    gc.dataset_name = S(c, "dataset-name");

    const seq2seq::DecodeConfig decode = decode_from(U(c, "beam"));
    const augment::TextModel model = [&](const std::string& source) {
        return seq2seq::generate(ckpt, source, decode);
    };

    const augment::SyntheticResult result =
        augment::generate_synthetic(model, articles, targets, mode, gc);
    corpus::save_jsonl(result.dataset, S(c, "out"));
    write_config_sidecar(c, S(c, "out"));
    note(c, err, "generate: attempted=" + std::to_string(result.stats.attempted) +
                     " generated=" + std::to_string(result.stats.generated) +
                     " dropped_empty=" + std::to_string(result.stats.dropped_empty) +
                     " failures=" + std::to_string(result.stats.failures.size()) + " -> " +
                     S(c, "out"));
}

inline void cmd_train_qa(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    const auto started = std::chrono::steady_clock::now();
    const Dataset human = load_dataset(S(c, "human"));
    Dataset synthetic;
    synthetic.name = "empty";
    synthetic.source_kind = SourceKind::synthetic;
    if (auto p = opt_S(c, "synthetic")) synthetic = load_dataset(*p);

    pipeline::StageOptions opts;
    opts.reset_optimizer = !B(c, "no-optimizer-reset");
    const seq2seq::TrainConfig tc = train_config_from(c);
    if (auto e1 = opt_U(c, "stage1-epochs")) {
        opts.stage1_train = tc;
        opts.stage1_train->epochs = *e1;
    }

    std::vector<prompts::PromptedPair> all_pairs =
        pipeline::encode_qa_pairs(human, opts.tokens);
    {
        const auto synth_pairs = pipeline::encode_qa_pairs(synthetic, opts.tokens);
        all_pairs.insert(all_pairs.end(), synth_pairs.begin(), synth_pairs.end());
    }
    const seq2seq::Vocabulary vocab =
        vocab_from_pairs(all_pairs, specials_of(opts.tokens));
    seq2seq::ModelConfig mc = model_config_from(c);
    mc.vocab_size = vocab.size();

    const pipeline::RunDir rd =
        pipeline::prepare_run_dir(S(c, "runs-root"), S(c, "id"), B(c, "force"));
    const seq2seq::Checkpoint init = seq2seq::init(mc, vocab);

    pipeline::RunRecord record;
    record.id = S(c, "id");
    record.config = resolved_config_json(c);
    record.seeds = {U(c, "seed")};

    if (B(c, "one-stage")) {
        const seq2seq::Checkpoint final_ckpt =
            pipeline::one_stage_shuffled(init, synthetic, human, tc, opts);
        seq2seq::save_checkpoint(final_ckpt, rd.stage2_path());
        record.checkpoints["stage2"] = rd.stage2_path();
        note(c, err, "train-qa (one-stage): checkpoint " + seq2seq::checkpoint_id(final_ckpt));
    } else {
        const pipeline::TwoStageResult ts =
            pipeline::two_stage_train(init, synthetic, human, tc, opts);
        seq2seq::save_checkpoint(ts.stage1, rd.stage1_path());
        seq2seq::save_checkpoint(ts.stage2, rd.stage2_path());
        record.checkpoints["stage1"] = rd.stage1_path();
        record.checkpoints["stage2"] = rd.stage2_path();
        note(c, err, "train-qa: stage1 " + seq2seq::checkpoint_id(ts.stage1) + ", stage2 " +
                         seq2seq::checkpoint_id(ts.stage2));
    }

    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    pipeline::save_run_record(record, rd);
    note(c, err, "train-qa: artifacts in " + rd.dir.string());
}

inline void cmd_evaluate(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    const Dataset data = load_dataset(S(c, "data"));
    const auto pred_path = opt_S(c, "pred");
    const auto model_path = opt_S(c, "model");
    if (pred_path.has_value() == model_path.has_value())
        throw UsageError("evaluate needs exactly one of --pred or --model");

    std::map<std::string, std::string> preds;
    if (pred_path) {
        std::ifstream in(*pred_path, std::ios::binary);
        if (!in) throw IoError("cannot open predictions file \"" + *pred_path + "\"");
        std::ostringstream buf;
        buf << in.rdbuf();
        const nlohmann::json j = corpus::detail::parse_json_text(buf.str(), *pred_path);
        if (!j.is_object())
            throw ValidationError("predictions file must hold a JSON object of id -> text");
        for (const auto& [id, text] : j.items()) {
            if (!text.is_string())
                throw ValidationError("prediction for \"" + id + "\" is not a string");
            preds[id] = text.get<std::string>();
        }
    } else {
        const seq2seq::Checkpoint ckpt = seq2seq::load_checkpoint(*model_path);
        preds = pipeline::predict_answers(ckpt, data, {}, decode_from(U(c, "beam")));
    }

    const metrics::EvalReport report = metrics::evaluate(data.examples, preds);
    if (auto out_path = opt_S(c, "out")) {
        write_text_file(*out_path, metrics::report_to_json(report).dump(2) + "\n");
        write_config_sidecar(c, *out_path);
        note(c, err, "evaluate: report -> " + *out_path);
    }
    out << "macro_f1=" << fmt_score(report.macro_f1) << " macro_em="
        << fmt_score(report.macro_em) << " pairs=" << report.pair_scores.size() << "\n";
}

inline void cmd_pivot_eval(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    const Dataset data = load_dataset(S(c, "data"));
    const seq2seq::Checkpoint ckpt = seq2seq::load_checkpoint(S(c, "model"));

    const std::vector<std::string> dict_paths = SL(c, "dict");
    const bool identity = B(c, "identity");
    if (identity == !dict_paths.empty())
        throw UsageError("pivot-eval needs exactly one of --identity or --dict");

    pipeline::PivotOptions opts;
    try {
        opts.pivot = lang(S(c, "pivot"));
    } catch (const Error& e) {
        throw UsageError(std::string("--pivot: ") + e.what());
    }
    opts.decode = decode_from(U(c, "beam"));

    pipeline::PivotEvalResult result;
    if (identity) {
        result = pipeline::pivot_eval(pipeline::IdentityTranslator{}, ckpt, data, opts);
    } else {
        pipeline::DictionaryTranslator tr;
        for (const auto& p : dict_paths) tr.load_tsv(p);
        result = pipeline::pivot_eval(tr, ckpt, data, opts);
    }

    if (auto out_path = opt_S(c, "out")) {
        nlohmann::json j = metrics::report_to_json(result.report);
        j["translator_failures"] = result.translator_failures;
        j["pivot"] = opts.pivot.str();
        write_text_file(*out_path, j.dump(2) + "\n");
        write_config_sidecar(c, *out_path);
        note(c, err, "pivot-eval: report -> " + *out_path);
    }
    out << "macro_f1=" << fmt_score(result.report.macro_f1) << " macro_em="
        << fmt_score(result.report.macro_em) << " pairs=" << result.report.pair_scores.size()
        << " translator_failures=" << result.translator_failures << "\n";
}

inline void cmd_curve(const CommandConfig& c, std::ostream& out, std::ostream& err) {
    (void)out;
    const auto started = std::chrono::steady_clock::now();
    const Dataset pool = load_dataset(S(c, "pool"));
    const Dataset human = load_dataset(S(c, "human"));
    std::vector<Dataset> eval_sets;
    for (const auto& p : SL(c, "eval")) eval_sets.push_back(load_dataset(p));

    pipeline::CurveConfig cc;
    cc.model = model_config_from(c);
    cc.train = train_config_from(c);
    cc.decode = decode_from(U(c, "beam"));

    const std::string strategy_name = S(c, "strategy");
    if (strategy_name == "all" || strategy_name == "all_languages")
        cc.strategy.variant = augment::SamplingVariant::all_languages;
    else if (strategy_name == "incremental" || strategy_name == "incremental_languages")
        cc.strategy.variant = augment::SamplingVariant::incremental_languages;
    else
        throw UsageError("--strategy must be all_languages or incremental_languages");
    cc.strategy.order = parse_langs(SL(c, "order"), "order");
    if (cc.strategy.variant == augment::SamplingVariant::incremental_languages &&
        cc.strategy.order.empty())
        throw UsageError("--strategy incremental_languages requires --order");
    {
        const auto sizes = UL(c, "sizes");
        cc.strategy.sizes.assign(sizes.begin(), sizes.end());
    }
    cc.strategy.seed = U(c, "seed");
    cc.seeds = UL(c, "seeds");
    if (cc.seeds.empty()) cc.seeds = {U(c, "seed")};

    std::vector<prompts::PromptedPair> vocab_pairs = pipeline::encode_qa_pairs(pool, cc.stage.tokens);
    {
        const auto hp = pipeline::encode_qa_pairs(human, cc.stage.tokens);
        vocab_pairs.insert(vocab_pairs.end(), hp.begin(), hp.end());
        for (const auto& es : eval_sets) {
            const auto ep = pipeline::encode_qa_pairs(es, cc.stage.tokens);
            vocab_pairs.insert(vocab_pairs.end(), ep.begin(), ep.end());
        }
    }
    const seq2seq::Vocabulary vocab =
        vocab_from_pairs(vocab_pairs, specials_of(cc.stage.tokens));

    const pipeline::RunDir rd =
        pipeline::prepare_run_dir(S(c, "runs-root"), S(c, "id"), B(c, "force"));
    note(c, err, "curve: " + std::to_string(cc.strategy.sizes.size()) + " sizes x " +
                     std::to_string(cc.seeds.size()) + " seeds");
    const std::vector<pipeline::CurveRow> rows =
        pipeline::run_curve_experiment(pool, human, eval_sets, vocab, cc);

    write_text_file(rd.curve_path(), pipeline::curve_to_csv(rows));

    pipeline::RunRecord record;
    record.id = S(c, "id");
    record.config = resolved_config_json(c);
    record.seeds = cc.seeds;
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    pipeline::save_run_record(record, rd);
    note(c, err, "curve: " + std::to_string(rows.size()) + " rows -> " + rd.curve_path());
}

}  // namespace handlers

// ---------------------------------------------------------------------------
// Parser assembly and entry points.
// ---------------------------------------------------------------------------

class Cli {
public:
    Cli() : app_("cross-lingual QA augmentation toolkit", "xlaug") {
        app_.require_subcommand(1);
        using detail::Kind;
        using detail::OptSpec;

        {
            std::vector<OptSpec> v = {
                {"articles", Kind::path, nullptr, "articles JSONL to ingest", true},
                {"out", Kind::path, nullptr, "filtered articles JSONL", true},
                {"links", Kind::path, nullptr,
                 "edge-list TSV (src<TAB>dst); enables PageRank pre-selection"},
                {"top", Kind::integer, 10000, "PageRank selection width"},
                {"min-chars", Kind::integer, 500, "minimum paragraph length (scalars)"},
                {"max-chars", Kind::integer, 1500, "maximum paragraph length (scalars)"},
                {"min-paragraphs", Kind::integer, 5, "minimum surviving paragraphs"},
                {"sample", Kind::integer, 500, "articles to sample per invocation"},
                {"damping", Kind::real, 0.85, "PageRank damping factor"},
            };
            register_command("scrape", "Filter and sample an article corpus", std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"out", Kind::path, nullptr, "output directory for the toy corpus", true},
                {"entities", Kind::integer, 40, "toy entity count"},
                {"attributes", Kind::integer, 8, "toy attribute count"},
                {"values", Kind::integer, 12, "toy value count"},
                {"facts", Kind::integer, 5, "facts per context"},
                {"languages", Kind::text_list,
                 nlohmann::json::array({"en", "es", "de", "hi"}), "toy language family"},
                {"force", Kind::toggle, false, "replace a non-empty output directory"},
            };
            register_command("toybench", "Build the deterministic toy multilingual benchmark",
                             std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"data", Kind::path_list, nullptr, "QA dataset JSONL (repeatable)", true},
                {"out", Kind::path, nullptr, "output checkpoint path", true},
                {"controlled", Kind::toggle, false,
                 "prepend <LANG:xx> control tokens to QG sources"},
                {"cross", Kind::toggle, false,
                 "add cross-lingual pairs between id-aligned datasets (needs --controlled)"},
                {"langs", Kind::text_list, nullptr,
                 "control-token languages (default: question languages present in data)"},
            };
            detail::add_model_opts(v);
            detail::add_train_opts(v);
            register_command("train-qg", "Train a question-generation model", std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"articles", Kind::path, nullptr, "unlabeled articles JSONL", true},
                {"model", Kind::path, nullptr, "QG checkpoint", true},
                {"out", Kind::path, nullptr, "synthetic dataset JSONL", true},
                {"langs", Kind::text_list, nullptr,
                 "target question languages (enables language-controlled generation)"},
                {"per-paragraph", Kind::integer, 3, "answer candidates per paragraph"},
                {"max-span", Kind::integer, 5, "max answer-span length (tokens)"},
                {"beam", Kind::integer, 1, "beam width (1 = greedy)"},
                {"dataset-name", Kind::text, "synthetic", "name recorded in the dataset"},
                {"model-id", Kind::text, nullptr,
                 "provenance model id (default: checkpoint id)"},
            };
            register_command("generate", "Generate synthetic QA data from articles",
                             std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"human", Kind::path, nullptr, "human QA dataset JSONL", true},
                {"synthetic", Kind::path, nullptr, "synthetic QA dataset JSONL (optional)"},
                {"runs-root", Kind::path, "runs", "root directory for run artifacts"},
                {"id", Kind::text, nullptr, "run id (directory name)", true},
                {"force", Kind::toggle, false, "replace a non-empty run directory"},
                {"one-stage", Kind::toggle, false,
                 "single pass over the shuffled union instead of two stages"},
                {"no-optimizer-reset", Kind::toggle, false,
                 "carry Adam state from stage 1 into stage 2"},
                {"stage1-epochs", Kind::integer, nullptr, "override epochs for stage 1"},
            };
            detail::add_model_opts(v);
            detail::add_train_opts(v);
            register_command("train-qa", "Train a QA model (two-stage by default)",
                             std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"data", Kind::path, nullptr, "evaluation dataset JSONL", true},
                {"pred", Kind::path, nullptr, "predictions JSON (object of id -> text)"},
                {"model", Kind::path, nullptr, "QA checkpoint to decode with"},
                {"beam", Kind::integer, 1, "beam width (1 = greedy)"},
                {"out", Kind::path, nullptr, "write report JSON here"},
            };
            register_command("evaluate", "Score predictions or a checkpoint on a dataset",
                             std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"data", Kind::path, nullptr, "cross-lingual evaluation dataset JSONL", true},
                {"model", Kind::path, nullptr, "pivot-language QA checkpoint", true},
                {"dict", Kind::path_list, nullptr, "dictionary TSV (repeatable)"},
                {"identity", Kind::toggle, false, "use the identity translator"},
                {"pivot", Kind::text, "en", "pivot language"},
                {"beam", Kind::integer, 1, "beam width (1 = greedy)"},
                {"out", Kind::path, nullptr, "write report JSON here"},
            };
            register_command("pivot-eval", "Evaluate the translation-pivot baseline",
                             std::move(v));
        }
        {
            std::vector<OptSpec> v = {
                {"pool", Kind::path, nullptr, "synthetic pool JSONL to sample from", true},
                {"human", Kind::path, nullptr, "human QA dataset JSONL", true},
                {"eval", Kind::path_list, nullptr, "evaluation dataset JSONL (repeatable)",
                 true},
                {"strategy", Kind::text, "all_languages",
                 "all_languages | incremental_languages"},
                {"order", Kind::text_list, nullptr,
                 "language admission order for incremental_languages"},
                {"sizes", Kind::int_list, nullptr, "ascending sample sizes", true},
                {"seeds", Kind::int_list, nullptr, "run seeds (default: --seed)"},
                {"beam", Kind::integer, 1, "beam width (1 = greedy)"},
                {"runs-root", Kind::path, "runs", "root directory for run artifacts"},
                {"id", Kind::text, nullptr, "run id (directory name)", true},
                {"force", Kind::toggle, false, "replace a non-empty run directory"},
            };
            detail::add_model_opts(v);
            detail::add_train_opts(v);
            register_command("curve", "Sweep synthetic-data sizes and emit curve rows",
                             std::move(v));
        }
    }

    // Throws CLI::ParseError for CLI11-level problems (including --help) and
    // UsageError for config-file/requiredness problems.
    CommandConfig parse_and_validate(std::vector<std::string> args) {
        std::reverse(args.begin(), args.end());
        app_.parse(args);
        CLI::App* sub = app_.get_subcommands().at(0);
        CommandConfig cfg;
        cfg.command = sub->get_name();
        cfg.parameters = tables_.at(cfg.command)->resolve();
        const std::string level = cfg.parameters.at("log-level").get<std::string>();
        if (level != "quiet" && level != "info" && level != "debug")
            throw UsageError("--log-level must be quiet, info, or debug");
        return cfg;
    }

    CLI::App& app() { return app_; }

private:
    void register_command(const std::string& name, const std::string& desc,
                          std::vector<detail::OptSpec> specs) {
        detail::add_global_opts(specs);
        CLI::App* sub = app_.add_subcommand(name, desc);
        tables_.emplace(name, std::make_unique<detail::ArgTable>(sub, std::move(specs)));
    }

    CLI::App app_;
    std::map<std::string, std::unique_ptr<detail::ArgTable>> tables_;
};

// Dispatches a resolved config; maps library errors to the documented exit
// statuses (0 success, 1 domain, 2 usage, 3 I/O).
inline int execute(const CommandConfig& cfg, std::ostream& out, std::ostream& err) {
    try {
        if (cfg.command == "scrape")
            handlers::cmd_scrape(cfg, out, err);
        else if (cfg.command == "toybench")
            handlers::cmd_toybench(cfg, out, err);
        else if (cfg.command == "train-qg")
            handlers::cmd_train_qg(cfg, out, err);
        else if (cfg.command == "generate")
            handlers::cmd_generate(cfg, out, err);
        else if (cfg.command == "train-qa")
            handlers::cmd_train_qa(cfg, out, err);
        else if (cfg.command == "evaluate")
            handlers::cmd_evaluate(cfg, out, err);
        else if (cfg.command == "pivot-eval")
            handlers::cmd_pivot_eval(cfg, out, err);
        else if (cfg.command == "curve")
            handlers::cmd_curve(cfg, out, err);
        else
            throw UsageError("unknown command \"" + cfg.command + "\"");
        return 0;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    Cli cli;
    CommandConfig cfg;
    try {
        cfg = cli.parse_and_validate(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = cli.app().exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }
    return execute(cfg, out, err);
}

}  // namespace xlaug::cli
