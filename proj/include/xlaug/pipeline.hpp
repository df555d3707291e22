#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlaug/augment.hpp"
#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/metrics.hpp"
#include "xlaug/prompts.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/seq2seq.hpp"

namespace xlaug::pipeline {

// ---------------------------------------------------------------------------
// Translators. The live-API client is out of scope by design; the interface
// plus the dictionary implementation stand in for it.
// ---------------------------------------------------------------------------

class Translator {
public:
    virtual ~Translator() = default;
    virtual std::string translate(const std::string& text, LanguageCode from,
                                  LanguageCode to) const = 0;
};

class IdentityTranslator final : public Translator {
public:
    std::string translate(const std::string& text, LanguageCode, LanguageCode) const override {
        return text;
    }
};

// Token-by-token lookup over whitespace tokens. Every added entry registers
// both directions, and conflicting entries are rejected, so each loaded pair
// is a bijection and translation round-trips exactly.
class DictionaryTranslator final : public Translator {
public:
    void add_entry(LanguageCode a, LanguageCode b, const std::string& token_a,
                   const std::string& token_b) {
        insert(a, b, token_a, token_b);
        insert(b, a, token_b, token_a);
    }

    void add_pairs(LanguageCode a, LanguageCode b,
                   const std::vector<std::pair<std::string, std::string>>& pairs) {
        for (const auto& [ta, tb] : pairs) add_entry(a, b, ta, tb);
    }

    // TSV rows: lang_a <TAB> lang_b <TAB> token_a <TAB> token_b.
    // Blank lines and lines starting with '#' are ignored.
    static DictionaryTranslator from_tsv(const std::string& path) {
        DictionaryTranslator tr;
        tr.load_tsv(path);
        return tr;
    }

    // Merges another dictionary file into this translator.
    void load_tsv(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open dictionary file \"" + path + "\"");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line.front() == '#') continue;
            std::vector<std::string> cols;
            std::size_t pos = 0;
            while (true) {
                const std::size_t tab = line.find('\t', pos);
                cols.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
                if (tab == std::string::npos) break;
                pos = tab + 1;
            }
            if (cols.size() != 4)
                throw ParseError("\"" + path + "\" line " + std::to_string(lineno) +
                                 ": expected 4 tab-separated columns, got " +
                                 std::to_string(cols.size()));
            try {
                add_entry(lang(cols[0]), lang(cols[1]), cols[2], cols[3]);
            } catch (const Error& e) {
                throw ParseError("\"" + path + "\" line " + std::to_string(lineno) + ": " +
                                 e.what());
            }
        }
    }

    std::string translate(const std::string& text, LanguageCode from,
                          LanguageCode to) const override {
        if (from == to) return text;
        const auto table = tables_.find({from, to});
        if (table == tables_.end())
            throw TranslateError("no dictionary loaded for this direction", "", from.str(),
                                 to.str());
        std::string out;
        std::size_t pos = 0;
        bool first = true;
        while (pos < text.size()) {
            std::size_t next = text.find(' ', pos);
            if (next == std::string::npos) next = text.size();
            if (next > pos) {
                const std::string token = text.substr(pos, next - pos);
                const auto it = table->second.find(token);
                if (it == table->second.end())
                    throw TranslateError("token not in dictionary", token, from.str(), to.str());
                if (!first) out += " ";
                out += it->second;
                first = false;
            }
            pos = next + 1;
        }
        return out;
    }

private:
    void insert(LanguageCode a, LanguageCode b, const std::string& ta, const std::string& tb) {
        auto& table = tables_[{a, b}];
        const auto [it, fresh] = table.emplace(ta, tb);
        if (!fresh && it->second != tb)
            throw ValidationError("conflicting dictionary entry for \"" + ta + "\" (" + a.str() +
                                  " -> " + b.str() + ")");
    }

    std::map<std::pair<LanguageCode, LanguageCode>, std::map<std::string, std::string>> tables_;
};

// ---------------------------------------------------------------------------
// Training regimes.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr std::uint64_t kUnionSalt = 0x0514u;
inline constexpr std::uint64_t kCurveSeedSalt = 0xC04Eu;
}  // namespace detail

inline std::vector<prompts::PromptedPair> encode_qa_pairs(const Dataset& ds,
                                                          const prompts::SpecialTokens& tokens) {
    std::vector<prompts::PromptedPair> pairs;
    pairs.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) pairs.push_back(prompts::encode_qa(ex, tokens));
    return pairs;
}

// Drops accumulated Adam moments and the step counter; the next stage then
// fine-tunes with a fresh optimizer.
inline void reset_optimizer_state(seq2seq::Checkpoint& ckpt) {
    std::visit(
        [](auto& st) {
            for (auto& t : st.adam_m) std::fill(t.data.begin(), t.data.end(), 0);
            for (auto& t : st.adam_v) std::fill(t.data.begin(), t.data.end(), 0);
            st.step = 0;
        },
        ckpt.state);
}

struct StageOptions {
    prompts::SpecialTokens tokens;
    // Stage 2 starts from the stage-1 weights but a fresh optimizer, unless
    // disabled; with no synthetic stage there is nothing to reset.
    bool reset_optimizer = true;
    // Stage-1 override; the shared config is used for both stages otherwise.
    std::optional<seq2seq::TrainConfig> stage1_train;
};

struct TwoStageResult {
    seq2seq::Checkpoint stage1;  // input checkpoint when the synthetic set is empty
    seq2seq::Checkpoint stage2;
};

// Stage 1: synthetic QA pairs. Stage 2: human pairs, continuing from stage 1.
// An empty synthetic set degenerates to plain training on the human data.
inline TwoStageResult two_stage_train(const seq2seq::Checkpoint& ckpt, const Dataset& synthetic,
                                      const Dataset& human, const seq2seq::TrainConfig& tcfg,
                                      const StageOptions& opts = {}) {
    if (human.examples.empty())
        throw ValidationError("two_stage_train requires a non-empty human dataset");
    corpus::require_valid(human);

    TwoStageResult result{ckpt, ckpt};
    if (!synthetic.examples.empty()) {
        corpus::require_valid(synthetic);
        result.stage1 = seq2seq::train(ckpt, encode_qa_pairs(synthetic, opts.tokens),
                                       opts.stage1_train.value_or(tcfg));
        seq2seq::Checkpoint base = result.stage1;
        if (opts.reset_optimizer) reset_optimizer_state(base);
        result.stage2 = seq2seq::train(base, encode_qa_pairs(human, opts.tokens), tcfg);
    } else {
        result.stage2 = seq2seq::train(ckpt, encode_qa_pairs(human, opts.tokens), tcfg);
    }
    return result;
}

// Single pass over the seeded shuffle of synthetic ∪ human.
inline seq2seq::Checkpoint one_stage_shuffled(const seq2seq::Checkpoint& ckpt,
                                              const Dataset& synthetic, const Dataset& human,
                                              const seq2seq::TrainConfig& tcfg,
                                              const StageOptions& opts = {}) {
    if (human.examples.empty())
        throw ValidationError("one_stage_shuffled requires a non-empty human dataset");
    corpus::require_valid(human);
    std::vector<prompts::PromptedPair> pairs;
    if (!synthetic.examples.empty()) {
        corpus::require_valid(synthetic);
        pairs = encode_qa_pairs(synthetic, opts.tokens);
    }
    const auto human_pairs = encode_qa_pairs(human, opts.tokens);
    pairs.insert(pairs.end(), human_pairs.begin(), human_pairs.end());
    Rng rng(mix_seed(tcfg.shuffle_seed, detail::kUnionSalt));
    rng.shuffle(pairs);
    return seq2seq::train(ckpt, pairs, tcfg);
}

// ---------------------------------------------------------------------------
// Evaluation harnesses.
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> predict_answers(
    const seq2seq::Checkpoint& ckpt, const Dataset& ds,
    const prompts::SpecialTokens& tokens = {}, const seq2seq::DecodeConfig& decode = {}) {
    std::map<std::string, std::string> preds;
    for (const auto& ex : ds.examples)
        preds[ex.id] =
            seq2seq::generate(ckpt, prompts::qa_source(ex.question, ex.context, tokens), decode);
    return preds;
}

inline metrics::EvalReport evaluate_checkpoint(const seq2seq::Checkpoint& ckpt, const Dataset& ds,
                                               const prompts::SpecialTokens& tokens = {},
                                               const seq2seq::DecodeConfig& decode = {}) {
    return metrics::evaluate(ds.examples, predict_answers(ckpt, ds, tokens, decode));
}

// ---------------------------------------------------------------------------
// English-pivot baseline.
// ---------------------------------------------------------------------------

struct PivotOptions {
    LanguageCode pivot = lang("en");
    prompts::SpecialTokens tokens;
    seq2seq::DecodeConfig decode;
};

// Translate question and context into the pivot language, answer there, and
// translate the predicted string back into the context language. The answer
// is scored as-is — no re-alignment against the original context, which is
// precisely the weakness of this baseline.
inline std::string pivot_answer(const Translator& tr, const seq2seq::Checkpoint& qa_ckpt,
                                const std::string& question, LanguageCode q_lang,
                                const std::string& context, LanguageCode c_lang,
                                const PivotOptions& opts = {}) {
    const std::string q = tr.translate(question, q_lang, opts.pivot);
    const std::string c = tr.translate(context, c_lang, opts.pivot);
    const std::string pred =
        seq2seq::generate(qa_ckpt, prompts::qa_source(q, c, opts.tokens), opts.decode);
    if (pred.empty()) return pred;  // nothing to translate back
    return tr.translate(pred, opts.pivot, c_lang);
}

struct PivotEvalResult {
    metrics::EvalReport report;
    std::map<std::string, std::string> predictions;
    std::size_t translator_failures = 0;  // scored as empty predictions
};

// Batch harness: per-example translator failures are not fatal — the example
// scores 0 with an empty prediction and the failure is counted.
inline PivotEvalResult pivot_eval(const Translator& tr, const seq2seq::Checkpoint& qa_ckpt,
                                  const Dataset& ds, const PivotOptions& opts = {}) {
    PivotEvalResult out;
    for (const auto& ex : ds.examples) {
        std::string pred;
        try {
            pred = pivot_answer(tr, qa_ckpt, ex.question, ex.question_lang, ex.context,
                                ex.context_lang, opts);
        } catch (const TranslateError&) {
            out.translator_failures += 1;
        }
        out.predictions[ex.id] = std::move(pred);
    }
    out.report = metrics::evaluate(ds.examples, out.predictions);
    return out;
}

// ---------------------------------------------------------------------------
// Curve experiments (synthetic-data-scale sweeps).
// ---------------------------------------------------------------------------

struct CurveRow {
    augment::SamplingVariant strategy = augment::SamplingVariant::all_languages;
    std::size_t size = 0;
    std::uint64_t seed = 0;
    LanguageCode context_lang;
    LanguageCode question_lang;
    double f1 = 0.0;
    double em = 0.0;
};

struct CurveConfig {
    seq2seq::ModelConfig model;  // seed and vocab_size are set per run
    seq2seq::TrainConfig train;  // shuffle_seed is set per run
    seq2seq::DecodeConfig decode;
    augment::SamplingStrategy strategy;
    std::vector<std::uint64_t> seeds = {0};
    StageOptions stage;
};

// One init checkpoint per seed, reused across all sizes so the curve varies
// only in the synthetic data the model saw. Sampling is reseeded per run
// seed; subset nesting across sizes is guaranteed by the sampler.
inline std::vector<CurveRow> run_curve_experiment(const Dataset& pool, const Dataset& human,
                                                  const std::vector<Dataset>& eval_sets,
                                                  const seq2seq::Vocabulary& vocab,
                                                  const CurveConfig& cfg) {
    cfg.strategy.validate();
    if (cfg.seeds.empty()) throw ValidationError("curve experiment needs at least one seed");
    if (eval_sets.empty()) throw ValidationError("curve experiment needs at least one eval set");

    std::vector<CurveRow> rows;
    for (const std::uint64_t seed : cfg.seeds) {
        seq2seq::ModelConfig mc = cfg.model;
        mc.seed = seed;
        mc.vocab_size = vocab.size();
        const seq2seq::Checkpoint init = seq2seq::init(mc, vocab);
        seq2seq::TrainConfig tc = cfg.train;
        tc.shuffle_seed = seed;
        augment::SamplingStrategy strategy = cfg.strategy;
        strategy.seed = mix_seed(cfg.strategy.seed, detail::kCurveSeedSalt, seed);

        const auto subsets = augment::sample_for_curve(pool, strategy);
        for (const auto& [size, subset] : subsets) {
            try {
                const TwoStageResult ts = two_stage_train(init, subset, human, tc, cfg.stage);
                for (const auto& eval_set : eval_sets) {
                    const metrics::EvalReport report =
                        evaluate_checkpoint(ts.stage2, eval_set, cfg.stage.tokens, cfg.decode);
                    for (const auto& ps : report.pair_scores) {
                        CurveRow row;
                        row.strategy = strategy.variant;
                        row.size = size;
                        row.seed = seed;
                        row.context_lang = ps.context_lang;
                        row.question_lang = ps.question_lang;
                        row.f1 = ps.f1;
                        row.em = ps.exact_match;
                        rows.push_back(row);
                    }
                }
            } catch (const Error& e) {
                throw Error("curve sub-run failed at size=" + std::to_string(size) +
                            " seed=" + std::to_string(seed) + ": " + e.what());
            }
        }
    }

    std::sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
        return std::tie(a.strategy, a.size, a.seed, a.context_lang, a.question_lang) <
               std::tie(b.strategy, b.size, b.seed, b.context_lang, b.question_lang);
    });
    return rows;
}

inline std::string curve_to_csv(const std::vector<CurveRow>& rows) {
    std::string out = "strategy,size,seed,context_lang,question_lang,f1,em\n";
    for (const auto& r : rows) {
        out += augment::to_string(r.strategy) + "," + std::to_string(r.size) + "," +
               std::to_string(r.seed) + "," + r.context_lang.str() + "," +
               r.question_lang.str() + "," + nlohmann::json(r.f1).dump() + "," +
               nlohmann::json(r.em).dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run persistence.
// ---------------------------------------------------------------------------

struct RunDir {
    std::filesystem::path dir;

    std::string config_path() const { return (dir / "config.json").string(); }
    std::string stage1_path() const { return (dir / "stage1.ckpt").string(); }
    std::string stage2_path() const { return (dir / "stage2.ckpt").string(); }
    std::string report_path() const { return (dir / "report.json").string(); }
    std::string curve_path() const { return (dir / "curve.csv").string(); }
};

// Creates runs_root/<id>. An existing non-empty directory is refused unless
// force is set, in which case it is replaced wholesale.
inline RunDir prepare_run_dir(const std::string& runs_root, const std::string& id, bool force) {
    if (id.empty() || id.find('/') != std::string::npos)
        throw ValidationError("run id must be a non-empty path-free name");
    RunDir rd{std::filesystem::path(runs_root) / id};
    std::error_code ec;
    if (std::filesystem::exists(rd.dir, ec) && !std::filesystem::is_empty(rd.dir, ec)) {
        if (!force)
            throw IoError("run directory \"" + rd.dir.string() +
                          "\" is not empty (pass force to replace it)");
        std::filesystem::remove_all(rd.dir, ec);
        if (ec) throw IoError("cannot clear run directory \"" + rd.dir.string() + "\"");
    }
    std::filesystem::create_directories(rd.dir, ec);
    if (ec) throw IoError("cannot create run directory \"" + rd.dir.string() + "\"");
    return rd;
}

// Everything needed to replay a run: the caller-assembled config block keeps
// module configs, input paths, and seeds by value.
struct RunRecord {
    std::string id;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::uint64_t> seeds;
    std::map<std::string, std::string> checkpoints;  // label -> path
    std::vector<metrics::EvalReport> reports;
    double wall_seconds = 0.0;
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& rep : r.reports) reports.push_back(metrics::report_to_json(rep));
    return nlohmann::json{{"id", r.id},           {"config", r.config},
                          {"seeds", r.seeds},     {"checkpoints", r.checkpoints},
                          {"reports", reports},   {"wall_seconds", r.wall_seconds}};
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.id = j.at("id").get<std::string>();
    r.config = j.at("config");
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.checkpoints = j.at("checkpoints").get<std::map<std::string, std::string>>();
    for (const auto& rep : j.at("reports")) r.reports.push_back(metrics::report_from_json(rep));
    r.wall_seconds = j.at("wall_seconds").get<double>();
    return r;
}

inline void save_run_record(const RunRecord& r, const RunDir& rd) {
    std::ofstream out(rd.config_path(), std::ios::binary);
    if (!out) throw IoError("cannot write \"" + rd.config_path() + "\"");
    out << run_record_to_json(r).dump(2) << "\n";
    if (!out) throw IoError("write failure on \"" + rd.config_path() + "\"");
}

inline RunRecord load_run_record(const RunDir& rd) {
    std::ifstream in(rd.config_path(), std::ios::binary);
    if (!in) throw IoError("cannot open \"" + rd.config_path() + "\"");
    std::ostringstream buf;
    buf << in.rdbuf();
    return run_record_from_json(corpus::detail::parse_json_text(buf.str(), rd.config_path()));
}

}  // namespace xlaug::pipeline
