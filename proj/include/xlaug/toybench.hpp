#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "xlaug/augment.hpp"
#include "xlaug/corpus.hpp"
#include "xlaug/errors.hpp"
#include "xlaug/lang.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/unicode.hpp"
#include "xlaug/wikiscrap.hpp"

namespace xlaug::toybench {

// One toy language: a bijective map from the shared base vocabulary to
// suffix-tagged surface tokens. Templates are fixed across the family (no
// reordering), which keeps token-level translation exactly invertible.
struct ToyLanguageSpec {
    LanguageCode language;
    std::map<std::string, std::string> token_map;  // base token -> surface token

    const std::string& surface(const std::string& base) const {
        auto it = token_map.find(base);
        if (it == token_map.end())
            throw ValidationError("base token \"" + base + "\" is not in the " + language.str() +
                                  " token map");
        return it->second;
    }
};

struct ToyWorldConfig {
    std::size_t n_entities = 40;
    std::size_t n_attributes = 8;
    std::size_t n_values = 12;
    std::size_t facts_per_context = 5;
    std::vector<LanguageCode> languages = {lang("en"), lang("es"), lang("de"), lang("hi")};
    std::uint64_t seed = 0;

    // A quarter of the entities (at least one context's worth) is held out
    // for evaluation; the rest trains.
    std::size_t eval_entity_count() const {
        return std::max(facts_per_context, n_entities / 4);
    }
    std::size_t train_entity_count() const {
        return n_entities > eval_entity_count() ? n_entities - eval_entity_count() : 0;
    }

    void validate() const {
        if (n_entities < 2 || n_attributes < 2 || n_values < 2 || facts_per_context < 2)
            throw ValidationError("toy world counts must all be >= 2");
        if (languages.empty()) throw ValidationError("toy world needs at least one language");
        std::set<LanguageCode> seen(languages.begin(), languages.end());
        if (seen.size() != languages.size())
            throw ValidationError("toy world languages must be distinct");
        // Each context needs distinct entities, attributes, and values so both
        // the QA and the QG directions are unambiguous functions.
        if (n_attributes < facts_per_context || n_values < facts_per_context)
            throw ValidationError(
                "insufficient combinatorics: need at least facts_per_context distinct "
                "attributes and values");
        if (train_entity_count() < facts_per_context)
            throw ValidationError(
                "insufficient combinatorics: too few entities for disjoint train/eval splits");
    }

    bool operator==(const ToyWorldConfig&) const = default;
};

struct ToySplit {
    Dataset train;
    Dataset eval;
    std::vector<Article> unlabeled;
};

struct ToyWorld {
    ToyWorldConfig config;
    std::vector<ToyLanguageSpec> specs;  // in config.languages order
    std::map<LanguageCode, ToySplit> corpora;

    const ToyLanguageSpec& spec_for(LanguageCode lc) const {
        for (const auto& s : specs)
            if (s.language == lc) return s;
        throw ValidationError("language \"" + lc.str() + "\" is not part of this toy world");
    }
    const ToySplit& split_for(LanguageCode lc) const {
        auto it = corpora.find(lc);
        if (it == corpora.end())
            throw ValidationError("language \"" + lc.str() + "\" is not part of this toy world");
        return it->second;
    }
};

namespace detail {

inline constexpr std::uint64_t kSplitSalt = 0x70F1u;
inline constexpr std::uint64_t kTrainSalt = 0x70F2u;
inline constexpr std::uint64_t kEvalSalt = 0x70F3u;
inline constexpr std::uint64_t kUnlabeledSalt = 0x70F4u;

inline std::string ent_base(std::size_t i) { return "ent" + std::to_string(i); }
inline std::string att_base(std::size_t i) { return "att" + std::to_string(i); }
inline std::string val_base(std::size_t i) { return "val" + std::to_string(i); }

struct BaseFact {
    std::size_t ent, att, val;
};
struct BaseContext {
    std::vector<BaseFact> facts;
};

// `passes` rounds over the pool; each round shuffles the pool and slices it
// into contexts of facts_per_context distinct entities, assigning distinct
// attributes and values per context.
inline std::vector<BaseContext> make_contexts(const std::vector<std::size_t>& pool,
                                              std::size_t passes, const ToyWorldConfig& cfg,
                                              Rng& rng) {
    std::vector<BaseContext> out;
    std::vector<std::size_t> order = pool;
    std::vector<std::size_t> atts(cfg.n_attributes);
    std::iota(atts.begin(), atts.end(), std::size_t{0});
    std::vector<std::size_t> vals(cfg.n_values);
    std::iota(vals.begin(), vals.end(), std::size_t{0});

    const std::size_t fpc = cfg.facts_per_context;
    for (std::size_t p = 0; p < passes; ++p) {
        rng.shuffle(order);
        for (std::size_t g = 0; g + fpc <= order.size(); g += fpc) {
            rng.shuffle(atts);
            rng.shuffle(vals);
            BaseContext ctx;
            for (std::size_t i = 0; i < fpc; ++i)
                ctx.facts.push_back({order[g + i], atts[i], vals[i]});
            out.push_back(std::move(ctx));
        }
    }
    return out;
}

struct Rendered {
    std::string text;
    std::vector<std::size_t> token_offsets;  // scalar offset of each token
    std::vector<std::string> tokens;
};

inline Rendered render_tokens(const std::vector<std::string>& bases, const ToyLanguageSpec& spec) {
    Rendered r;
    std::size_t offset = 0;
    for (std::size_t i = 0; i < bases.size(); ++i) {
        const std::string& s = spec.surface(bases[i]);
        if (i > 0) {
            r.text += " ";
            offset += 1;
        }
        r.token_offsets.push_back(offset);
        r.tokens.push_back(s);
        r.text += s;
        offset += unicode::scalar_length(s);
    }
    return r;
}

inline std::vector<std::string> context_bases(const BaseContext& ctx) {
    std::vector<std::string> bases;
    for (const BaseFact& f : ctx.facts) {
        bases.push_back(ent_base(f.ent));
        bases.push_back(att_base(f.att));
        bases.push_back(val_base(f.val));
        bases.push_back(".");
    }
    return bases;
}

inline std::vector<std::string> question_bases(const BaseFact& f) {
    return {"which", att_base(f.att), ent_base(f.ent), "?"};
}

inline std::string pad4(std::size_t n) {
    std::string s = std::to_string(n);
    while (s.size() < 4) s.insert(s.begin(), '0');
    return s;
}

}  // namespace detail

// Builds the whole language family from one seeded base world. Per-language
// corpora are exact token-mapped images with aligned ids, so translation
// between any two member languages is a token bijection.
inline ToyWorld build_toy_corpus(const ToyWorldConfig& cfg) {
    cfg.validate();

    ToyWorld world;
    world.config = cfg;

    // Shared base vocabulary and per-language bijections. Values get a cased
    // surface so answer-candidate heuristics can find them; punctuation is
    // shared by every language.
    for (LanguageCode lc : cfg.languages) {
        ToyLanguageSpec spec;
        spec.language = lc;
        const std::string suffix = lc.str();
        for (std::size_t i = 0; i < cfg.n_entities; ++i)
            spec.token_map[detail::ent_base(i)] = "ent" + std::to_string(i) + suffix;
        for (std::size_t i = 0; i < cfg.n_attributes; ++i)
            spec.token_map[detail::att_base(i)] = "att" + std::to_string(i) + suffix;
        for (std::size_t i = 0; i < cfg.n_values; ++i)
            spec.token_map[detail::val_base(i)] = "Val" + std::to_string(i) + suffix;
        spec.token_map["which"] = "which" + suffix;
        spec.token_map["."] = ".";
        spec.token_map["?"] = "?";
        world.specs.push_back(std::move(spec));
    }

    // Disjoint entity split.
    std::vector<std::size_t> entities(cfg.n_entities);
    std::iota(entities.begin(), entities.end(), std::size_t{0});
    Rng split_rng(mix_seed(cfg.seed, detail::kSplitSalt));
    split_rng.shuffle(entities);
    const std::size_t n_train = cfg.train_entity_count();
    std::vector<std::size_t> train_pool(entities.begin(), entities.begin() + n_train);
    std::vector<std::size_t> eval_pool(entities.begin() + n_train, entities.end());

    // One base world; the pass count ties corpus size to the attribute count
    // so sizes follow entirely from the config.
    const std::size_t passes = cfg.n_attributes;
    Rng train_rng(mix_seed(cfg.seed, detail::kTrainSalt));
    Rng eval_rng(mix_seed(cfg.seed, detail::kEvalSalt));
    Rng unlabeled_rng(mix_seed(cfg.seed, detail::kUnlabeledSalt));
    const auto train_ctx = detail::make_contexts(train_pool, passes, cfg, train_rng);
    const auto eval_ctx = detail::make_contexts(eval_pool, passes, cfg, eval_rng);
    // Unlabeled text covers the whole entity pool, the way scraped encyclopedia
    // text mentions eval-topic entities even though no annotation does. Only
    // the labeled split is restricted; eval QA pairs never leak.
    const auto unlabeled_ctx = detail::make_contexts(entities, passes, cfg, unlabeled_rng);

    auto render_split = [&](const ToyLanguageSpec& spec) {
        ToySplit split;
        auto fill = [&](const std::vector<detail::BaseContext>& ctxs, Dataset& out,
                        const std::string& id_prefix) {
            std::size_t n = 0;
            for (const auto& ctx : ctxs) {
                const detail::Rendered rendered =
                    detail::render_tokens(detail::context_bases(ctx), spec);
                for (std::size_t fi = 0; fi < ctx.facts.size(); ++fi) {
                    const detail::BaseFact& fact = ctx.facts[fi];
                    QAExample ex;
                    ex.id = id_prefix + detail::pad4(n++);
                    ex.context = rendered.text;
                    ex.question =
                        detail::render_tokens(detail::question_bases(fact), spec).text;
                    // The value token of fact fi sits at token index fi*4 + 2.
                    const std::size_t ti = fi * 4 + 2;
                    ex.answers = {{rendered.tokens[ti], rendered.token_offsets[ti]}};
                    ex.context_lang = spec.language;
                    ex.question_lang = spec.language;
                    ex.provenance["origin"] = "toy";
                    out.examples.push_back(std::move(ex));
                }
            }
        };
        split.train.name = "toy-train-" + spec.language.str();
        split.train.source_kind = SourceKind::human;
        fill(train_ctx, split.train, "toy-train-");
        split.eval.name = "toy-eval-" + spec.language.str();
        split.eval.source_kind = SourceKind::human;
        fill(eval_ctx, split.eval, "toy-eval-");

        for (std::size_t i = 0; i < unlabeled_ctx.size(); ++i) {
            Article art;
            // Language-qualified: articles from several languages are pooled
            // for synthetic generation, and synthetic ids derive from these.
            art.id = "toy-art-" + spec.language.str() + "-" + detail::pad4(i);
            art.language = spec.language;
            const detail::Rendered rendered =
                detail::render_tokens(detail::context_bases(unlabeled_ctx[i]), spec);
            art.title = rendered.tokens.front();
            art.paragraphs = {rendered.text};
            split.unlabeled.push_back(std::move(art));
        }
        return split;
    };

    for (const ToyLanguageSpec& spec : world.specs)
        world.corpora.emplace(spec.language, render_split(spec));
    return world;
}

// Toy analogue of the cross-language evaluation pairs: contexts and gold
// answers from `context_lang`, questions from the id-aligned examples of
// `question_lang`.
inline Dataset cross_eval_set(const ToyWorld& world, LanguageCode context_lang,
                              LanguageCode question_lang) {
    const ToySplit& ctx_split = world.split_for(context_lang);
    const ToySplit& q_split = world.split_for(question_lang);
    if (ctx_split.eval.examples.size() != q_split.eval.examples.size())
        throw ValidationError("misaligned eval sets between " + context_lang.str() + " and " +
                              question_lang.str());

    Dataset out;
    out.name = "toy-cross-" + context_lang.str() + "-" + question_lang.str();
    out.source_kind = SourceKind::human;
    for (std::size_t i = 0; i < ctx_split.eval.examples.size(); ++i) {
        const QAExample& c = ctx_split.eval.examples[i];
        const QAExample& q = q_split.eval.examples[i];
        if (c.id != q.id)
            throw ValidationError("misaligned eval ids at index " + std::to_string(i) + ": \"" +
                                  c.id + "\" vs \"" + q.id + "\"");
        QAExample ex = c;
        ex.question = q.question;
        ex.question_lang = question_lang;
        out.examples.push_back(std::move(ex));
    }
    return out;
}

// Token-level translation between member languages (whitespace tokens,
// surface -> base -> surface). Unknown tokens are an error: the toy family
// has no out-of-vocabulary surface forms.
inline std::string translate_text(const ToyWorld& world, LanguageCode from, LanguageCode to,
                                  const std::string& text) {
    const ToyLanguageSpec& src = world.spec_for(from);
    const ToyLanguageSpec& dst = world.spec_for(to);
    std::map<std::string, std::string> inverse;
    for (const auto& [base, surface] : src.token_map) inverse[surface] = base;

    std::string out;
    std::size_t pos = 0;
    bool first = true;
    while (pos < text.size()) {
        std::size_t next = text.find(' ', pos);
        if (next == std::string::npos) next = text.size();
        if (next > pos) {
            const std::string token = text.substr(pos, next - pos);
            auto it = inverse.find(token);
            if (it == inverse.end())
                throw TranslateError("unknown token in toy translation", token, from.str(),
                                     to.str());
            if (!first) out += " ";
            out += dst.surface(it->second);
            first = false;
        }
        pos = next + 1;
    }
    return out;
}

// Dictionary rows for the pipeline's file-backed translator.
inline std::vector<std::pair<std::string, std::string>> dictionary_pairs(const ToyWorld& world,
                                                                         LanguageCode a,
                                                                         LanguageCode b) {
    const ToyLanguageSpec& sa = world.spec_for(a);
    const ToyLanguageSpec& sb = world.spec_for(b);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [base, surface_a] : sa.token_map) out.emplace_back(surface_a, sb.surface(base));
    return out;
}

// TSV rows: lang_a <TAB> lang_b <TAB> token_a <TAB> token_b.
inline void write_dictionary_tsv(const ToyWorld& world, LanguageCode a, LanguageCode b,
                                 const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    for (const auto& [ta, tb] : dictionary_pairs(world, a, b))
        out << a.str() << "\t" << b.str() << "\t" << ta << "\t" << tb << "\n";
    if (!out) throw IoError("write failure on \"" + path + "\"");
}

// Majority vote over language-unique surface tokens; shared tokens (the
// punctuation) carry no signal. Ties and all-shared inputs return nullopt.
inline augment::LangGuesser make_lang_guesser(const ToyWorld& world) {
    auto owner = std::make_shared<std::map<std::string, LanguageCode>>();
    std::set<std::string> shared;
    for (const auto& spec : world.specs)
        for (const auto& [base, surface] : spec.token_map) {
            auto it = owner->find(surface);
            if (it != owner->end() && it->second != spec.language)
                shared.insert(surface);
            else
                (*owner)[surface] = spec.language;
        }
    for (const std::string& s : shared) owner->erase(s);

    return [owner](const std::string& text) -> std::optional<LanguageCode> {
        std::map<LanguageCode, std::size_t> votes;
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t next = text.find(' ', pos);
            if (next == std::string::npos) next = text.size();
            if (next > pos) {
                auto it = owner->find(text.substr(pos, next - pos));
                if (it != owner->end()) votes[it->second] += 1;
            }
            pos = next + 1;
        }
        if (votes.empty()) return std::nullopt;
        auto best = votes.begin();
        bool tie = false;
        for (auto it = std::next(votes.begin()); it != votes.end(); ++it) {
            if (it->second > best->second) {
                best = it;
                tie = false;
            } else if (it->second == best->second) {
                tie = true;
            }
        }
        return tie ? std::nullopt : std::optional<LanguageCode>(best->first);
    };
}

// Perfect-skill reading oracle: parses the fixed question template and looks
// the fact up in the context. Proves the monolingual task is solvable, so any
// model deficit is attributable to transfer, not task noise.
inline std::string oracle_answer(const ToyWorld& world, LanguageCode language,
                                 const std::string& question, const std::string& context) {
    const ToyLanguageSpec& spec = world.spec_for(language);
    std::vector<std::string> q_tokens, c_tokens;
    auto split = [](const std::string& s, std::vector<std::string>& out) {
        std::size_t pos = 0;
        while (pos < s.size()) {
            std::size_t next = s.find(' ', pos);
            if (next == std::string::npos) next = s.size();
            if (next > pos) out.push_back(s.substr(pos, next - pos));
            pos = next + 1;
        }
    };
    split(question, q_tokens);
    split(context, c_tokens);
    if (q_tokens.size() != 4 || q_tokens[0] != spec.surface("which") || q_tokens[3] != "?")
        return {};
    const std::string& att = q_tokens[1];
    const std::string& ent = q_tokens[2];
    for (std::size_t i = 0; i + 2 < c_tokens.size(); ++i)
        if (c_tokens[i] == ent && c_tokens[i + 1] == att) return c_tokens[i + 2];
    return {};
}

}  // namespace xlaug::toybench
