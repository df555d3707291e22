#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "xlaug/augment.hpp"
#include "xlaug/metrics.hpp"
#include "xlaug/toybench.hpp"

using namespace xlaug;
using toybench::ToyWorld;
using toybench::ToyWorldConfig;

namespace {

// Small world keeps the suite fast without losing any structural property.
ToyWorldConfig small_config(std::uint64_t seed = 7) {
    ToyWorldConfig cfg;
    cfg.n_entities = 16;
    cfg.n_attributes = 4;
    cfg.n_values = 6;
    cfg.facts_per_context = 3;
    cfg.languages = {lang("en"), lang("es"), lang("de")};
    cfg.seed = seed;
    return cfg;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("xlaug_toy_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("toy config validation") {
    REQUIRE_NOTHROW(ToyWorldConfig{}.validate());

    ToyWorldConfig cfg = small_config();
    REQUIRE_NOTHROW(cfg.validate());

    SECTION("counts below two") {
        cfg.n_values = 1;
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
    }
    SECTION("languages must be present and distinct") {
        cfg.languages.clear();
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
        cfg.languages = {lang("en"), lang("en")};
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
    }
    SECTION("attributes and values must cover one context") {
        cfg.n_attributes = 2;  // < facts_per_context
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
        cfg = small_config();
        cfg.n_values = 2;
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
    }
    SECTION("too few entities for disjoint splits") {
        cfg.n_entities = 5;  // eval takes 3, leaving 2 < facts_per_context
        REQUIRE_THROWS_AS(cfg.validate(), ValidationError);
        cfg.n_entities = 6;  // eval 3, train 3: exactly enough
        REQUIRE_NOTHROW(cfg.validate());
    }
}

TEST_CASE("toy corpus shape and id alignment across languages") {
    const ToyWorldConfig cfg = small_config();
    const ToyWorld world = toybench::build_toy_corpus(cfg);

    REQUIRE(world.specs.size() == 3);
    REQUIRE(world.corpora.size() == 3);

    // passes = n_attributes; train pool 12 entities -> 4 contexts/pass,
    // eval pool 4 -> 1 context/pass; one example per fact. Unlabeled text
    // draws from the full 16-entity pool -> 5 contexts/pass.
    const std::size_t train_expect = 4 * 4 * 3;
    const std::size_t eval_expect = 4 * 1 * 3;
    const std::size_t unlabeled_expect = 4 * 5;

    const auto& en = world.split_for(lang("en"));
    for (LanguageCode lc : cfg.languages) {
        const auto& split = world.split_for(lc);
        REQUIRE(split.train.examples.size() == train_expect);
        REQUIRE(split.eval.examples.size() == eval_expect);
        REQUIRE(split.unlabeled.size() == unlabeled_expect);
        REQUIRE_NOTHROW(corpus::require_valid(split.train));
        REQUIRE_NOTHROW(corpus::require_valid(split.eval));

        for (std::size_t i = 0; i < train_expect; ++i) {
            const QAExample& a = en.train.examples[i];
            const QAExample& b = split.train.examples[i];
            REQUIRE(a.id == b.id);
            REQUIRE(b.context_lang == lc);
            REQUIRE(b.question_lang == lc);
            // Same template structure: equal token counts everywhere.
            REQUIRE(split_ws(a.context).size() == split_ws(b.context).size());
            REQUIRE(split_ws(a.question).size() == split_ws(b.question).size());
        }
        // Unlabeled ids are language-qualified so multi-language article
        // pools stay collision-free; the numeric tail is aligned.
        const std::string en_prefix = "toy-art-en-";
        for (std::size_t i = 0; i < unlabeled_expect; ++i)
            REQUIRE(split.unlabeled[i].id ==
                    "toy-art-" + lc.str() + "-" + en.unlabeled[i].id.substr(en_prefix.size()));
    }
}

TEST_CASE("per-language corpora are exact token-mapped images") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto& en = world.split_for(lang("en"));
    const auto& es = world.split_for(lang("es"));

    for (std::size_t i = 0; i < en.train.examples.size(); ++i) {
        const QAExample& a = en.train.examples[i];
        const QAExample& b = es.train.examples[i];
        REQUIRE(toybench::translate_text(world, lang("en"), lang("es"), a.context) == b.context);
        REQUIRE(toybench::translate_text(world, lang("en"), lang("es"), a.question) == b.question);
        REQUIRE(toybench::translate_text(world, lang("en"), lang("es"), a.answers[0].text) ==
                b.answers[0].text);
    }
    for (std::size_t i = 0; i < en.unlabeled.size(); ++i)
        REQUIRE(toybench::translate_text(world, lang("en"), lang("es"),
                                         en.unlabeled[i].paragraphs[0]) ==
                es.unlabeled[i].paragraphs[0]);
}

TEST_CASE("train and eval entity sets are disjoint") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    for (LanguageCode lc : world.config.languages) {
        const auto& split = world.split_for(lc);
        auto entities_of = [](const Dataset& ds) {
            std::set<std::string> out;
            for (const auto& ex : ds.examples) {
                const auto tokens = split_ws(ex.context);
                for (std::size_t i = 0; i < tokens.size(); i += 4) out.insert(tokens[i]);
            }
            return out;
        };
        const auto train_ents = entities_of(split.train);
        const auto eval_ents = entities_of(split.eval);
        REQUIRE_FALSE(train_ents.empty());
        REQUIRE_FALSE(eval_ents.empty());
        for (const auto& e : eval_ents) REQUIRE(train_ents.count(e) == 0);

        // Unlabeled articles cover the whole entity pool: every mention is a
        // known entity, and eval entities do appear (they are only excluded
        // from annotation, not from raw text).
        std::set<std::string> unlabeled_ents;
        for (const auto& art : split.unlabeled) {
            const auto tokens = split_ws(art.paragraphs[0]);
            for (std::size_t i = 0; i < tokens.size(); i += 4) {
                REQUIRE((train_ents.count(tokens[i]) == 1 || eval_ents.count(tokens[i]) == 1));
                unlabeled_ents.insert(tokens[i]);
            }
        }
        for (const auto& e : eval_ents) REQUIRE(unlabeled_ents.count(e) == 1);
    }
}

TEST_CASE("toy corpus generation is byte-deterministic") {
    const ToyWorldConfig cfg = small_config(11);
    const ToyWorld a = toybench::build_toy_corpus(cfg);
    const ToyWorld b = toybench::build_toy_corpus(cfg);

    TempDir dir;
    corpus::save_jsonl(a.split_for(lang("es")).train, dir.file("a.jsonl"));
    corpus::save_jsonl(b.split_for(lang("es")).train, dir.file("b.jsonl"));
    REQUIRE(slurp(dir.file("a.jsonl")) == slurp(dir.file("b.jsonl")));
    REQUIRE(a.split_for(lang("de")).eval.examples == b.split_for(lang("de")).eval.examples);
    REQUIRE(a.split_for(lang("en")).unlabeled == b.split_for(lang("en")).unlabeled);

    // A different seed reshuffles the world.
    const ToyWorld c = toybench::build_toy_corpus(small_config(12));
    REQUIRE_FALSE(a.split_for(lang("es")).train.examples ==
                  c.split_for(lang("es")).train.examples);
}

TEST_CASE("toy translation round-trips and rejects foreign tokens") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto& es = world.split_for(lang("es"));
    for (const auto& ex : es.eval.examples) {
        const std::string de = toybench::translate_text(world, lang("es"), lang("de"), ex.context);
        REQUIRE(toybench::translate_text(world, lang("de"), lang("es"), de) == ex.context);
    }

    try {
        toybench::translate_text(world, lang("es"), lang("de"), "bogus");
        FAIL("expected TranslateError");
    } catch (const TranslateError& e) {
        REQUIRE(e.token() == "bogus");
        REQUIRE(e.from() == "es");
        REQUIRE(e.to() == "de");
    }
    REQUIRE_THROWS_AS(toybench::translate_text(world, lang("es"), lang("vi"), "."),
                      ValidationError);
}

TEST_CASE("dictionary export covers the full token map") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto pairs = toybench::dictionary_pairs(world, lang("en"), lang("de"));
    REQUIRE(pairs.size() == world.spec_for(lang("en")).token_map.size());

    std::set<std::string> lhs;
    for (const auto& [a, b] : pairs) {
        lhs.insert(a);
        if (a == "." || a == "?") {
            REQUIRE(b == a);  // punctuation is shared
        } else {
            REQUIRE(a.ends_with("en"));
            REQUIRE(b.ends_with("de"));
        }
    }
    REQUIRE(lhs.size() == pairs.size());  // injective on the source side

    TempDir dir;
    toybench::write_dictionary_tsv(world, lang("en"), lang("de"), dir.file("dict.tsv"));
    std::size_t rows = 0;
    std::ifstream in(dir.file("dict.tsv"));
    std::string line;
    while (std::getline(in, line)) {
        ++rows;
        const auto cols = [&] {
            std::vector<std::string> c;
            std::size_t pos = 0;
            while (true) {
                std::size_t tab = line.find('\t', pos);
                c.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
                if (tab == std::string::npos) break;
                pos = tab + 1;
            }
            return c;
        }();
        REQUIRE(cols.size() == 4);
        REQUIRE(cols[0] == "en");
        REQUIRE(cols[1] == "de");
    }
    REQUIRE(rows == pairs.size());
}

TEST_CASE("cross eval sets pair contexts with foreign questions") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto& es = world.split_for(lang("es"));
    const auto& de = world.split_for(lang("de"));

    // Diagonal: identical examples to the ordinary monolingual eval set.
    const Dataset diag = toybench::cross_eval_set(world, lang("es"), lang("es"));
    REQUIRE(diag.examples == es.eval.examples);

    const Dataset cross = toybench::cross_eval_set(world, lang("es"), lang("de"));
    REQUIRE(cross.examples.size() == es.eval.examples.size());
    for (std::size_t i = 0; i < cross.examples.size(); ++i) {
        const QAExample& ex = cross.examples[i];
        REQUIRE(ex.id == es.eval.examples[i].id);
        REQUIRE(ex.context == es.eval.examples[i].context);
        REQUIRE(ex.answers[0].text == es.eval.examples[i].answers[0].text);
        REQUIRE(ex.question == de.eval.examples[i].question);
        REQUIRE(ex.context_lang == lang("es"));
        REQUIRE(ex.question_lang == lang("de"));
    }
    REQUIRE_NOTHROW(corpus::require_valid(cross));

    // Misaligned ids are refused.
    ToyWorld tampered = world;
    tampered.corpora.at(lang("de")).eval.examples[1].id = "toy-eval-9999";
    REQUIRE_THROWS_AS(toybench::cross_eval_set(tampered, lang("es"), lang("de")),
                      ValidationError);
    REQUIRE_THROWS_AS(toybench::cross_eval_set(world, lang("es"), lang("vi")), ValidationError);
}

TEST_CASE("perfect-skill oracle solves every monolingual eval set exactly") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    for (LanguageCode lc : world.config.languages) {
        const auto& split = world.split_for(lc);
        std::map<std::string, std::string> preds;
        for (const auto& ex : split.eval.examples) {
            const std::string ans = toybench::oracle_answer(world, lc, ex.question, ex.context);
            REQUIRE(ans == ex.answers[0].text);
            preds[ex.id] = ans;
        }
        const metrics::EvalReport report = metrics::evaluate(split.eval.examples, preds);
        REQUIRE(report.macro_em == 1.0);
        REQUIRE(report.macro_f1 == 1.0);
    }
    // Malformed questions degrade to an empty answer rather than throwing.
    REQUIRE(toybench::oracle_answer(world, lang("en"), "not a toy question", "ctx").empty());
}

TEST_CASE("language guesser votes on unique surface tokens") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto guess = toybench::make_lang_guesser(world);
    const auto& es = world.split_for(lang("es"));
    for (const auto& ex : es.eval.examples) {
        auto g = guess(ex.question);
        REQUIRE(g.has_value());
        REQUIRE(*g == lang("es"));
    }
    REQUIRE_FALSE(guess(". ?").has_value());      // shared tokens only
    REQUIRE_FALSE(guess("gibberish").has_value());
}

TEST_CASE("answer candidates on toy paragraphs recover exactly the values") {
    const ToyWorld world = toybench::build_toy_corpus(small_config());
    const auto& split = world.split_for(lang("es"));

    augment::CandidateConfig ccfg;
    ccfg.per_paragraph = 10;
    ccfg.max_span_tokens = 1;
    ccfg.random_ngrams = false;

    for (const auto& art : split.unlabeled) {
        const std::string& para = art.paragraphs[0];
        const auto cands = augment::extract_answer_candidates(para, lang("es"), ccfg);
        std::set<std::string> got;
        for (const auto& c : cands) {
            REQUIRE(c.text.size() > 3);
            REQUIRE(c.text.substr(0, 3) == "Val");
            got.insert(c.text);
        }
        std::set<std::string> want;
        const auto tokens = split_ws(para);
        for (std::size_t i = 2; i < tokens.size(); i += 4) want.insert(tokens[i]);
        REQUIRE(got == want);
    }
}
