#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <unistd.h>

#include "xlaug/prompts.hpp"
#include "xlaug/rng.hpp"

using namespace xlaug;
using namespace xlaug::prompts;

namespace {

QAExample qa_example() {
    QAExample ex;
    ex.id = "qa-1";
    ex.context = "Peyton Manning beat the Panthers";
    ex.question = "Who won?";
    ex.answers = {AnswerSpan{"Peyton Manning", 0}};
    ex.context_lang = lang("en");
    ex.question_lang = lang("en");
    return ex;
}

QGExample qg_example() {
    QGExample ex;
    ex.context = "The Broncos led by John Elway won in 1998.";
    ex.answer = AnswerSpan{"Broncos", 4};
    ex.target_question = "Which team won in 1998?";
    ex.target_lang = lang("en");
    return ex;
}

}  // namespace

TEST_CASE("encode_qa applies the question <SEP> context template") {
    const auto p = encode_qa(qa_example(), SpecialTokens{});
    CHECK(p.source == "Who won? <SEP> Peyton Manning beat the Panthers");
    CHECK(p.target == "Peyton Manning");
    CHECK(p.task == PromptTask::qa);
    CHECK(p.meta.example_id == "qa-1");

    const auto parts = parse_source(p.source, PromptTask::qa);
    REQUIRE(parts.size() == 2);
    CHECK(parts[0] == "Who won?");
    CHECK(parts[1] == "Peyton Manning beat the Panthers");
}

TEST_CASE("encode_qg puts the answer before the context") {
    const auto p = encode_qg(qg_example(), SpecialTokens{});
    CHECK(p.source == "Broncos <SEP> The Broncos led by John Elway won in 1998.");
    CHECK(p.target == "Which team won in 1998?");
    CHECK(p.task == PromptTask::qg);
}

TEST_CASE("separator inside a payload is an encode error") {
    auto ex = qa_example();
    ex.question = "Who <SEP> won?";
    CHECK_THROWS_AS(encode_qa(ex, SpecialTokens{}), ValidationError);

    auto qg = qg_example();
    qg.context += " <SEP> trailing";
    CHECK_THROWS_AS(encode_qg(qg, SpecialTokens{}), ValidationError);
}

TEST_CASE("empty QG answer or question is an error") {
    auto qg = qg_example();
    qg.answer.text = "";
    CHECK_THROWS_AS(encode_qg(qg, SpecialTokens{}), ValidationError);

    qg = qg_example();
    qg.target_question = "";
    CHECK_THROWS_AS(encode_qg(qg, SpecialTokens{}), ValidationError);
}

TEST_CASE("controlled QG prepends one control token per target language") {
    const auto tokens = make_special_tokens({lang("en"), lang("es"), lang("de")});
    const auto es = encode_qg_controlled(qg_example(), lang("es"), tokens,
                                         LangTokenMode::special_token);
    CHECK(es.source ==
          "<LANG:es> <SEP> Broncos <SEP> The Broncos led by John Elway won in 1998.");
    CHECK(es.meta.question_lang == lang("es"));

    const auto en = encode_qg_controlled(qg_example(), lang("en"), tokens,
                                         LangTokenMode::special_token);
    // Only the control token differs from the es encoding.
    CHECK(en.source.substr(en.source.find("<SEP>")) == es.source.substr(es.source.find("<SEP>")));

    const auto parts = parse_source(es.source, PromptTask::qg_controlled);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0] == "<LANG:es>");
    CHECK(parts[1] == "Broncos");
}

TEST_CASE("special_token mode only emits configured languages") {
    const auto tokens = make_special_tokens({lang("en"), lang("es")});
    CHECK_THROWS_AS(
        encode_qg_controlled(qg_example(), lang("fr"), tokens, LangTokenMode::special_token),
        ValidationError);
}

TEST_CASE("language_word mode renders names even for unseen languages") {
    const auto tokens = make_special_tokens({lang("en"), lang("es")});
    const auto p = encode_qg_controlled(qg_example(), lang("fr"), tokens,
                                        LangTokenMode::language_word);
    CHECK(p.source.rfind("Français <SEP> ", 0) == 0);

    const auto zh = encode_qg_controlled(qg_example(), lang("zh"), tokens,
                                         LangTokenMode::language_word);
    CHECK(zh.source.rfind("中文 <SEP> ", 0) == 0);
}

TEST_CASE("parse_source rejects wrong arity") {
    CHECK_THROWS_AS(parse_source("no separator here", PromptTask::qa), ParseError);
    CHECK_THROWS_AS(parse_source("a <SEP> b <SEP> c", PromptTask::qa), ParseError);
    CHECK_THROWS_AS(parse_source("a <SEP> b", PromptTask::qg_controlled), ParseError);
}

TEST_CASE("encode/parse round-trips over generated payloads") {
    Rng rng(404);
    const std::vector<std::string> words = {"alpha", "beta",  "gamma", "中文字",
                                            "मशीन",  "câu",   "جواب",  "Zürich",
                                            "1998",  "x-ray", "état",  "答案"};
    const auto langs = mlqa_languages();
    const auto tokens = make_special_tokens(langs);

    auto random_text = [&](std::size_t max_words) {
        std::string s;
        const std::size_t n = 1 + rng.below(max_words);
        for (std::size_t i = 0; i < n; ++i) {
            if (i) s += ' ';
            s += words[rng.below(words.size())];
        }
        return s;
    };

    for (int trial = 0; trial < 500; ++trial) {
        QGExample qg;
        qg.context = random_text(12);
        qg.answer = AnswerSpan{random_text(3), 0};
        qg.target_question = random_text(6);
        const LanguageCode target = langs[rng.below(langs.size())];
        qg.target_lang = target;

        const auto plain = encode_qg(qg, tokens);
        const auto plain_parts = parse_source(plain.source, PromptTask::qg, tokens);
        REQUIRE(plain_parts.size() == 2);
        CHECK(plain_parts[0] == qg.answer.text);
        CHECK(plain_parts[1] == qg.context);

        const auto ctl =
            encode_qg_controlled(qg, target, tokens, LangTokenMode::special_token);
        const auto ctl_parts = parse_source(ctl.source, PromptTask::qg_controlled, tokens);
        REQUIRE(ctl_parts.size() == 3);
        CHECK(ctl_parts[0] == lang_control_token(target));
        CHECK(ctl_parts[1] == qg.answer.text);
        CHECK(ctl_parts[2] == qg.context);

        QAExample qa;
        qa.id = "rt-" + std::to_string(trial);
        qa.question = random_text(6);
        qa.context = random_text(12);
        qa.answers = {AnswerSpan{qa.context.substr(0, qa.context.find(' ') == std::string::npos
                                                          ? qa.context.size()
                                                          : qa.context.find(' ')),
                                 0}};
        qa.context_lang = langs[rng.below(langs.size())];
        qa.question_lang = langs[rng.below(langs.size())];
        const auto enc = encode_qa(qa, tokens);
        const auto qa_parts = parse_source(enc.source, PromptTask::qa, tokens);
        REQUIRE(qa_parts.size() == 2);
        CHECK(qa_parts[0] == qa.question);
        CHECK(qa_parts[1] == qa.context);
    }
}

TEST_CASE("prompted pairs round-trip through JSONL") {
    const auto tokens = make_special_tokens({lang("en"), lang("zh")});
    std::vector<PromptedPair> pairs = {
        encode_qa(qa_example(), tokens),
        encode_qg(qg_example(), tokens),
        encode_qg_controlled(qg_example(), lang("zh"), tokens, LangTokenMode::special_token),
    };
    const auto path = std::filesystem::temp_directory_path() /
                      ("xlaug_prompts_" + std::to_string(::getpid()) + ".jsonl");
    save_pairs_jsonl(pairs, path.string());
    const auto back = load_pairs_jsonl(path.string());
    std::filesystem::remove(path);

    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(back[i].source == pairs[i].source);
        CHECK(back[i].target == pairs[i].target);
        CHECK(back[i].task == pairs[i].task);
        CHECK(back[i].meta.example_id == pairs[i].meta.example_id);
    }
}
