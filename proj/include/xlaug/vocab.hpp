#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "xlaug/errors.hpp"
#include "xlaug/unicode.hpp"

namespace xlaug::seq2seq {

// Model-side tokenizer: whitespace split, then each CJK character becomes its
// own token. Registered special tokens (e.g. "<SEP>", "<LANG:es>") survive
// intact. Unlike the metrics normalizer this neither lowercases nor strips
// punctuation — "." and "?" are ordinary tokens.
inline std::vector<std::string> tokenize(const std::string& text,
                                         const std::set<std::string>& special_tokens = {}) {
    std::vector<std::string> out;
    for (const std::string& chunk : unicode::split_whitespace(text)) {
        if (special_tokens.count(chunk)) {
            out.push_back(chunk);
            continue;
        }
        std::u32string run;
        for (char32_t cp : unicode::decode_utf8(chunk)) {
            if (unicode::is_cjk(cp)) {
                if (!run.empty()) {
                    out.push_back(unicode::encode_utf8(run));
                    run.clear();
                }
                out.push_back(unicode::encode_utf8(std::u32string(1, cp)));
            } else {
                run.push_back(cp);
            }
        }
        if (!run.empty()) out.push_back(unicode::encode_utf8(run));
    }
    return out;
}

// Token <-> id bijection with fixed reserved ids. Ids are assigned to special
// tokens first, then to corpus tokens in first-appearance order, so a rebuild
// from the same inputs is identical.
class Vocabulary {
  public:
    static constexpr std::uint32_t kPad = 0;
    static constexpr std::uint32_t kBos = 1;
    static constexpr std::uint32_t kEos = 2;
    static constexpr std::uint32_t kUnk = 3;

    Vocabulary() { install_reserved(); }

    static Vocabulary build(const std::vector<std::string>& texts,
                            const std::vector<std::string>& special_tokens) {
        Vocabulary v;
        for (const auto& s : special_tokens) {
            if (s.empty()) throw ValidationError("special token must be non-empty");
            v.special_.insert(s);
            v.intern(s);
        }
        for (const auto& text : texts)
            for (const auto& tok : tokenize(text, v.special_)) v.intern(tok);
        return v;
    }

    std::size_t size() const { return tokens_.size(); }

    std::uint32_t id_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    const std::string& token_of(std::uint32_t id) const {
        if (id >= tokens_.size())
            throw ValidationError("token id " + std::to_string(id) + " out of range");
        return tokens_[id];
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    const std::set<std::string>& special_tokens() const { return special_; }

    std::vector<std::uint32_t> encode(const std::string& text) const {
        std::vector<std::uint32_t> ids;
        for (const auto& tok : tokenize(text, special_)) ids.push_back(id_of(tok));
        return ids;
    }

    // Joins with single spaces, skipping the reserved control ids.
    std::string decode(const std::vector<std::uint32_t>& ids) const {
        std::string out;
        for (std::uint32_t id : ids) {
            if (id == kPad || id == kBos || id == kEos) continue;
            if (!out.empty()) out += ' ';
            out += token_of(id);
        }
        return out;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"tokens", tokens_},
            {"special", std::vector<std::string>(special_.begin(), special_.end())}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        const auto toks = j.at("tokens").get<std::vector<std::string>>();
        if (toks.size() < kReservedCount)
            throw ValidationError("vocabulary is missing its reserved tokens");
        for (std::size_t i = 0; i < kReservedCount; ++i)
            if (toks[i] != v.tokens_[i])
                throw ValidationError("vocabulary reserved token mismatch at id " +
                                      std::to_string(i));
        for (std::size_t i = kReservedCount; i < toks.size(); ++i) v.intern(toks[i]);
        for (const auto& s : j.at("special").get<std::vector<std::string>>()) v.special_.insert(s);
        return v;
    }

    bool operator==(const Vocabulary& o) const {
        return tokens_ == o.tokens_ && special_ == o.special_;
    }

  private:
    static constexpr std::size_t kReservedCount = 4;

    void install_reserved() {
        intern("<pad>");
        intern("<s>");
        intern("</s>");
        intern("<unk>");
    }

    std::uint32_t intern(const std::string& token) {
        auto it = index_.find(token);
        if (it != index_.end()) return it->second;
        const auto id = static_cast<std::uint32_t>(tokens_.size());
        tokens_.push_back(token);
        index_.emplace(token, id);
        return id;
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t> index_;
    std::set<std::string> special_;
};

}  // namespace xlaug::seq2seq
