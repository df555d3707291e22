#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "xlaug/errors.hpp"
#include "xlaug/prompts.hpp"
#include "xlaug/rng.hpp"
#include "xlaug/vocab.hpp"

namespace xlaug::seq2seq {

enum class Precision { f32, f64 };

inline std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision precision_from_string(const std::string& s) {
    if (s == "f32") return Precision::f32;
    if (s == "f64") return Precision::f64;
    throw ValidationError("unknown precision \"" + s + "\"");
}

struct ModelConfig {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 64;
    std::size_t hidden_dim = 128;
    std::size_t layers = 2;
    std::size_t max_source_len = 128;
    std::size_t max_target_len = 32;
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    std::size_t memory_budget_bytes = std::size_t{1} << 29;

    void validate() const {
        if (vocab_size < 1 || embed_dim < 1 || hidden_dim < 1 || layers < 1)
            throw ValidationError("all model dimensions must be >= 1");
        if (max_source_len < 2 || max_target_len < 2)
            throw ValidationError("max sequence lengths must be >= 2");
    }

    bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"vocab_size", c.vocab_size},
                          {"embed_dim", c.embed_dim},
                          {"hidden_dim", c.hidden_dim},
                          {"layers", c.layers},
                          {"max_source_len", c.max_source_len},
                          {"max_target_len", c.max_target_len},
                          {"seed", c.seed},
                          {"precision", to_string(c.precision)},
                          {"memory_budget_bytes", c.memory_budget_bytes}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.max_source_len = j.at("max_source_len").get<std::size_t>();
    c.max_target_len = j.at("max_target_len").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.precision = precision_from_string(j.at("precision").get<std::string>());
    c.memory_budget_bytes = j.at("memory_budget_bytes").get<std::size_t>();
    return c;
}

struct TrainConfig {
    std::size_t epochs = 5;
    std::size_t batch_size = 32;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double clip_norm = 1.0;
    // Decoupled weight decay on weight matrices. Biases and the embedding are
    // exempt: a token that never receives a gradient must keep its init
    // vector, or every rare token would collapse onto the origin.
    double weight_decay = 0.0;
    std::uint64_t shuffle_seed = 0;

    void validate() const {
        if (epochs < 1) throw ValidationError("epochs must be >= 1");
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
        if (!(clip_norm > 0.0)) throw ValidationError("clip_norm must be > 0");
        if (weight_decay < 0.0) throw ValidationError("weight_decay must be >= 0");
    }

    bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    return nlohmann::json{{"epochs", c.epochs},
                          {"batch_size", c.batch_size},
                          {"learning_rate", c.learning_rate},
                          {"beta1", c.beta1},
                          {"beta2", c.beta2},
                          {"adam_eps", c.adam_eps},
                          {"clip_norm", c.clip_norm},
                          {"weight_decay", c.weight_decay},
                          {"shuffle_seed", c.shuffle_seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.adam_eps = j.at("adam_eps").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    c.weight_decay = j.value("weight_decay", 0.0);
    c.shuffle_seed = j.at("shuffle_seed").get<std::uint64_t>();
    return c;
}

template <typename Scalar>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<Scalar> data;

    static Tensor zeros(std::vector<std::size_t> s) {
        Tensor t;
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        t.shape = std::move(s);
        t.data.assign(n, Scalar{0});
        return t;
    }

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
};

// Fixed parameter registry. Order defines serialization layout, Adam
// iteration order, and init draw order; never reorder without bumping the
// checkpoint version.
struct Layout {
    std::size_t vocab, embed, hidden, layers;

    static constexpr std::size_t kGru = 9;  // Wz Uz bz Wr Ur br Wh Uh bh

    explicit Layout(const ModelConfig& c)
        : vocab(c.vocab_size), embed(c.embed_dim), hidden(c.hidden_dim), layers(c.layers) {}

    std::size_t idx_embed() const { return 0; }
    std::size_t idx_enc(std::size_t layer, std::size_t dir) const {
        return 1 + (layer * 2 + dir) * kGru;
    }
    std::size_t idx_bridge_w(std::size_t layer) const { return 1 + layers * 2 * kGru + layer * 2; }
    std::size_t idx_bridge_b(std::size_t layer) const { return idx_bridge_w(layer) + 1; }
    std::size_t idx_dec(std::size_t layer) const {
        return 1 + layers * 2 * kGru + layers * 2 + layer * kGru;
    }
    std::size_t idx_wa() const { return idx_dec(layers); }
    std::size_t idx_wc() const { return idx_wa() + 1; }
    std::size_t idx_bc() const { return idx_wa() + 2; }
    std::size_t idx_wo() const { return idx_wa() + 3; }
    std::size_t idx_bo() const { return idx_wa() + 4; }
    std::size_t total() const { return idx_wa() + 5; }

    std::size_t enc_in_dim(std::size_t layer) const { return layer == 0 ? embed : 2 * hidden; }
    std::size_t dec_in_dim(std::size_t layer) const { return layer == 0 ? embed : hidden; }

    std::vector<ParamSpec> specs() const {
        std::vector<ParamSpec> out(total());
        out[idx_embed()] = {"embedding", {vocab, embed}};
        auto gru = [&](std::size_t base, const std::string& prefix, std::size_t in_dim) {
            const std::size_t h = hidden;
            out[base + 0] = {prefix + ".Wz", {h, in_dim}};
            out[base + 1] = {prefix + ".Uz", {h, h}};
            out[base + 2] = {prefix + ".bz", {h}};
            out[base + 3] = {prefix + ".Wr", {h, in_dim}};
            out[base + 4] = {prefix + ".Ur", {h, h}};
            out[base + 5] = {prefix + ".br", {h}};
            out[base + 6] = {prefix + ".Wh", {h, in_dim}};
            out[base + 7] = {prefix + ".Uh", {h, h}};
            out[base + 8] = {prefix + ".bh", {h}};
        };
        for (std::size_t l = 0; l < layers; ++l) {
            gru(idx_enc(l, 0), "encoder.l" + std::to_string(l) + ".fw", enc_in_dim(l));
            gru(idx_enc(l, 1), "encoder.l" + std::to_string(l) + ".bw", enc_in_dim(l));
        }
        for (std::size_t l = 0; l < layers; ++l) {
            out[idx_bridge_w(l)] = {"bridge.l" + std::to_string(l) + ".W", {hidden, 2 * hidden}};
            out[idx_bridge_b(l)] = {"bridge.l" + std::to_string(l) + ".b", {hidden}};
        }
        for (std::size_t l = 0; l < layers; ++l)
            gru(idx_dec(l), "decoder.l" + std::to_string(l), dec_in_dim(l));
        out[idx_wa()] = {"attention.Wa", {hidden, 2 * hidden}};
        out[idx_wc()] = {"combine.Wc", {hidden, 3 * hidden}};
        out[idx_bc()] = {"combine.bc", {hidden}};
        out[idx_wo()] = {"output.Wo", {vocab, hidden}};
        out[idx_bo()] = {"output.bo", {vocab}};
        return out;
    }
};

template <typename Scalar>
struct State {
    using ScalarType = Scalar;

    ModelConfig config;
    Vocabulary vocab;
    std::vector<Tensor<Scalar>> params;
    std::vector<Tensor<Scalar>> adam_m;
    std::vector<Tensor<Scalar>> adam_v;
    std::uint64_t step = 0;
};

struct Checkpoint {
    std::variant<State<float>, State<double>> state;

    const ModelConfig& config() const {
        return std::visit([](const auto& s) -> const ModelConfig& { return s.config; }, state);
    }
    const Vocabulary& vocab() const {
        return std::visit([](const auto& s) -> const Vocabulary& { return s.vocab; }, state);
    }
    std::uint64_t step() const {
        return std::visit([](const auto& s) { return s.step; }, state);
    }
    Precision precision() const { return config().precision; }
};

namespace detail {

// Stream salts: keep init, shuffle, and grad-check draws independent.
inline constexpr std::uint64_t kInitSalt = 0x1A17u;
inline constexpr std::uint64_t kShuffleSalt = 0x5A0Fu;
inline constexpr std::uint64_t kGradCheckSalt = 0x6C0Du;

// ---- flat linear-algebra helpers (row-major, fixed accumulation order) ----

template <typename Scalar>
inline void matvec_add(const Scalar* w, const Scalar* x, Scalar* y, std::size_t rows,
                       std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar* row = w + r * cols;
        Scalar acc = 0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// x += Wᵀ a
template <typename Scalar>
inline void matvec_t_add(const Scalar* w, const Scalar* a, Scalar* x, std::size_t rows,
                         std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar ar = a[r];
        if (ar == Scalar{0}) continue;
        const Scalar* row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) x[c] += row[c] * ar;
    }
}

// dW += a xᵀ
template <typename Scalar>
inline void outer_add(Scalar* dw, const Scalar* a, const Scalar* x, std::size_t rows,
                      std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const Scalar ar = a[r];
        if (ar == Scalar{0}) continue;
        Scalar* row = dw + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += ar * x[c];
    }
}

template <typename Scalar>
inline Scalar sigmoid(Scalar x) {
    return Scalar{1} / (Scalar{1} + std::exp(-x));
}

template <typename Scalar>
inline void softmax_inplace(std::vector<Scalar>& v) {
    Scalar mx = v[0];
    for (Scalar x : v) mx = std::max(mx, x);
    Scalar sum = 0;
    for (Scalar& x : v) {
        x = std::exp(x - mx);
        sum += x;
    }
    for (Scalar& x : v) x /= sum;
}

template <typename Scalar>
struct GruCache {
    std::vector<Scalar> z, r, c, h;
};

// References into the parameter registry for one GRU cell.
template <typename Scalar>
struct GruView {
    const Scalar *wz, *uz, *bz, *wr, *ur, *br, *wh, *uh, *bh;
    std::size_t in_dim, hidden;

    GruView(const std::vector<Tensor<Scalar>>& p, std::size_t base, std::size_t in,
            std::size_t h)
        : wz(p[base + 0].data.data()),
          uz(p[base + 1].data.data()),
          bz(p[base + 2].data.data()),
          wr(p[base + 3].data.data()),
          ur(p[base + 4].data.data()),
          br(p[base + 5].data.data()),
          wh(p[base + 6].data.data()),
          uh(p[base + 7].data.data()),
          bh(p[base + 8].data.data()),
          in_dim(in),
          hidden(h) {}
};

template <typename Scalar>
struct GruGradView {
    Scalar *wz, *uz, *bz, *wr, *ur, *br, *wh, *uh, *bh;
    std::size_t in_dim, hidden;

    GruGradView(std::vector<Tensor<Scalar>>& g, std::size_t base, std::size_t in, std::size_t h)
        : wz(g[base + 0].data.data()),
          uz(g[base + 1].data.data()),
          bz(g[base + 2].data.data()),
          wr(g[base + 3].data.data()),
          ur(g[base + 4].data.data()),
          br(g[base + 5].data.data()),
          wh(g[base + 6].data.data()),
          uh(g[base + 7].data.data()),
          bh(g[base + 8].data.data()),
          in_dim(in),
          hidden(h) {}
};

// h_t = (1 - z)⊙h_prev + z⊙c, Cho-style gates.
template <typename Scalar>
inline void gru_forward(const GruView<Scalar>& p, const Scalar* x, const Scalar* h_prev,
                        GruCache<Scalar>& cache) {
    const std::size_t h = p.hidden;
    cache.z.assign(h, 0);
    cache.r.assign(h, 0);
    cache.c.assign(h, 0);
    cache.h.assign(h, 0);

    std::vector<Scalar>& z = cache.z;
    std::vector<Scalar>& r = cache.r;
    std::vector<Scalar>& c = cache.c;

    for (std::size_t i = 0; i < h; ++i) z[i] = p.bz[i];
    matvec_add(p.wz, x, z.data(), h, p.in_dim);
    matvec_add(p.uz, h_prev, z.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) z[i] = sigmoid(z[i]);

    for (std::size_t i = 0; i < h; ++i) r[i] = p.br[i];
    matvec_add(p.wr, x, r.data(), h, p.in_dim);
    matvec_add(p.ur, h_prev, r.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) r[i] = sigmoid(r[i]);

    std::vector<Scalar> rh(h);
    for (std::size_t i = 0; i < h; ++i) rh[i] = r[i] * h_prev[i];
    for (std::size_t i = 0; i < h; ++i) c[i] = p.bh[i];
    matvec_add(p.wh, x, c.data(), h, p.in_dim);
    matvec_add(p.uh, rh.data(), c.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) c[i] = std::tanh(c[i]);

    for (std::size_t i = 0; i < h; ++i)
        cache.h[i] = (Scalar{1} - z[i]) * h_prev[i] + z[i] * c[i];
}

// Backward for one step. dh is consumed; dx and dh_prev are accumulated into.
template <typename Scalar>
inline void gru_backward(const GruView<Scalar>& p, GruGradView<Scalar>& g, const Scalar* x,
                         const Scalar* h_prev, const GruCache<Scalar>& cache, const Scalar* dh,
                         Scalar* dx, Scalar* dh_prev) {
    const std::size_t h = p.hidden;
    std::vector<Scalar> da_z(h), da_r(h), da_c(h), dr(h, 0), tmp(h, 0);

    // Gate-output gradients.
    for (std::size_t i = 0; i < h; ++i) {
        const Scalar dzi = dh[i] * (cache.c[i] - h_prev[i]);
        const Scalar dci = dh[i] * cache.z[i];
        dh_prev[i] += dh[i] * (Scalar{1} - cache.z[i]);
        da_z[i] = dzi * cache.z[i] * (Scalar{1} - cache.z[i]);
        da_c[i] = dci * (Scalar{1} - cache.c[i] * cache.c[i]);
    }

    // Candidate path: c = tanh(Wh x + Uh (r⊙h_prev) + bh).
    std::vector<Scalar> rh(h);
    for (std::size_t i = 0; i < h; ++i) rh[i] = cache.r[i] * h_prev[i];
    outer_add(g.wh, da_c.data(), x, h, p.in_dim);
    outer_add(g.uh, da_c.data(), rh.data(), h, h);
    for (std::size_t i = 0; i < h; ++i) g.bh[i] += da_c[i];
    matvec_t_add(p.uh, da_c.data(), tmp.data(), h, h);  // tmp = Uhᵀ da_c
    for (std::size_t i = 0; i < h; ++i) {
        dr[i] = tmp[i] * h_prev[i];
        dh_prev[i] += tmp[i] * cache.r[i];
        da_r[i] = dr[i] * cache.r[i] * (Scalar{1} - cache.r[i]);
    }

    // Update gate.
    outer_add(g.wz, da_z.data(), x, h, p.in_dim);
    outer_add(g.uz, da_z.data(), h_prev, h, h);
    for (std::size_t i = 0; i < h; ++i) g.bz[i] += da_z[i];
    matvec_t_add(p.uz, da_z.data(), dh_prev, h, h);

    // Reset gate.
    outer_add(g.wr, da_r.data(), x, h, p.in_dim);
    outer_add(g.ur, da_r.data(), h_prev, h, h);
    for (std::size_t i = 0; i < h; ++i) g.br[i] += da_r[i];
    matvec_t_add(p.ur, da_r.data(), dh_prev, h, h);

    matvec_t_add(p.wz, da_z.data(), dx, h, p.in_dim);
    matvec_t_add(p.wr, da_r.data(), dx, h, p.in_dim);
    matvec_t_add(p.wh, da_c.data(), dx, h, p.in_dim);
}

template <typename Scalar>
struct EncoderCaches {
    std::vector<std::uint32_t> src;
    std::vector<std::vector<Scalar>> embed;                     // [T][E]
    std::vector<std::vector<std::vector<Scalar>>> layer_out;    // [L][T][2H]
    std::vector<std::vector<GruCache<Scalar>>> fw, bw;          // [L][T]
    std::vector<std::vector<Scalar>> bridge_u;                  // [L][2H]
    std::vector<std::vector<Scalar>> h0;                        // [L][H]
    std::vector<std::vector<Scalar>> attn_q;                    // [T][H], q_j = Wa e_j
};

template <typename Scalar>
struct DecPosCache {
    std::uint32_t input = 0, gold = 0;
    std::vector<Scalar> x;                   // [E]
    std::vector<GruCache<Scalar>> layer;     // [L]
    std::vector<Scalar> alpha;               // [T]
    std::vector<Scalar> ctx;                 // [2H]
    std::vector<Scalar> comb;                // [H]
    std::vector<Scalar> probs;               // [V]
};

template <typename Scalar>
class Exec {
  public:
    explicit Exec(const State<Scalar>& st) : st_(st), lay_(st.config) {}

    const Layout& layout() const { return lay_; }

    void check_ids(const std::vector<std::uint32_t>& ids) const {
        for (std::uint32_t id : ids)
            if (id >= st_.config.vocab_size)
                throw ValidationError("token id " + std::to_string(id) +
                                      " is outside the vocabulary (size " +
                                      std::to_string(st_.config.vocab_size) + ")");
    }

    void encode(const std::vector<std::uint32_t>& src_ids, EncoderCaches<Scalar>& ec) const {
        const std::size_t h = lay_.hidden;
        const std::size_t e = lay_.embed;
        const std::size_t L = lay_.layers;

        ec.src = src_ids;
        if (ec.src.empty()) ec.src.push_back(Vocabulary::kUnk);
        if (ec.src.size() > st_.config.max_source_len) ec.src.resize(st_.config.max_source_len);
        const std::size_t T = ec.src.size();

        const Scalar* emb = st_.params[lay_.idx_embed()].data.data();
        ec.embed.assign(T, std::vector<Scalar>(e));
        for (std::size_t t = 0; t < T; ++t)
            std::copy(emb + ec.src[t] * e, emb + (ec.src[t] + 1) * e, ec.embed[t].begin());

        ec.layer_out.assign(L, {});
        ec.fw.assign(L, {});
        ec.bw.assign(L, {});
        const std::vector<Scalar> zero(h, 0);
        for (std::size_t l = 0; l < L; ++l) {
            const std::size_t in_dim = lay_.enc_in_dim(l);
            GruView<Scalar> fw(st_.params, lay_.idx_enc(l, 0), in_dim, h);
            GruView<Scalar> bw(st_.params, lay_.idx_enc(l, 1), in_dim, h);
            ec.fw[l].resize(T);
            ec.bw[l].resize(T);
            auto input_at = [&](std::size_t t) -> const Scalar* {
                return l == 0 ? ec.embed[t].data() : ec.layer_out[l - 1][t].data();
            };
            for (std::size_t t = 0; t < T; ++t) {
                const Scalar* h_prev = t == 0 ? zero.data() : ec.fw[l][t - 1].h.data();
                gru_forward(fw, input_at(t), h_prev, ec.fw[l][t]);
            }
            for (std::size_t ti = T; ti-- > 0;) {
                const Scalar* h_prev = ti + 1 == T ? zero.data() : ec.bw[l][ti + 1].h.data();
                gru_forward(bw, input_at(ti), h_prev, ec.bw[l][ti]);
            }
            ec.layer_out[l].assign(T, std::vector<Scalar>(2 * h));
            for (std::size_t t = 0; t < T; ++t) {
                std::copy(ec.fw[l][t].h.begin(), ec.fw[l][t].h.end(), ec.layer_out[l][t].begin());
                std::copy(ec.bw[l][t].h.begin(), ec.bw[l][t].h.end(),
                          ec.layer_out[l][t].begin() + h);
            }
        }

        // Bridge: initial decoder state per layer from the encoder's endpoints.
        ec.bridge_u.assign(L, std::vector<Scalar>(2 * h));
        ec.h0.assign(L, std::vector<Scalar>(h));
        for (std::size_t l = 0; l < L; ++l) {
            std::copy(ec.fw[l][T - 1].h.begin(), ec.fw[l][T - 1].h.end(), ec.bridge_u[l].begin());
            std::copy(ec.bw[l][0].h.begin(), ec.bw[l][0].h.end(), ec.bridge_u[l].begin() + h);
            std::vector<Scalar>& h0 = ec.h0[l];
            const Tensor<Scalar>& wb = st_.params[lay_.idx_bridge_w(l)];
            const Tensor<Scalar>& bb = st_.params[lay_.idx_bridge_b(l)];
            for (std::size_t i = 0; i < h; ++i) h0[i] = bb.data[i];
            matvec_add(wb.data.data(), ec.bridge_u[l].data(), h0.data(), h, 2 * h);
            for (std::size_t i = 0; i < h; ++i) h0[i] = std::tanh(h0[i]);
        }

        // Attention keys are per-source-position, shared by all decoder steps.
        const Tensor<Scalar>& wa = st_.params[lay_.idx_wa()];
        ec.attn_q.assign(T, std::vector<Scalar>(h, 0));
        for (std::size_t t = 0; t < T; ++t)
            matvec_add(wa.data.data(), ec.layer_out[L - 1][t].data(), ec.attn_q[t].data(), h,
                       2 * h);
    }

    // One decoder step: consumes `input`, updates `hidden` (one [H] vector per
    // layer) in place, and fills `pc` including the output distribution.
    void decode_step(std::uint32_t input, const EncoderCaches<Scalar>& ec,
                     std::vector<std::vector<Scalar>>& hidden, DecPosCache<Scalar>& pc) const {
        const std::size_t h = lay_.hidden;
        const std::size_t e = lay_.embed;
        const std::size_t L = lay_.layers;
        const std::size_t T = ec.src.size();
        const std::size_t V = lay_.vocab;

        pc.input = input;
        const Scalar* emb = st_.params[lay_.idx_embed()].data.data();
        pc.x.assign(emb + input * e, emb + (input + 1) * e);

        pc.layer.resize(L);
        const Scalar* x = pc.x.data();
        std::size_t in_dim = e;
        for (std::size_t l = 0; l < L; ++l) {
            GruView<Scalar> gv(st_.params, lay_.idx_dec(l), in_dim, h);
            gru_forward(gv, x, hidden[l].data(), pc.layer[l]);
            hidden[l] = pc.layer[l].h;
            x = hidden[l].data();
            in_dim = h;
        }
        const std::vector<Scalar>& h_top = hidden[L - 1];

        // Luong-style attention over the top encoder layer.
        pc.alpha.assign(T, 0);
        for (std::size_t t = 0; t < T; ++t) {
            Scalar s = 0;
            for (std::size_t i = 0; i < h; ++i) s += h_top[i] * ec.attn_q[t][i];
            pc.alpha[t] = s;
        }
        softmax_inplace(pc.alpha);
        pc.ctx.assign(2 * h, 0);
        for (std::size_t t = 0; t < T; ++t) {
            const Scalar a = pc.alpha[t];
            const std::vector<Scalar>& enc = ec.layer_out[L - 1][t];
            for (std::size_t i = 0; i < 2 * h; ++i) pc.ctx[i] += a * enc[i];
        }

        std::vector<Scalar> cat(3 * h);
        std::copy(h_top.begin(), h_top.end(), cat.begin());
        std::copy(pc.ctx.begin(), pc.ctx.end(), cat.begin() + h);
        const Tensor<Scalar>& wc = st_.params[lay_.idx_wc()];
        const Tensor<Scalar>& bc = st_.params[lay_.idx_bc()];
        pc.comb.assign(h, 0);
        for (std::size_t i = 0; i < h; ++i) pc.comb[i] = bc.data[i];
        matvec_add(wc.data.data(), cat.data(), pc.comb.data(), h, 3 * h);
        for (std::size_t i = 0; i < h; ++i) pc.comb[i] = std::tanh(pc.comb[i]);

        const Tensor<Scalar>& wo = st_.params[lay_.idx_wo()];
        const Tensor<Scalar>& bo = st_.params[lay_.idx_bo()];
        pc.probs.assign(V, 0);
        for (std::size_t i = 0; i < V; ++i) pc.probs[i] = bo.data[i];
        matvec_add(wo.data.data(), pc.comb.data(), pc.probs.data(), V, h);
        softmax_inplace(pc.probs);
    }

    // Teacher-forced pass over one example. Returns summed (not averaged)
    // cross-entropy; the number of positions is target size + 1 (the end
    // marker is predicted too).
    double forward_example(const std::vector<std::uint32_t>& tgt_ids,
                           const EncoderCaches<Scalar>& ec,
                           std::vector<DecPosCache<Scalar>>& positions) const {
        std::vector<std::uint32_t> inputs = {Vocabulary::kBos};
        inputs.insert(inputs.end(), tgt_ids.begin(), tgt_ids.end());
        std::vector<std::uint32_t> golds = tgt_ids;
        golds.push_back(Vocabulary::kEos);

        std::vector<std::vector<Scalar>> hidden = ec.h0;
        positions.assign(inputs.size(), {});
        double loss = 0.0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            decode_step(inputs[i], ec, hidden, positions[i]);
            positions[i].gold = golds[i];
            const double p = static_cast<double>(positions[i].probs[golds[i]]);
            loss += -std::log(std::max(p, 1e-300));
        }
        return loss;
    }

    // Full backward for one example; `scale` is the weight applied to every
    // position's loss (1 / total positions in the batch). Gradients accumulate
    // into `grads`; layout matches the parameter registry.
    void backward_example(const EncoderCaches<Scalar>& ec,
                          const std::vector<DecPosCache<Scalar>>& positions, Scalar scale,
                          std::vector<Tensor<Scalar>>& grads) const {
        const std::size_t h = lay_.hidden;
        const std::size_t e = lay_.embed;
        const std::size_t L = lay_.layers;
        const std::size_t T = ec.src.size();
        const std::size_t V = lay_.vocab;
        const std::size_t P = positions.size();

        const Tensor<Scalar>& wo = st_.params[lay_.idx_wo()];
        const Tensor<Scalar>& wc = st_.params[lay_.idx_wc()];
        const Tensor<Scalar>& wa = st_.params[lay_.idx_wa()];
        Scalar* g_embed = grads[lay_.idx_embed()].data.data();

        // Gradient wrt the top encoder outputs (concat fw/bw), filled by the
        // attention path and consumed by the encoder backward below.
        std::vector<std::vector<Scalar>> denc(T, std::vector<Scalar>(2 * h, 0));
        std::vector<std::vector<Scalar>> dwa_q(T, std::vector<Scalar>(h, 0));  // grad wrt q_j

        // Decoder BPTT carries, one per layer.
        std::vector<std::vector<Scalar>> dh_carry(L, std::vector<Scalar>(h, 0));

        std::vector<Scalar> dlogits(V), dcomb(h), da_comb(h), dcat(3 * h), dctx(2 * h),
            dh_top(h), dalpha(T), ds(T), dx_layer(h), dx_embed(e);

        for (std::size_t pi = P; pi-- > 0;) {
            const DecPosCache<Scalar>& pc = positions[pi];

            // Softmax + cross-entropy.
            for (std::size_t i = 0; i < V; ++i) dlogits[i] = pc.probs[i] * scale;
            dlogits[pc.gold] -= scale;

            outer_add(grads[lay_.idx_wo()].data.data(), dlogits.data(), pc.comb.data(), V, h);
            for (std::size_t i = 0; i < V; ++i) grads[lay_.idx_bo()].data[i] += dlogits[i];
            std::fill(dcomb.begin(), dcomb.end(), Scalar{0});
            matvec_t_add(wo.data.data(), dlogits.data(), dcomb.data(), V, h);

            // comb = tanh(Wc [h_top; ctx] + bc)
            for (std::size_t i = 0; i < h; ++i)
                da_comb[i] = dcomb[i] * (Scalar{1} - pc.comb[i] * pc.comb[i]);
            const std::vector<Scalar>& h_top = pc.layer[L - 1].h;
            std::vector<Scalar> cat(3 * h);
            std::copy(h_top.begin(), h_top.end(), cat.begin());
            std::copy(pc.ctx.begin(), pc.ctx.end(), cat.begin() + h);
            outer_add(grads[lay_.idx_wc()].data.data(), da_comb.data(), cat.data(), h, 3 * h);
            for (std::size_t i = 0; i < h; ++i) grads[lay_.idx_bc()].data[i] += da_comb[i];
            std::fill(dcat.begin(), dcat.end(), Scalar{0});
            matvec_t_add(wc.data.data(), da_comb.data(), dcat.data(), h, 3 * h);
            std::copy(dcat.begin(), dcat.begin() + h, dh_top.begin());
            std::copy(dcat.begin() + h, dcat.end(), dctx.begin());

            // Attention: ctx = Σ α_j e_j, s_j = h_top · (Wa e_j).
            Scalar dot_sum = 0;
            for (std::size_t t = 0; t < T; ++t) {
                const std::vector<Scalar>& enc = ec.layer_out[L - 1][t];
                Scalar d = 0;
                for (std::size_t i = 0; i < 2 * h; ++i) {
                    denc[t][i] += pc.alpha[t] * dctx[i];
                    d += dctx[i] * enc[i];
                }
                dalpha[t] = d;
                dot_sum += pc.alpha[t] * d;
            }
            for (std::size_t t = 0; t < T; ++t) ds[t] = pc.alpha[t] * (dalpha[t] - dot_sum);

            // Score path: s_j = h_top · q_j with q_j = Wa e_j. Routing through
            // dq_j covers both dWa and the e_j contribution (applied once per
            // example after the position loop).
            for (std::size_t t = 0; t < T; ++t) {
                if (ds[t] == Scalar{0}) continue;
                for (std::size_t i = 0; i < h; ++i) dh_top[i] += ds[t] * ec.attn_q[t][i];
                for (std::size_t i = 0; i < h; ++i) dwa_q[t][i] += ds[t] * h_top[i];
            }

            // Through the decoder GRU stack (top layer first). Layer l's input
            // is layer l-1's fresh hidden at this position.
            for (std::size_t i = 0; i < h; ++i) dh_carry[L - 1][i] += dh_top[i];
            for (std::size_t l = L; l-- > 0;) {
                const std::size_t in_dim = lay_.dec_in_dim(l);
                GruView<Scalar> gv(st_.params, lay_.idx_dec(l), in_dim, h);
                GruGradView<Scalar> gg(grads, lay_.idx_dec(l), in_dim, h);
                const Scalar* x_in =
                    l == 0 ? pc.x.data() : pc.layer[l - 1].h.data();
                const Scalar* h_prev =
                    pi == 0 ? ec.h0[l].data() : positions[pi - 1].layer[l].h.data();

                std::vector<Scalar> dh = dh_carry[l];
                std::fill(dh_carry[l].begin(), dh_carry[l].end(), Scalar{0});
                if (l == 0) {
                    std::fill(dx_embed.begin(), dx_embed.end(), Scalar{0});
                    gru_backward(gv, gg, x_in, h_prev, pc.layer[l], dh.data(), dx_embed.data(),
                                 dh_carry[l].data());
                    Scalar* erow = g_embed + pc.input * e;
                    for (std::size_t i = 0; i < e; ++i) erow[i] += dx_embed[i];
                } else {
                    std::fill(dx_layer.begin(), dx_layer.end(), Scalar{0});
                    gru_backward(gv, gg, x_in, h_prev, pc.layer[l], dh.data(), dx_layer.data(),
                                 dh_carry[l].data());
                    for (std::size_t i = 0; i < h; ++i) dh_carry[l - 1][i] += dx_layer[i];
                }
            }
        }

        // dh_carry now holds gradients wrt each layer's initial state h0.
        // Bridge: h0 = tanh(Wb u + bb), u = [fw_last; bw_first].
        std::vector<std::vector<Scalar>> dfw_last(L, std::vector<Scalar>(h, 0));
        std::vector<std::vector<Scalar>> dbw_first(L, std::vector<Scalar>(h, 0));
        for (std::size_t l = 0; l < L; ++l) {
            std::vector<Scalar> da(h);
            for (std::size_t i = 0; i < h; ++i)
                da[i] = dh_carry[l][i] * (Scalar{1} - ec.h0[l][i] * ec.h0[l][i]);
            outer_add(grads[lay_.idx_bridge_w(l)].data.data(), da.data(), ec.bridge_u[l].data(),
                      h, 2 * h);
            for (std::size_t i = 0; i < h; ++i) grads[lay_.idx_bridge_b(l)].data[i] += da[i];
            std::vector<Scalar> du(2 * h, 0);
            matvec_t_add(st_.params[lay_.idx_bridge_w(l)].data.data(), da.data(), du.data(), h,
                         2 * h);
            for (std::size_t i = 0; i < h; ++i) dfw_last[l][i] += du[i];
            for (std::size_t i = 0; i < h; ++i) dbw_first[l][i] += du[h + i];
        }

        // Attention key projection: q_j = Wa e_j.
        for (std::size_t t = 0; t < T; ++t) {
            outer_add(grads[lay_.idx_wa()].data.data(), dwa_q[t].data(),
                      ec.layer_out[L - 1][t].data(), h, 2 * h);
            matvec_t_add(wa.data.data(), dwa_q[t].data(), denc[t].data(), h, 2 * h);
        }

        // Encoder stack, top layer down. `dout` holds gradients wrt the
        // layer's concat outputs; lower layers receive dx contributions.
        std::vector<std::vector<Scalar>> dout = std::move(denc);
        const std::vector<Scalar> zero(h, 0);
        for (std::size_t l = L; l-- > 0;) {
            const std::size_t in_dim = lay_.enc_in_dim(l);
            GruView<Scalar> fw(st_.params, lay_.idx_enc(l, 0), in_dim, h);
            GruView<Scalar> bw(st_.params, lay_.idx_enc(l, 1), in_dim, h);
            GruGradView<Scalar> gfw(grads, lay_.idx_enc(l, 0), in_dim, h);
            GruGradView<Scalar> gbw(grads, lay_.idx_enc(l, 1), in_dim, h);

            std::vector<std::vector<Scalar>> dnext(
                T, std::vector<Scalar>(l == 0 ? e : 2 * h, 0));
            auto input_at = [&](std::size_t t) -> const Scalar* {
                return l == 0 ? ec.embed[t].data() : ec.layer_out[l - 1][t].data();
            };

            // Forward direction, t = T-1 .. 0.
            std::vector<Scalar> carry(h, 0);
            for (std::size_t t = T; t-- > 0;) {
                std::vector<Scalar> dh(h);
                for (std::size_t i = 0; i < h; ++i) dh[i] = carry[i] + dout[t][i];
                if (t == T - 1)
                    for (std::size_t i = 0; i < h; ++i) dh[i] += dfw_last[l][i];
                std::fill(carry.begin(), carry.end(), Scalar{0});
                const Scalar* h_prev = t == 0 ? zero.data() : ec.fw[l][t - 1].h.data();
                gru_backward(fw, gfw, input_at(t), h_prev, ec.fw[l][t], dh.data(),
                             dnext[t].data(), carry.data());
            }

            // Backward direction, recurrence runs T-1 -> 0, so BPTT runs 0 -> T-1.
            std::fill(carry.begin(), carry.end(), Scalar{0});
            for (std::size_t t = 0; t < T; ++t) {
                std::vector<Scalar> dh(h);
                for (std::size_t i = 0; i < h; ++i) dh[i] = carry[i] + dout[t][h + i];
                if (t == 0)
                    for (std::size_t i = 0; i < h; ++i) dh[i] += dbw_first[l][i];
                std::fill(carry.begin(), carry.end(), Scalar{0});
                const Scalar* h_prev = t + 1 == T ? zero.data() : ec.bw[l][t + 1].h.data();
                gru_backward(bw, gbw, input_at(t), h_prev, ec.bw[l][t], dh.data(),
                             dnext[t].data(), carry.data());
            }

            if (l == 0) {
                for (std::size_t t = 0; t < T; ++t) {
                    Scalar* erow = g_embed + ec.src[t] * e;
                    for (std::size_t i = 0; i < e; ++i) erow[i] += dnext[t][i];
                }
            } else {
                dout = std::move(dnext);
            }
        }
    }

  private:
    const State<Scalar>& st_;
    Layout lay_;
};

template <typename Scalar>
inline std::vector<Tensor<Scalar>> zero_like_params(const Layout& lay) {
    std::vector<Tensor<Scalar>> out;
    for (const auto& spec : lay.specs()) out.push_back(Tensor<Scalar>::zeros(spec.shape));
    return out;
}

}  // namespace detail

using IdBatch = std::vector<std::pair<std::vector<std::uint32_t>, std::vector<std::uint32_t>>>;

namespace detail {

template <typename Scalar>
inline State<Scalar> init_state(const ModelConfig& cfg, const Vocabulary& vocab) {
    State<Scalar> st;
    st.config = cfg;
    st.vocab = vocab;
    const Layout lay(cfg);

    std::size_t total_elems = 0;
    for (const auto& spec : lay.specs()) {
        std::size_t n = 1;
        for (std::size_t d : spec.shape) n *= d;
        total_elems += n;
    }
    // params + grads + Adam m/v all live at once during training.
    if (total_elems * sizeof(Scalar) * 4 > cfg.memory_budget_bytes)
        throw ValidationError("model of " + std::to_string(total_elems) +
                              " parameters exceeds the memory budget of " +
                              std::to_string(cfg.memory_budget_bytes) + " bytes");

    Rng rng(mix_seed(cfg.seed, kInitSalt));
    st.params.reserve(lay.total());
    for (const auto& spec : lay.specs()) {
        Tensor<Scalar> t = Tensor<Scalar>::zeros(spec.shape);
        if (spec.shape.size() == 2) {
            double limit;
            if (spec.name == "embedding")
                limit = std::sqrt(3.0 / static_cast<double>(spec.shape[1]));
            else
                limit = std::sqrt(6.0 / static_cast<double>(spec.shape[0] + spec.shape[1]));
            for (auto& x : t.data) x = static_cast<Scalar>(rng.real(-limit, limit));
        }
        st.params.push_back(std::move(t));
    }
    st.adam_m = zero_like_params<Scalar>(lay);
    st.adam_v = zero_like_params<Scalar>(lay);
    return st;
}

}  // namespace detail

inline Checkpoint init(const ModelConfig& cfg, const Vocabulary& vocab) {
    cfg.validate();
    if (cfg.vocab_size != vocab.size())
        throw ValidationError("config vocab_size " + std::to_string(cfg.vocab_size) +
                              " does not match vocabulary size " + std::to_string(vocab.size()));
    Checkpoint ckpt;
    if (cfg.precision == Precision::f32)
        ckpt.state = detail::init_state<float>(cfg, vocab);
    else
        ckpt.state = detail::init_state<double>(cfg, vocab);
    return ckpt;
}

struct ForwardResult {
    double loss = 0.0;
    // distributions[example][position][vocab id]
    std::vector<std::vector<std::vector<double>>> distributions;
};

namespace detail {

template <typename Scalar>
inline ForwardResult forward_loss_impl(const State<Scalar>& st, const IdBatch& batch,
                                       bool keep_distributions) {
    if (batch.empty()) throw ValidationError("forward_loss requires a non-empty batch");
    Exec<Scalar> exec(st);
    std::size_t total_positions = 0;
    for (const auto& [src, tgt] : batch) {
        exec.check_ids(src);
        exec.check_ids(tgt);
        if (src.size() > st.config.max_source_len)
            throw ValidationError("source length " + std::to_string(src.size()) +
                                  " exceeds max_source_len " +
                                  std::to_string(st.config.max_source_len));
        if (tgt.size() + 1 > st.config.max_target_len)
            throw ValidationError("target length " + std::to_string(tgt.size()) +
                                  " exceeds max_target_len " +
                                  std::to_string(st.config.max_target_len));
        total_positions += tgt.size() + 1;
    }

    ForwardResult result;
    double loss_sum = 0.0;
    for (const auto& [src, tgt] : batch) {
        EncoderCaches<Scalar> ec;
        exec.encode(src, ec);
        std::vector<DecPosCache<Scalar>> positions;
        loss_sum += exec.forward_example(tgt, ec, positions);
        if (keep_distributions) {
            std::vector<std::vector<double>> dists;
            for (const auto& pc : positions)
                dists.emplace_back(pc.probs.begin(), pc.probs.end());
            result.distributions.push_back(std::move(dists));
        }
    }
    result.loss = loss_sum / static_cast<double>(total_positions);
    if (!std::isfinite(result.loss)) throw ValidationError("non-finite loss");
    return result;
}

// One optimizer update from an already-accumulated gradient. Clip by global
// L2 norm, then Adam with bias correction and decoupled weight decay on the
// non-embedding matrices. All reductions run in registry order for
// determinism.
template <typename Scalar>
inline void apply_update(State<Scalar>& st, const Layout& lay, std::vector<Tensor<Scalar>>& grads,
                         const TrainConfig& tc) {
    double norm_sq = 0.0;
    for (const auto& g : grads)
        for (Scalar x : g.data) norm_sq += static_cast<double>(x) * static_cast<double>(x);
    const double norm = std::sqrt(norm_sq);
    const double gscale = norm > tc.clip_norm ? tc.clip_norm / norm : 1.0;

    st.step += 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(st.step));
    for (std::size_t ti = 0; ti < grads.size(); ++ti) {
        Scalar* p = st.params[ti].data.data();
        Scalar* m = st.adam_m[ti].data.data();
        Scalar* v = st.adam_v[ti].data.data();
        const Scalar* g = grads[ti].data.data();
        const std::size_t n = grads[ti].data.size();
        const bool matrix = st.params[ti].shape.size() == 2 && ti != lay.idx_embed();
        const double decay = matrix ? tc.learning_rate * tc.weight_decay : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = static_cast<double>(g[i]) * gscale;
            const double mi = tc.beta1 * static_cast<double>(m[i]) + (1.0 - tc.beta1) * gi;
            const double vi = tc.beta2 * static_cast<double>(v[i]) + (1.0 - tc.beta2) * gi * gi;
            m[i] = static_cast<Scalar>(mi);
            v[i] = static_cast<Scalar>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<Scalar>(static_cast<double>(p[i]) -
                                       tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps) -
                                       decay * static_cast<double>(p[i]));
        }
    }
}

template <typename Scalar>
inline void train_impl(State<Scalar>& st, const IdBatch& data, const TrainConfig& tc) {
    Exec<Scalar> exec(st);
    const Layout lay(st.config);
    std::vector<Tensor<Scalar>> grads = zero_like_params<Scalar>(lay);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
        Rng shuffler(mix_seed(tc.shuffle_seed, kShuffleSalt, epoch));
        shuffler.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
            const std::size_t end = std::min(order.size(), start + tc.batch_size);
            std::size_t total_positions = 0;
            for (std::size_t k = start; k < end; ++k)
                total_positions += data[order[k]].second.size() + 1;
            const Scalar scale = static_cast<Scalar>(1.0 / static_cast<double>(total_positions));

            for (auto& g : grads) std::fill(g.data.begin(), g.data.end(), Scalar{0});
            for (std::size_t k = start; k < end; ++k) {
                const auto& [src, tgt] = data[order[k]];
                EncoderCaches<Scalar> ec;
                exec.encode(src, ec);
                std::vector<DecPosCache<Scalar>> positions;
                exec.forward_example(tgt, ec, positions);
                exec.backward_example(ec, positions, scale, grads);
            }
            apply_update(st, lay, grads, tc);
        }
    }
}

}  // namespace detail

// Encodes prompted pairs with the checkpoint's vocabulary, truncating to the
// configured maxima (the end marker always fits).
inline IdBatch encode_pairs(const Checkpoint& ckpt, const std::vector<prompts::PromptedPair>& pairs) {
    const auto& vocab = ckpt.vocab();
    const auto& cfg = ckpt.config();
    IdBatch out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        auto src = vocab.encode(p.source);
        auto tgt = vocab.encode(p.target);
        if (src.size() > cfg.max_source_len) src.resize(cfg.max_source_len);
        if (tgt.size() + 1 > cfg.max_target_len) tgt.resize(cfg.max_target_len - 1);
        out.emplace_back(std::move(src), std::move(tgt));
    }
    return out;
}

inline ForwardResult forward_loss(const Checkpoint& ckpt, const IdBatch& batch) {
    return std::visit(
        [&](const auto& st) { return detail::forward_loss_impl(st, batch, true); }, ckpt.state);
}

// Mean cross-entropy per target position, without materializing distributions.
inline double eval_loss(const Checkpoint& ckpt, const IdBatch& batch) {
    return std::visit(
        [&](const auto& st) { return detail::forward_loss_impl(st, batch, false).loss; },
        ckpt.state);
}

inline Checkpoint train(const Checkpoint& ckpt, const std::vector<prompts::PromptedPair>& pairs,
                        const TrainConfig& tc) {
    tc.validate();
    if (pairs.empty()) throw ValidationError("train requires a non-empty pair list");
    Checkpoint next = ckpt;
    const IdBatch data = encode_pairs(next, pairs);
    std::visit([&](auto& st) { detail::train_impl(st, data, tc); }, next.state);
    return next;
}

struct DecodeConfig {
    enum class Mode { greedy, beam };
    Mode mode = Mode::greedy;
    std::size_t beam_width = 4;
    std::size_t max_len = 0;  // 0: use the model's max_target_len

    static DecodeConfig greedy_mode() { return {}; }
    static DecodeConfig beam_mode(std::size_t width) {
        DecodeConfig d;
        d.mode = Mode::beam;
        d.beam_width = width;
        return d;
    }
};

namespace detail {

template <typename Scalar>
inline std::vector<std::uint32_t> greedy_decode(const State<Scalar>& st,
                                                const EncoderCaches<Scalar>& ec,
                                                std::size_t max_len) {
    Exec<Scalar> exec(st);
    std::vector<std::vector<Scalar>> hidden = ec.h0;
    std::vector<std::uint32_t> out;
    std::uint32_t prev = Vocabulary::kBos;
    for (std::size_t step = 0; step < max_len; ++step) {
        DecPosCache<Scalar> pc;
        exec.decode_step(prev, ec, hidden, pc);
        std::uint32_t best = 0;
        for (std::uint32_t i = 1; i < pc.probs.size(); ++i)
            if (pc.probs[i] > pc.probs[best]) best = i;  // ties keep the lowest id
        if (best == Vocabulary::kEos) break;
        out.push_back(best);
        prev = best;
    }
    return out;
}

template <typename Scalar>
inline std::vector<std::uint32_t> beam_decode(const State<Scalar>& st,
                                              const EncoderCaches<Scalar>& ec, std::size_t width,
                                              std::size_t max_len) {
    Exec<Scalar> exec(st);
    struct Hyp {
        std::vector<std::uint32_t> ids;
        double logp = 0.0;
        std::vector<std::vector<Scalar>> hidden;
    };
    struct Done {
        std::vector<std::uint32_t> ids;
        double score;  // length-normalized log-probability
    };

    std::vector<Hyp> live(1);
    live[0].hidden = ec.h0;
    std::vector<Done> done;

    for (std::size_t step = 0; step < max_len && !live.empty(); ++step) {
        struct Cand {
            std::size_t hyp;
            std::uint32_t id;
            double logp;
        };
        std::vector<Cand> cands;
        std::vector<std::vector<std::vector<Scalar>>> next_hidden(live.size());
        for (std::size_t hi = 0; hi < live.size(); ++hi) {
            const std::uint32_t prev = live[hi].ids.empty() ? Vocabulary::kBos : live[hi].ids.back();
            DecPosCache<Scalar> pc;
            next_hidden[hi] = live[hi].hidden;
            exec.decode_step(prev, ec, next_hidden[hi], pc);

            // Keep each hypothesis's top `width` continuations.
            std::vector<std::uint32_t> ids(pc.probs.size());
            std::iota(ids.begin(), ids.end(), 0u);
            const std::size_t keep = std::min<std::size_t>(width, ids.size());
            std::partial_sort(ids.begin(), ids.begin() + keep, ids.end(),
                              [&](std::uint32_t a, std::uint32_t b) {
                                  if (pc.probs[a] != pc.probs[b]) return pc.probs[a] > pc.probs[b];
                                  return a < b;
                              });
            for (std::size_t k = 0; k < keep; ++k)
                cands.push_back(
                    {hi, ids[k],
                     live[hi].logp +
                         std::log(std::max(static_cast<double>(pc.probs[ids[k]]), 1e-300))});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.logp != b.logp) return a.logp > b.logp;
            return a.id < b.id;
        });

        std::vector<Hyp> next;
        for (const Cand& c : cands) {
            if (next.size() >= width && done.size() >= width) break;
            if (c.id == Vocabulary::kEos) {
                const double len = static_cast<double>(live[c.hyp].ids.size() + 1);
                done.push_back({live[c.hyp].ids, c.logp / len});
                continue;
            }
            if (next.size() >= width) continue;
            Hyp h;
            h.ids = live[c.hyp].ids;
            h.ids.push_back(c.id);
            h.logp = c.logp;
            h.hidden = next_hidden[c.hyp];
            next.push_back(std::move(h));
        }
        live = std::move(next);
    }

    for (const Hyp& h : live) {
        const double len = static_cast<double>(std::max<std::size_t>(h.ids.size(), 1));
        done.push_back({h.ids, h.logp / len});
    }
    if (done.empty()) return {};
    std::size_t best = 0;
    for (std::size_t i = 1; i < done.size(); ++i)
        if (done[i].score > done[best].score) best = i;
    return done[best].ids;
}

}  // namespace detail

inline std::string generate(const Checkpoint& ckpt, const std::string& source,
                            const DecodeConfig& decode = {}) {
    const auto& cfg = ckpt.config();
    const std::size_t max_len = decode.max_len == 0 ? cfg.max_target_len : decode.max_len;
    return std::visit(
        [&](const auto& st) {
            using Scalar = typename std::decay_t<decltype(st)>::ScalarType;
            detail::Exec<Scalar> exec(st);
            auto src = st.vocab.encode(source);
            if (src.size() > cfg.max_source_len) src.resize(cfg.max_source_len);
            detail::EncoderCaches<Scalar> ec;
            exec.encode(src, ec);
            std::vector<std::uint32_t> ids;
            if (decode.mode == DecodeConfig::Mode::greedy)
                ids = detail::greedy_decode(st, ec, max_len);
            else
                ids = detail::beam_decode(st, ec, decode.beam_width, max_len);
            return st.vocab.decode(ids);
        },
        ckpt.state);
}

// ---- checkpoint serialization ----
//
// One JSON header line, then the raw little-endian tensor payload: all
// parameters in registry order, then all Adam first moments, then all second
// moments.

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <typename Scalar>
inline void serialize_state(const State<Scalar>& st, std::ostream& out) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer assumes a little-endian host");
    const Layout lay(st.config);
    nlohmann::json header;
    header["format"] = "xlaug-seq2seq";
    header["version"] = kCheckpointVersion;
    header["endianness"] = "little";
    header["precision"] = to_string(st.config.precision);
    header["step"] = st.step;
    header["config"] = config_to_json(st.config);
    header["vocab"] = st.vocab.to_json();
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& spec : lay.specs())
        tensors.push_back({{"name", spec.name}, {"shape", spec.shape}});
    header["tensors"] = std::move(tensors);
    out << header.dump() << "\n";

    auto write_all = [&](const std::vector<Tensor<Scalar>>& ts) {
        for (const auto& t : ts)
            out.write(reinterpret_cast<const char*>(t.data.data()),
                      static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
    };
    write_all(st.params);
    write_all(st.adam_m);
    write_all(st.adam_v);
}

template <typename Scalar>
inline State<Scalar> deserialize_state(const nlohmann::json& header, std::istream& in,
                                       const std::string& what) {
    State<Scalar> st;
    st.config = config_from_json(header.at("config"));
    st.vocab = Vocabulary::from_json(header.at("vocab"));
    st.step = header.at("step").get<std::uint64_t>();
    if (st.config.vocab_size != st.vocab.size())
        throw ValidationError(what + ": config/vocabulary size mismatch");

    const Layout lay(st.config);
    const auto specs = lay.specs();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != specs.size())
        throw ValidationError(what + ": tensor table size mismatch");
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != specs[i].name ||
            tensors[i].at("shape").get<std::vector<std::size_t>>() != specs[i].shape)
            throw ValidationError(what + ": tensor table entry \"" + specs[i].name +
                                  "\" does not match the configured shapes");
    }

    auto read_all = [&](std::vector<Tensor<Scalar>>& ts) {
        ts.clear();
        for (const auto& spec : specs) {
            Tensor<Scalar> t = Tensor<Scalar>::zeros(spec.shape);
            in.read(reinterpret_cast<char*>(t.data.data()),
                    static_cast<std::streamsize>(t.data.size() * sizeof(Scalar)));
            if (!in) throw ParseError(what + ": truncated tensor payload");
            ts.push_back(std::move(t));
        }
    };
    read_all(st.params);
    read_all(st.adam_m);
    read_all(st.adam_v);
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError(what + ": trailing bytes after tensor payload");
    return st;
}

}  // namespace detail

inline void serialize_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    std::visit([&](const auto& st) { detail::serialize_state(st, out); }, ckpt.state);
}

inline Checkpoint deserialize_checkpoint(std::istream& in, const std::string& what) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(what + ": missing checkpoint header");
    const nlohmann::json header = corpus::detail::parse_json_text(line, what + " header");
    if (header.value("format", std::string{}) != "xlaug-seq2seq")
        throw ParseError(what + ": not an xlaug-seq2seq checkpoint");
    if (header.value("version", -1) != kCheckpointVersion)
        throw ValidationError(what + ": checkpoint version mismatch");
    if (header.value("endianness", std::string{}) != "little")
        throw ValidationError(what + ": unsupported endianness");
    Checkpoint ckpt;
    const Precision prec = precision_from_string(header.at("precision").get<std::string>());
    if (prec == Precision::f32)
        ckpt.state = detail::deserialize_state<float>(header, in, what);
    else
        ckpt.state = detail::deserialize_state<double>(header, in, what);
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open \"" + path + "\" for writing");
    serialize_checkpoint(ckpt, out);
    if (!out) throw IoError("write failure on \"" + path + "\"");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open \"" + path + "\" for reading");
    return deserialize_checkpoint(in, path);
}

inline std::string checkpoint_bytes(const Checkpoint& ckpt) {
    std::ostringstream ss(std::ios::binary);
    serialize_checkpoint(ckpt, ss);
    return ss.str();
}

// FNV-1a over the serialized bytes; stable content fingerprint.
inline std::string checkpoint_id(const Checkpoint& ckpt) {
    const std::string bytes = checkpoint_bytes(ckpt);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Central-difference gradient verification on randomly sampled coordinates.
// f64 only: f32 rounding drowns the comparison.
inline double grad_check(const Checkpoint& ckpt, const IdBatch& batch, double epsilon,
                         std::size_t coords = 200, std::uint64_t seed = 0) {
    if (ckpt.precision() != Precision::f64)
        throw ValidationError("grad_check requires an f64 checkpoint");
    if (batch.empty()) throw ValidationError("grad_check requires a non-empty batch");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be > 0");

    State<double> st = std::get<State<double>>(ckpt.state);  // mutable copy
    const Layout lay(st.config);

    std::size_t total_positions = 0;
    for (const auto& [src, tgt] : batch) total_positions += tgt.size() + 1;

    // Analytic gradients of the mean-position loss.
    std::vector<Tensor<double>> grads = detail::zero_like_params<double>(lay);
    {
        detail::Exec<double> exec(st);
        const double scale = 1.0 / static_cast<double>(total_positions);
        for (const auto& [src, tgt] : batch) {
            detail::EncoderCaches<double> ec;
            exec.encode(src, ec);
            std::vector<detail::DecPosCache<double>> positions;
            exec.forward_example(tgt, ec, positions);
            exec.backward_example(ec, positions, scale, grads);
        }
    }

    auto loss_now = [&]() {
        return detail::forward_loss_impl(st, batch, false).loss;
    };

    std::size_t total_elems = 0;
    for (const auto& t : st.params) total_elems += t.data.size();

    Rng rng(mix_seed(seed, detail::kGradCheckSalt));
    double max_rel = 0.0;
    for (std::size_t k = 0; k < coords; ++k) {
        std::size_t flat = rng.below(total_elems);
        std::size_t ti = 0;
        while (flat >= st.params[ti].data.size()) {
            flat -= st.params[ti].data.size();
            ++ti;
        }
        double& p = st.params[ti].data[flat];
        const double keep = p;
        p = keep + epsilon;
        const double up = loss_now();
        p = keep - epsilon;
        const double down = loss_now();
        p = keep;
        const double numeric = (up - down) / (2.0 * epsilon);
        const double analytic = grads[ti].data[flat];
        // The denominator floor sits at the certification limit of the
        // finite-difference estimate itself (cancellation noise is about
        // eps_machine * |loss| / epsilon); below it the comparison is
        // effectively absolute at the noise scale.
        const double rel = std::abs(analytic - numeric) /
                           std::max(1e-6, std::abs(analytic) + std::abs(numeric));
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace xlaug::seq2seq
