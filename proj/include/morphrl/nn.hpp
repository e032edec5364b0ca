#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "morphrl/rng.hpp"
#include "morphrl/tensor.hpp"

namespace morphrl {

// Named collection of differentiable parameter tensors. std::map keeps the
// iteration order deterministic for hashing, checkpoints and optimizers.
template <class Real>
struct ParamStoreT {
    std::map<std::string, TensorT<Real>> params;

    TensorT<Real>& at(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("param store: no parameter named " + name);
        return it->second;
    }
    const TensorT<Real>& at(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) throw ContractError("param store: no parameter named " + name);
        return it->second;
    }

    TensorT<Real>& add(const std::string& name, TensorT<Real> t) {
        auto [it, inserted] = params.emplace(name, std::move(t));
        if (!inserted) throw ContractError("param store: duplicate parameter " + name);
        return it->second;
    }

    void zero_grads() {
        for (auto& [name, p] : params) p.zero_grad();
    }

    ParamStoreT clone() const {
        ParamStoreT out;
        for (const auto& [name, p] : params)
            out.params.emplace(name, TensorT<Real>::from(p.shape(), p.data(), p.requires_grad()));
        return out;
    }

    void copy_values_from(const ParamStoreT& other) {
        for (auto& [name, p] : params) p.data() = other.at(name).data();
    }

    std::uint64_t value_hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& [name, p] : params) {
            h = fnv1a(name, h);
            h = fnv1a_bytes(p.data().data(), p.data().size() * sizeof(Real), h);
        }
        return h;
    }
};

using ParamStore = ParamStoreT<float>;

template <class Real>
TensorT<Real> init_projection(SplitRng& rng, std::int64_t fan_in, std::int64_t fan_out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<Real> v(static_cast<std::size_t>(fan_in * fan_out));
    for (auto& x : v) x = static_cast<Real>(rng.uniform(-bound, bound));
    return TensorT<Real>::from({fan_in, fan_out}, std::move(v), true);
}

template <class Real>
TensorT<Real> init_embedding(SplitRng& rng, std::int64_t vocab, std::int64_t width) {
    std::vector<Real> v(static_cast<std::size_t>(vocab * width));
    for (auto& x : v) x = static_cast<Real>(rng.normal(0.0, 0.02));
    return TensorT<Real>::from({vocab, width}, std::move(v), true);
}

// Geometric frequency ladder, endpoint-inclusive from 0.1 to 1000.
template <class Real>
std::vector<Real> sinusoid_frequencies(int sinusoid_dim) {
    if (sinusoid_dim <= 0 || sinusoid_dim % 2 != 0)
        throw ConfigError("sinusoid embedding size must be positive and even, got " +
                          std::to_string(sinusoid_dim));
    const int count = sinusoid_dim / 2;
    std::vector<Real> freqs(static_cast<std::size_t>(count));
    if (count == 1) {
        freqs[0] = static_cast<Real>(0.1);
        return freqs;
    }
    for (int j = 0; j < count; ++j)
        freqs[static_cast<std::size_t>(j)] =
            static_cast<Real>(0.1 * std::pow(10.0, 4.0 * j / (count - 1)));
    return freqs;
}

struct ModelDims {
    int token_dim = 32;     // embedding width D
    int sinusoid_dim = 96;  // state embedding width M
    int model_dim = 128;
    int heads = 2;
    int enc_layers = 3;
    int dec_layers = 3;
    int ff_dim = 256;

    void validate() const {
        if (model_dim <= 0 || heads <= 0 || model_dim % heads != 0)
            throw ConfigError("model dim " + std::to_string(model_dim) + " not divisible by " +
                              std::to_string(heads) + " heads");
        if (sinusoid_dim % 2 != 0) throw ConfigError("sinusoid dim must be even");
        if (token_dim <= 0 || enc_layers <= 0 || dec_layers <= 0 || ff_dim <= 0)
            throw ConfigError("model dims must be positive");
    }
};

constexpr float kLayerNormEps = 1e-5f;

template <class Real>
TensorT<Real> linear(TapeT<Real>* tape, const TensorT<Real>& x, const TensorT<Real>& w,
                     const TensorT<Real>& b) {
    return add_bias(tape, matmul(tape, x, w), b);
}

template <class Real>
struct AttentionOut {
    TensorT<Real> out;
    TensorT<Real> weights;  // detached [heads, ..., L_q, L_k]; defined iff requested
};

// Scaled dot-product attention over `heads` column groups. No mask is ever
// applied. `weights`, when requested, is a detached copy of the per-head
// softmax output.
template <class Real>
AttentionOut<Real> multi_head_attention(TapeT<Real>* tape, const TensorT<Real>& q,
                                        const TensorT<Real>& k, const TensorT<Real>& v,
                                        int heads, const TensorT<Real>& wq, const TensorT<Real>& bq,
                                        const TensorT<Real>& wk, const TensorT<Real>& bk,
                                        const TensorT<Real>& wv, const TensorT<Real>& bv,
                                        const TensorT<Real>& wo, const TensorT<Real>& bo,
                                        bool want_weights = false) {
    const auto d = q.extent(-1);
    if (heads <= 0 || d % heads != 0)
        throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    const auto dh = d / heads;
    TensorT<Real> qp = linear(tape, q, wq, bq);
    TensorT<Real> kp = linear(tape, k, wk, bk);
    TensorT<Real> vp = linear(tape, v, wv, bv);
    const Real inv_sqrt = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));

    std::vector<TensorT<Real>> head_outs;
    std::vector<TensorT<Real>> head_weights;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        TensorT<Real> qh = slice_last(tape, qp, h * dh, dh);
        TensorT<Real> kh = slice_last(tape, kp, h * dh, dh);
        TensorT<Real> vh = slice_last(tape, vp, h * dh, dh);
        TensorT<Real> scores = scale(tape, bmm(tape, qh, transpose_last2(tape, kh)), inv_sqrt);
        TensorT<Real> attn = softmax_last(tape, scores);
        if (want_weights) head_weights.push_back(attn);
        head_outs.push_back(bmm(tape, attn, vh));
    }
    TensorT<Real> merged = concat_last(tape, std::span<const TensorT<Real>>(head_outs));
    AttentionOut<Real> result;
    result.out = linear(tape, merged, wo, bo);
    if (want_weights) {
        Shape wshape{heads};
        wshape.insert(wshape.end(), head_weights[0].shape().begin(), head_weights[0].shape().end());
        std::vector<Real> data;
        data.reserve(static_cast<std::size_t>(heads) * head_weights[0].data().size());
        for (const auto& hw : head_weights) data.insert(data.end(), hw.data().begin(), hw.data().end());
        result.weights = TensorT<Real>::from(std::move(wshape), std::move(data));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Encoder-decoder stack (post-norm sublayers, relu feedforward, no masking)
// ---------------------------------------------------------------------------

template <class Real>
void add_attention_params(ParamStoreT<Real>& store, const std::string& prefix, const ModelDims& dims,
                          SplitRng& rng) {
    const auto dm = static_cast<std::int64_t>(dims.model_dim);
    for (const char* name : {"wq", "wk", "wv", "wo"})
        store.add(prefix + "." + name, init_projection<Real>(rng, dm, dm));
    for (const char* name : {"bq", "bk", "bv", "bo"})
        store.add(prefix + "." + name, TensorT<Real>::zeros({dm}, true));
}

template <class Real>
void add_norm_params(ParamStoreT<Real>& store, const std::string& prefix, const ModelDims& dims) {
    const auto dm = static_cast<std::int64_t>(dims.model_dim);
    store.add(prefix + ".g", TensorT<Real>::full({dm}, Real(1), true));
    store.add(prefix + ".b", TensorT<Real>::zeros({dm}, true));
}

template <class Real>
void add_ffn_params(ParamStoreT<Real>& store, const std::string& prefix, const ModelDims& dims,
                    SplitRng& rng) {
    const auto dm = static_cast<std::int64_t>(dims.model_dim);
    const auto ff = static_cast<std::int64_t>(dims.ff_dim);
    store.add(prefix + ".w1", init_projection<Real>(rng, dm, ff));
    store.add(prefix + ".b1", TensorT<Real>::zeros({ff}, true));
    store.add(prefix + ".w2", init_projection<Real>(rng, ff, dm));
    store.add(prefix + ".b2", TensorT<Real>::zeros({dm}, true));
}

template <class Real>
void add_transformer_params(ParamStoreT<Real>& store, const std::string& prefix, const ModelDims& dims,
                            SplitRng& rng) {
    for (int l = 0; l < dims.enc_layers; ++l) {
        const std::string lp = prefix + "enc" + std::to_string(l);
        add_attention_params(store, lp + ".self", dims, rng);
        add_norm_params(store, lp + ".ln1", dims);
        add_ffn_params(store, lp + ".ffn", dims, rng);
        add_norm_params(store, lp + ".ln2", dims);
    }
    for (int l = 0; l < dims.dec_layers; ++l) {
        const std::string lp = prefix + "dec" + std::to_string(l);
        add_attention_params(store, lp + ".self", dims, rng);
        add_norm_params(store, lp + ".ln1", dims);
        add_attention_params(store, lp + ".cross", dims, rng);
        add_norm_params(store, lp + ".ln2", dims);
        add_ffn_params(store, lp + ".ffn", dims, rng);
        add_norm_params(store, lp + ".ln3", dims);
    }
}

template <class Real>
AttentionOut<Real> attention_sublayer(TapeT<Real>* tape, ParamStoreT<Real>& store,
                                      const std::string& prefix, int heads, const TensorT<Real>& q,
                                      const TensorT<Real>& kv, bool want_weights = false) {
    return multi_head_attention(tape, q, kv, kv, heads, store.at(prefix + ".wq"), store.at(prefix + ".bq"),
                                store.at(prefix + ".wk"), store.at(prefix + ".bk"),
                                store.at(prefix + ".wv"), store.at(prefix + ".bv"),
                                store.at(prefix + ".wo"), store.at(prefix + ".bo"), want_weights);
}

template <class Real>
TensorT<Real> norm_sublayer(TapeT<Real>* tape, ParamStoreT<Real>& store, const std::string& prefix,
                            const TensorT<Real>& x) {
    return layer_norm_last(tape, x, store.at(prefix + ".g"), store.at(prefix + ".b"),
                           static_cast<Real>(kLayerNormEps));
}

template <class Real>
TensorT<Real> ffn_sublayer(TapeT<Real>* tape, ParamStoreT<Real>& store, const std::string& prefix,
                           const TensorT<Real>& x) {
    TensorT<Real> h = relu(tape, linear(tape, x, store.at(prefix + ".w1"), store.at(prefix + ".b1")));
    return linear(tape, h, store.at(prefix + ".w2"), store.at(prefix + ".b2"));
}

template <class Real>
TensorT<Real> encoder_forward(TapeT<Real>* tape, ParamStoreT<Real>& store, const std::string& prefix,
                              const ModelDims& dims, TensorT<Real> x) {
    for (int l = 0; l < dims.enc_layers; ++l) {
        const std::string lp = prefix + "enc" + std::to_string(l);
        auto attn = attention_sublayer(tape, store, lp + ".self", dims.heads, x, x);
        x = norm_sublayer(tape, store, lp + ".ln1", add(tape, x, attn.out));
        x = norm_sublayer(tape, store, lp + ".ln2", add(tape, x, ffn_sublayer(tape, store, lp + ".ffn", x)));
    }
    return x;
}

// Non-autoregressive decoder: all queries in parallel, no causal mask. The
// final layer's cross-attention weights land in `final_cross` when provided.
template <class Real>
TensorT<Real> decoder_forward(TapeT<Real>* tape, ParamStoreT<Real>& store, const std::string& prefix,
                              const ModelDims& dims, TensorT<Real> x, const TensorT<Real>& enc_out,
                              TensorT<Real>* final_cross = nullptr) {
    for (int l = 0; l < dims.dec_layers; ++l) {
        const std::string lp = prefix + "dec" + std::to_string(l);
        auto self_attn = attention_sublayer(tape, store, lp + ".self", dims.heads, x, x);
        x = norm_sublayer(tape, store, lp + ".ln1", add(tape, x, self_attn.out));
        const bool capture = final_cross != nullptr && l == dims.dec_layers - 1;
        auto cross = attention_sublayer(tape, store, lp + ".cross", dims.heads, x, enc_out, capture);
        if (capture) *final_cross = cross.weights;
        x = norm_sublayer(tape, store, lp + ".ln2", add(tape, x, cross.out));
        x = norm_sublayer(tape, store, lp + ".ln3", add(tape, x, ffn_sublayer(tape, store, lp + ".ffn", x)));
    }
    return x;
}

}  // namespace morphrl
