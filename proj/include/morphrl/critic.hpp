#pragma once

#include <utility>
#include <vector>

#include "morphrl/nn.hpp"
#include "morphrl/registry.hpp"

namespace morphrl {

// Action-value net with the same agent-agnostic skeleton as the policy. The
// decoder queries are action token embeddings concatenated with a sinusoidal
// embedding of the action values; per-query scalars are mean-pooled so the Q
// scale does not grow with the number of actuators. Tables are its own, not
// shared with the policy.
template <class Real>
class CriticNetT {
public:
    CriticNetT(ModelDims dims, int act_sinusoid_dim, int obs_vocab, int act_vocab, SplitRng rng)
        : dims_(dims), act_sinusoid_dim_(act_sinusoid_dim) {
        dims_.validate();
        if (act_sinusoid_dim_ <= 0 || act_sinusoid_dim_ % 2 != 0)
            throw ConfigError("critic: action sinusoid width must be positive and even");
        if (obs_vocab <= 0 || act_vocab <= 0) throw ConfigError("critic: empty token vocabulary");
        const auto d = static_cast<std::int64_t>(dims_.token_dim);
        const auto m = static_cast<std::int64_t>(dims_.sinusoid_dim);
        const auto ma = static_cast<std::int64_t>(act_sinusoid_dim_);
        const auto dm = static_cast<std::int64_t>(dims_.model_dim);
        SplitRng embed_rng = rng.fork("embed");
        store_.add("obs_embed", init_embedding<Real>(embed_rng, obs_vocab, d));
        store_.add("act_embed", init_embedding<Real>(embed_rng, act_vocab, d));
        SplitRng proj_rng = rng.fork("proj");
        store_.add("obs_proj", init_projection<Real>(proj_rng, d + m, dm));
        store_.add("act_proj", init_projection<Real>(proj_rng, d + ma, dm));
        store_.add("out_proj", init_projection<Real>(proj_rng, dm, 1));
        SplitRng tf_rng = rng.fork("tf");
        add_transformer_params(store_, "tf.", dims_, tf_rng);
        freqs_ = sinusoid_frequencies<Real>(dims_.sinusoid_dim);
        act_freqs_ = sinusoid_frequencies<Real>(act_sinusoid_dim_);
    }

    // s [N_S] with a [N_A] -> Q [1]; s [B, N_S] with a [B, N_A] -> Q [B].
    // Differentiable in s, a, and parameters.
    TensorT<Real> q_value(TapeT<Real>* tape, const TensorT<Real>& s, const TensorT<Real>& a,
                          const TokenAssignment& tokens) {
        const auto n_s = static_cast<std::int64_t>(tokens.obs_tokens.size());
        const auto n_a = static_cast<std::int64_t>(tokens.act_tokens.size());
        if (s.extent(-1) != n_s || a.extent(-1) != n_a)
            throw ContractError("critic: state/action lengths " + std::to_string(s.extent(-1)) + "/" +
                                std::to_string(a.extent(-1)) + " do not match tokens " +
                                std::to_string(n_s) + "/" + std::to_string(n_a));
        if (s.ndim() != a.ndim() || (s.ndim() == 2 && s.extent(0) != a.extent(0)))
            throw ContractError("critic: state and action batches disagree");
        const bool batched = s.ndim() == 2;
        const auto batch = batched ? s.extent(0) : 0;

        TensorT<Real> h_obs = embed_rows(tape, store_.at("obs_embed"), tokens.obs_tokens);
        if (batched) h_obs = expand_leading(tape, h_obs, batch);
        TensorT<Real> x = concat_last(tape, h_obs, sinusoid_embed(tape, s, freqs_));
        TensorT<Real> src = matmul(tape, x, store_.at("obs_proj"));

        TensorT<Real> h_act = embed_rows(tape, store_.at("act_embed"), tokens.act_tokens);
        if (batched) h_act = expand_leading(tape, h_act, batch);
        TensorT<Real> xq = concat_last(tape, h_act, sinusoid_embed(tape, a, act_freqs_));
        TensorT<Real> tgt = matmul(tape, xq, store_.at("act_proj"));

        TensorT<Real> enc = encoder_forward(tape, store_, "tf.", dims_, src);
        TensorT<Real> dec = decoder_forward(tape, store_, "tf.", dims_, tgt, enc);

        TensorT<Real> y = matmul(tape, dec, store_.at("out_proj"));
        Shape squeezed = batched ? Shape{batch, n_a} : Shape{n_a};
        return mean_last(tape, reshape(tape, y, std::move(squeezed)));
    }

    ParamStoreT<Real>& params() { return store_; }
    const ParamStoreT<Real>& params() const { return store_; }
    const ModelDims& dims() const { return dims_; }
    int act_sinusoid_dim() const { return act_sinusoid_dim_; }

private:
    ModelDims dims_;
    int act_sinusoid_dim_;
    ParamStoreT<Real> store_;
    std::vector<Real> freqs_;
    std::vector<Real> act_freqs_;
};

using CriticNet = CriticNetT<float>;

// Twin critics stay fully independent; both values come back so the caller
// can take the pessimistic minimum.
template <class Real>
std::pair<TensorT<Real>, TensorT<Real>> twin_q(TapeT<Real>* tape, const TensorT<Real>& s,
                                               const TensorT<Real>& a, const TokenAssignment& tokens,
                                               CriticNetT<Real>& critic1, CriticNetT<Real>& critic2) {
    return {critic1.q_value(tape, s, a, tokens), critic2.q_value(tape, s, a, tokens)};
}

}  // namespace morphrl
