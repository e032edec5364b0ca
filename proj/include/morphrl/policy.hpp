#pragma once

#include <string>
#include <vector>

#include "morphrl/nn.hpp"
#include "morphrl/registry.hpp"

namespace morphrl {

// Sequence-to-sequence policy: token embeddings carry sensor/actuator
// identity, the current state enters through a sinusoidal embedding, and a
// non-masked encoder-decoder emits one bounded mean action per action token.
// There are no positional encodings anywhere.
template <class Real>
class PolicyNetT {
public:
    PolicyNetT(ModelDims dims, int obs_vocab, int act_vocab, SplitRng rng)
        : dims_(dims), obs_vocab_(obs_vocab), act_vocab_(act_vocab) {
        dims_.validate();
        if (obs_vocab <= 0 || act_vocab <= 0) throw ConfigError("policy: empty token vocabulary");
        const auto d = static_cast<std::int64_t>(dims_.token_dim);
        const auto m = static_cast<std::int64_t>(dims_.sinusoid_dim);
        const auto dm = static_cast<std::int64_t>(dims_.model_dim);
        SplitRng embed_rng = rng.fork("embed");
        store_.add("obs_embed", init_embedding<Real>(embed_rng, obs_vocab, d));
        store_.add("act_embed", init_embedding<Real>(embed_rng, act_vocab, d));
        SplitRng proj_rng = rng.fork("proj");
        store_.add("obs_proj", init_projection<Real>(proj_rng, d + m, dm));
        store_.add("act_proj", init_projection<Real>(proj_rng, d, dm));
        store_.add("out_proj", init_projection<Real>(proj_rng, dm, 1));
        SplitRng tf_rng = rng.fork("tf");
        add_transformer_params(store_, "tf.", dims_, tf_rng);
        freqs_ = sinusoid_frequencies<Real>(dims_.sinusoid_dim);
    }

    // s is [N_S] or [B, N_S]; returns actions [N_A] or [B, N_A], all inside
    // (-1, 1). `cross_attention`, when given, receives the final decoder
    // layer's cross-attention weights (detached, [heads, ..., N_A, N_S]).
    TensorT<Real> forward(TapeT<Real>* tape, const TensorT<Real>& s, const TokenAssignment& tokens,
                          TensorT<Real>* cross_attention = nullptr) {
        const auto n_s = static_cast<std::int64_t>(tokens.obs_tokens.size());
        const auto n_a = static_cast<std::int64_t>(tokens.act_tokens.size());
        if (n_a == 0) throw ContractError("policy: morphology has no action tokens");
        if (s.extent(-1) != n_s)
            throw ContractError("policy: state length " + std::to_string(s.extent(-1)) +
                                " does not match " + std::to_string(n_s) + " observation tokens");
        const bool batched = s.ndim() == 2;
        const auto batch = batched ? s.extent(0) : 0;

        TensorT<Real> h_obs = embed_rows(tape, store_.at("obs_embed"), tokens.obs_tokens);
        if (batched) h_obs = expand_leading(tape, h_obs, batch);
        TensorT<Real> x = concat_last(tape, h_obs, sinusoid_embed(tape, s, freqs_));
        TensorT<Real> src = matmul(tape, x, store_.at("obs_proj"));

        TensorT<Real> h_act = embed_rows(tape, store_.at("act_embed"), tokens.act_tokens);
        if (batched) h_act = expand_leading(tape, h_act, batch);
        TensorT<Real> tgt = matmul(tape, h_act, store_.at("act_proj"));

        TensorT<Real> enc = encoder_forward(tape, store_, "tf.", dims_, src);
        TensorT<Real> dec = decoder_forward(tape, store_, "tf.", dims_, tgt, enc, cross_attention);

        TensorT<Real> y = matmul(tape, dec, store_.at("out_proj"));
        Shape out_shape = batched ? Shape{batch, n_a} : Shape{n_a};
        return tanh_op(tape, reshape(tape, y, std::move(out_shape)));
    }

    ParamStoreT<Real>& params() { return store_; }
    const ParamStoreT<Real>& params() const { return store_; }
    const ModelDims& dims() const { return dims_; }
    int obs_vocab() const { return obs_vocab_; }
    int act_vocab() const { return act_vocab_; }

private:
    ModelDims dims_;
    int obs_vocab_;
    int act_vocab_;
    ParamStoreT<Real> store_;
    std::vector<Real> freqs_;
};

using PolicyNet = PolicyNetT<float>;

}  // namespace morphrl
