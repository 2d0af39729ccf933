#pragma once

#include "pplx/tasks.hpp"
#include "pplx/tensor.hpp"

#include "json.hpp"

namespace pplx {

// Copy-task vocabulary: 0, 1, and the stop symbol '|'.
inline constexpr int kStopToken = 2;

struct ModelConfig {
    int vocab_size = 3;
    int n_layers = 2;
    int n_heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int max_context = 1025; // 2*512 + 1, the longest copy evaluation
    Scalar rope_base = 10000.0;

    int d_head() const { return d_model / n_heads; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LayerParams {
    Tensor attn_gain, wq, wk, wv, wo;
    Tensor mlp_gain, w1, w2;
};

// Pre-norm decoder blocks with RMS normalization (gain only, no biases
// anywhere), GELU MLP, rotary positions. Tensor order here is the declared
// order used by checkpoints and the optimizer.
struct TransformerParams {
    Tensor tok_embed;
    std::vector<LayerParams> layers;
    Tensor final_gain, unembed;

    // scaled normal init: std 0.02, output projections (wo, w2) divided by
    // sqrt(2*n_layers), gains at 1
    static TransformerParams init(const ModelConfig& cfg, Rng& rng);

    static std::vector<std::string> tensor_names(const ModelConfig& cfg);
    std::vector<Tensor> flat() const;
    static TransformerParams from_flat(const ModelConfig& cfg, const std::vector<Tensor>& tensors);
    void validate(const ModelConfig& cfg) const;
};

// Every tensor re-registered as a leaf on `tape`, in declared order.
TransformerParams attach(const TransformerParams& p, Tape& tape);

// Pairwise rotation of columns (2i, 2i+1) by angle pos * base^(-2i/d_head),
// where pos is the row's position within its sequence.
Tensor rope_rotate(const Tensor& x, Index n_seqs, Index seq_len, Scalar rope_base);

// Single-head causal attention over stacked same-length sequences. Saves the
// attention probabilities for the backward pass.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index n_seqs,
                        Index seq_len, Scalar scale);

// Next-symbol distributions, one row per input position. `tokens` holds
// n_seqs same-length sequences back to back; rows of the result line up with
// tokens. Row k depends only on tokens[0..k] of its own sequence, bitwise.
Tensor forward(const TransformerParams& p, const ModelConfig& cfg, std::span<const int> tokens,
               Index n_seqs = 1);

// argmax over {0,1} only; ties resolve to 0; the stop symbol is never emitted
int greedy_next(const Tensor& dist);

// sample from the {0,1}-restricted distribution sharpened to p^(1/theta)
int sample_with_temperature(const Tensor& dist, Scalar theta, Rng& rng);

struct DecodeTrace {
    Mat dist;                        // one distribution row per emitted symbol
    std::vector<int> emitted;
    std::vector<Scalar> target_prob; // probability assigned to the true bit
};

// Autoregressive greedy copy: prompt "bits|", feed back the model's own
// outputs, score the true bits. The default path verifies a guessed
// completion with whole-sequence forwards and is bitwise identical to the
// step-by-step reference (see tests).
DecodeTrace greedy_copy_decode(const TransformerParams& p, const ModelConfig& cfg, const BitString& bits);
DecodeTrace greedy_copy_decode_naive(const TransformerParams& p, const ModelConfig& cfg, const BitString& bits);

} // namespace pplx
