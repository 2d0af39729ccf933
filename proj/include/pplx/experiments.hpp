#pragma once

#include "pplx/adam.hpp"
#include "pplx/metrics.hpp"
#include "pplx/model.hpp"

#include <optional>
#include <string_view>

namespace pplx {

// ---- copy task ------------------------------------------------------------

struct CopyTrainOptions {
    int batch = 32;
    size_t min_len = 1;
    size_t max_len = 16;
    long max_steps = 20000;
    Scalar confidence_target = 0.99; // mean held-out true-bit probability
    long eval_every = 250;
    int heldout_count = 32;
    size_t heldout_len = 16;
    AdamState optimizer; // taken as defaults; moments are reset
};

struct CopyTrainResult {
    ModelConfig config;
    TransformerParams params;
    std::vector<Scalar> loss_trace; // one entry per optimizer step
    long steps = 0;
    bool converged = false;          // hit the confidence target before the cap
    Scalar heldout_confidence = 0;   // last measured value
    bool heldout_exact = false;      // every held-out string copied exactly
};

// Next-token cross-entropy over "bits|bits" sequences, lengths uniform over
// [min_len, max_len], one shared length per batch so sequences stack into a
// single forward. Deterministic per seed.
CopyTrainResult run_copy_training(const ModelConfig& cfg, uint64_t seed,
                                  const CopyTrainOptions& opts = {});

struct CopySweepRow {
    size_t n = 0;
    Scalar linf_gap = 0;        // max |P_alpha - P_beta| over positions and symbols
    Scalar min_prob_alpha = 0;  // weakest true-bit confidence while decoding alpha
    Scalar flip_prob_beta = 0;  // probability of the flipped bit at its position
    Scalar pplx_alpha = 0;
    Scalar pplx_beta = 0;
    bool alpha_correct = false;
    bool beta_correct = false;
};

// flip_pos nullopt means the last position, the classic beta = 0...01.
std::vector<CopySweepRow> run_copy_sweep(const TransformerParams& p, const ModelConfig& cfg,
                                         const std::vector<size_t>& n_list,
                                         std::string_view pattern = "0",
                                         std::optional<size_t> flip_pos = std::nullopt);

struct GradNormRow {
    size_t n = 0;
    Scalar grad_norm_beta = 0; // 2-norm over every parameter tensor
    Scalar loss_beta = 0;      // teacher-forced cross-entropy on the copy region
};

// Gradient of the autoregressive cross-entropy on beta_N's copy targets: the
// model reads "beta|beta" and is scored on the n copy rows.
std::vector<GradNormRow> run_grad_norm_sweep(const TransformerParams& p, const ModelConfig& cfg,
                                             const std::vector<size_t>& n_list,
                                             std::string_view pattern = "0",
                                             std::optional<size_t> flip_pos = std::nullopt);

// ---- parity task ------------------------------------------------------------

struct ParityTrainOptions {
    int batch = 128;
    size_t min_len = 1;
    size_t max_len = 16;
    long steps = 5000;
    long snapshot_every = 100;
    AdamState optimizer;
};

struct ParityCheckpoint {
    long step = 0;
    TransformerParams params;
};

struct ParityTrainResult {
    ModelConfig config;
    std::vector<ParityCheckpoint> checkpoints; // steps 100, 200, ..., 5000
    std::vector<Scalar> loss_trace;
};

// Per-position running-parity prediction: every row of the forward is scored
// against the parity of its prefix. Deterministic per seed.
ParityTrainResult run_parity_training(const ModelConfig& cfg, uint64_t seed,
                                      const ParityTrainOptions& opts = {});

enum class Split { iid, ood };
const char* split_name(Split s);

enum class ParityScoring { all_positions, final_only };

struct CheckpointEval {
    long step = 0;
    Split split = Split::iid;
    Scalar L = 0;       // mean -log p(true parity bit), teacher-forced inputs
    Scalar f1 = 0;      // micro-F1 of argmax predictions
    Scalar entropy = 0; // mean full-distribution Shannon entropy
};

struct SplitSummary {
    Scalar r = 0;              // Pearson r between L and F1 across checkpoints
    bool r_degenerate = false; // fewer than 2 checkpoints or zero variance
    long best_f1_step = 0;     // highest F1, earliest step on ties
    long best_l_step = 0;      // lowest L, earliest step on ties
};

struct CheckpointEvalResult {
    std::vector<CheckpointEval> evals; // checkpoint-major: iid row, then ood row
    SplitSummary iid, ood;
};

CheckpointEvalResult eval_checkpoints(const ModelConfig& cfg,
                                      const std::vector<ParityCheckpoint>& checkpoints,
                                      const std::vector<ParityInstance>& iid_set,
                                      const std::vector<ParityInstance>& ood_set,
                                      ParityScoring scoring = ParityScoring::all_positions);

} // namespace pplx
