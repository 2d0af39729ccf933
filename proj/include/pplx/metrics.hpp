#pragma once

#include "pplx/model.hpp"
#include "pplx/tasks.hpp"

#include <optional>

namespace pplx {

// Self-conditioned log-perplexity of a greedy copy attempt: the context holds
// the model's own outputs, the scored probability is the true bit's.
struct PplxReport {
    std::vector<Scalar> step_logprob; // log p(true bit), clamped at log(eps_floor)
    Scalar mean_neg = 0;              // L, the negative mean of the above
    BitString emitted;
    bool correct = false; // emitted equals the target exactly
};

PplxReport copy_log_perplexity(const TransformerParams& p, const ModelConfig& cfg, const BitString& bits,
                               Scalar eps_floor = kDefaultEpsFloor);

// Same report built from an already-decoded trace (used by sweeps and ingest).
PplxReport pplx_from_trace(const DecodeTrace& trace, const BitString& bits,
                           Scalar eps_floor = kDefaultEpsFloor);

// max over positions and vocabulary entries of |pA - pB|
Scalar dist_linf_gap(const DecodeTrace& a, const DecodeTrace& b);

struct ConfidenceProfile {
    std::vector<Scalar> per_pos; // probability of the target bit at each step
    Scalar min_prob = 0;
    Scalar max_prob = 0;
    std::optional<Scalar> flip_prob; // probability at the flipped position, if given
};

ConfidenceProfile confidence_profile(const DecodeTrace& trace, const BitString& target,
                                     std::optional<size_t> flip_pos = std::nullopt);

// N * gamma, the union bound on any stochastic copying error
Scalar boole_failure_bound(size_t n, Scalar gamma);

// gamma' = gamma^(1/theta) / ((1-gamma)^(1/theta) + gamma^(1/theta))
Scalar fold_temperature(Scalar gamma, Scalar theta);

enum class Regime { collapse, too_short, unconfident };
const char* regime_name(Regime r);

// "much less than 1" operationalized as < threshold
Regime classify_regime(size_t n, Scalar gamma, Scalar eps_n, Scalar threshold = 0.1);

// mean over rows of the full per-row Shannon entropy (natural log)
Scalar avg_entropy(const Mat& dist_rows);
Scalar avg_entropy(const DecodeTrace& trace);

// micro-averaged F1 over the two classes; equals accuracy for single-label
// binary predictions
Scalar micro_f1(const BitString& preds, const BitString& targets);

Scalar pearson_r(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys);

struct MarginConfig {
    Scalar epsilon_margin; // the decodability margin, < 1/2
    Scalar xi;             // per-step log-probability gap
    Scalar delta_cont;     // continuity constant, supplied by the user
    Scalar epsilon_floor = kDefaultEpsFloor;
    void validate() const;
};

struct NPrimeReport {
    Scalar n_continuity;
    Scalar n_oversmoothing;
    Scalar n_prime;                     // max of the two, floored at 1
    bool oversmoothing_negative = false; // formula can go negative; reported, not hidden
};

NPrimeReport compute_nprime(const MarginConfig& margins);

} // namespace pplx
