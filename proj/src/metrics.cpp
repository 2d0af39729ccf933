#include "pplx/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace pplx {

PplxReport pplx_from_trace(const DecodeTrace& trace, const BitString& bits, Scalar eps_floor) {
    if (bits.empty()) throw std::invalid_argument("pplx_from_trace: empty target");
    if (trace.emitted.size() != bits.size() || trace.dist.rows() != static_cast<Index>(bits.size())) {
        throw std::invalid_argument("pplx_from_trace: trace length " + std::to_string(trace.emitted.size()) +
                                    " vs target length " + std::to_string(bits.size()));
    }
    PplxReport r;
    r.step_logprob.reserve(bits.size());
    Scalar acc = 0;
    for (size_t i = 0; i < bits.size(); ++i) {
        const Scalar p = trace.dist(static_cast<Index>(i), bits[i]);
        const Scalar lp = std::log(std::max(p, eps_floor));
        r.step_logprob.push_back(lp);
        acc += lp;
    }
    r.mean_neg = -acc / static_cast<Scalar>(bits.size());
    r.emitted = BitString(trace.emitted);
    r.correct = (r.emitted == bits);
    return r;
}

PplxReport copy_log_perplexity(const TransformerParams& p, const ModelConfig& cfg, const BitString& bits,
                               Scalar eps_floor) {
    if (bits.empty()) throw std::invalid_argument("copy_log_perplexity: empty input");
    return pplx_from_trace(greedy_copy_decode(p, cfg, bits), bits, eps_floor);
}

Scalar dist_linf_gap(const DecodeTrace& a, const DecodeTrace& b) {
    if (a.dist.rows() != b.dist.rows() || a.dist.cols() != b.dist.cols()) {
        throw std::invalid_argument("dist_linf_gap: trace shapes " + std::to_string(a.dist.rows()) + "x" +
                                    std::to_string(a.dist.cols()) + " vs " + std::to_string(b.dist.rows()) + "x" +
                                    std::to_string(b.dist.cols()));
    }
    return (a.dist - b.dist).cwiseAbs().maxCoeff();
}

ConfidenceProfile confidence_profile(const DecodeTrace& trace, const BitString& target,
                                     std::optional<size_t> flip_pos) {
    const size_t n = target.size();
    if (trace.dist.rows() != static_cast<Index>(n) || n == 0) {
        throw std::invalid_argument("confidence_profile: trace rows " + std::to_string(trace.dist.rows()) +
                                    " vs target length " + std::to_string(n));
    }
    if (flip_pos && *flip_pos >= n) {
        throw std::out_of_range("confidence_profile: flip position " + std::to_string(*flip_pos) +
                                " out of length " + std::to_string(n));
    }
    ConfidenceProfile prof;
    prof.per_pos.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        prof.per_pos.push_back(trace.dist(static_cast<Index>(i), target[i]));
    }
    prof.min_prob = *std::min_element(prof.per_pos.begin(), prof.per_pos.end());
    prof.max_prob = *std::max_element(prof.per_pos.begin(), prof.per_pos.end());
    if (flip_pos) prof.flip_prob = prof.per_pos[*flip_pos];
    return prof;
}

Scalar boole_failure_bound(size_t n, Scalar gamma) {
    if (n == 0) throw std::invalid_argument("boole_failure_bound: N must be positive");
    if (gamma < 0 || gamma >= 0.5) {
        throw std::invalid_argument("boole_failure_bound: gamma must lie in [0, 1/2), got " +
                                    std::to_string(gamma));
    }
    return static_cast<Scalar>(n) * gamma;
}

Scalar fold_temperature(Scalar gamma, Scalar theta) {
    if (theta <= 0) throw std::invalid_argument("fold_temperature: temperature must be positive");
    if (gamma < 0 || gamma > 1) {
        throw std::invalid_argument("fold_temperature: gamma must lie in [0, 1], got " + std::to_string(gamma));
    }
    const Scalar wg = std::pow(gamma, 1.0 / theta);
    const Scalar wc = std::pow(1.0 - gamma, 1.0 / theta);
    return wg / (wc + wg);
}

const char* regime_name(Regime r) {
    switch (r) {
    case Regime::collapse: return "COLLAPSE";
    case Regime::too_short: return "TOO_SHORT";
    case Regime::unconfident: return "UNCONFIDENT";
    }
    throw std::logic_error("regime_name: bad enum value");
}

Regime classify_regime(size_t n, Scalar gamma, Scalar eps_n, Scalar threshold) {
    if (n == 0) throw std::invalid_argument("classify_regime: N must be positive");
    if (gamma < 0 || eps_n < 0 || threshold <= 0) {
        throw std::invalid_argument("classify_regime: gamma, eps_N and threshold must be non-negative");
    }
    const Scalar ng = static_cast<Scalar>(n) * gamma;
    const Scalar ne = static_cast<Scalar>(n) * eps_n;
    if (ng >= threshold) return Regime::unconfident;
    return ne < threshold ? Regime::collapse : Regime::too_short;
}

Scalar avg_entropy(const Mat& dist_rows) {
    if (dist_rows.rows() == 0) throw std::invalid_argument("avg_entropy: no distributions");
    Scalar total = 0;
    for (Index i = 0; i < dist_rows.rows(); ++i) {
        for (Index j = 0; j < dist_rows.cols(); ++j) {
            const Scalar p = dist_rows(i, j);
            if (p > 0) total -= p * std::log(p);
        }
    }
    return total / static_cast<Scalar>(dist_rows.rows());
}

Scalar avg_entropy(const DecodeTrace& trace) { return avg_entropy(trace.dist); }

Scalar micro_f1(const BitString& preds, const BitString& targets) {
    if (preds.empty()) throw std::invalid_argument("micro_f1: empty input");
    if (preds.size() != targets.size()) {
        throw std::invalid_argument("micro_f1: lengths " + std::to_string(preds.size()) + " vs " +
                                    std::to_string(targets.size()));
    }
    // micro-averaged over both classes: per class c, tp = hits, fp = predicted
    // c but wrong, fn = was c but missed
    size_t tp = 0, fp = 0, fn = 0;
    for (int c = 0; c <= 1; ++c) {
        for (size_t i = 0; i < preds.size(); ++i) {
            const bool pred_c = preds[i] == c, true_c = targets[i] == c;
            tp += static_cast<size_t>(pred_c && true_c);
            fp += static_cast<size_t>(pred_c && !true_c);
            fn += static_cast<size_t>(!pred_c && true_c);
        }
    }
    const Scalar precision = static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fp);
    const Scalar recall = static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fn);
    if (precision + recall == 0) return 0;
    return 2.0 * precision * recall / (precision + recall);
}

Scalar pearson_r(const std::vector<Scalar>& xs, const std::vector<Scalar>& ys) {
    if (xs.size() != ys.size()) {
        throw std::invalid_argument("pearson_r: lengths " + std::to_string(xs.size()) + " vs " +
                                    std::to_string(ys.size()));
    }
    const size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("pearson_r: need at least 2 points");
    Scalar mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<Scalar>(n);
    my /= static_cast<Scalar>(n);
    Scalar sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        const Scalar dx = xs[i] - mx, dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0 || syy == 0) throw std::domain_error("pearson_r: constant series");
    return sxy / std::sqrt(sxx * syy);
}

void MarginConfig::validate() const {
    if (epsilon_margin <= 0 || epsilon_margin >= 0.5) {
        throw std::invalid_argument("MarginConfig: epsilon_margin must lie in (0, 1/2)");
    }
    if (xi <= 0 || delta_cont <= 0 || epsilon_floor <= 0) {
        throw std::invalid_argument("MarginConfig: xi, delta_cont and epsilon_floor must be positive");
    }
}

NPrimeReport compute_nprime(const MarginConfig& margins) {
    margins.validate();
    NPrimeReport r;
    r.n_continuity = std::ceil(1.0 / margins.delta_cont);
    // verbatim formula; it can evaluate negative for small floors, which we
    // surface instead of clamping away
    r.n_oversmoothing = (margins.epsilon_margin - std::log(0.5 + margins.epsilon_margin) +
                         std::log(margins.epsilon_floor)) /
                        (margins.xi + margins.epsilon_margin);
    r.oversmoothing_negative = r.n_oversmoothing < 0;
    r.n_prime = std::max({r.n_continuity, r.n_oversmoothing, 1.0});
    return r;
}

} // namespace pplx
