#include "pplx/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace pplx {

namespace {

// gradients matched to TransformerParams::flat() order
std::vector<Tensor> grads_in_order(const TransformerParams& attached, const GradMap& gm) {
    std::vector<Tensor> out;
    for (const Tensor& t : attached.flat()) out.push_back(gm.at(t.node()));
    return out;
}

void check_positive(long v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be at least 1");
}

void check_lengths(const ModelConfig& cfg, size_t min_len, size_t max_len, size_t required_context) {
    if (min_len < 1 || min_len > max_len) throw std::invalid_argument("invalid length range");
    if (static_cast<Index>(required_context) > cfg.max_context) {
        throw std::length_error("max_len does not fit max_context");
    }
}

struct HeldoutEval {
    Scalar confidence = 0;
    bool exact = true;
};

HeldoutEval eval_heldout(const TransformerParams& p, const ModelConfig& cfg,
                         const std::vector<BitString>& strings) {
    HeldoutEval ev;
    Scalar sum = 0;
    size_t count = 0;
    for (const BitString& s : strings) {
        const DecodeTrace t = greedy_copy_decode(p, cfg, s);
        for (Scalar prob : t.target_prob) {
            sum += prob;
            ++count;
        }
        ev.exact = ev.exact && BitString(t.emitted) == s;
    }
    ev.confidence = count ? sum / static_cast<Scalar>(count) : 0;
    return ev;
}

} // namespace

CopyTrainResult run_copy_training(const ModelConfig& cfg, uint64_t seed, const CopyTrainOptions& opts) {
    cfg.validate();
    check_positive(opts.batch, "batch");
    check_positive(opts.max_steps, "max_steps");
    check_positive(opts.eval_every, "eval_every");
    check_positive(opts.heldout_count, "heldout_count");
    check_lengths(cfg, opts.min_len, opts.max_len, 2 * opts.max_len + 1);
    if (opts.confidence_target <= 0 || opts.confidence_target > 1) {
        throw std::invalid_argument("confidence_target must lie in (0, 1]");
    }
    if (opts.heldout_len < opts.min_len || opts.heldout_len > opts.max_len) {
        throw std::invalid_argument("heldout_len outside the training range");
    }

    Rng init_rng = Rng::fork(seed, 0);
    Rng data_rng = Rng::fork(seed, 1);
    Rng heldout_rng = Rng::fork(seed, 2);

    CopyTrainResult res;
    res.config = cfg;
    res.params = TransformerParams::init(cfg, init_rng);
    const std::vector<BitString> heldout =
        sample_bitstrings(opts.heldout_len, opts.heldout_len, static_cast<size_t>(opts.heldout_count), heldout_rng);

    AdamState adam = opts.optimizer;
    adam.step_count = 0;
    adam.m.clear();
    adam.v.clear();

    const size_t len_span = opts.max_len - opts.min_len + 1;
    for (long step = 1; step <= opts.max_steps; ++step) {
        const size_t n = opts.min_len + data_rng.below(static_cast<uint64_t>(len_span));
        const std::vector<BitString> batch =
            sample_bitstrings(n, n, static_cast<size_t>(opts.batch), data_rng);

        const size_t seq_len = 2 * n + 1; // bits | bits
        std::vector<int> tokens;
        tokens.reserve(seq_len * batch.size());
        for (const BitString& s : batch) {
            tokens.insert(tokens.end(), s.bits().begin(), s.bits().end());
            tokens.push_back(kStopToken);
            tokens.insert(tokens.end(), s.bits().begin(), s.bits().end());
        }
        std::vector<int> rows, targets; // next-token pairs, all but each last row
        rows.reserve((seq_len - 1) * batch.size());
        for (size_t s = 0; s < batch.size(); ++s) {
            const size_t base = s * seq_len;
            for (size_t i = 0; i + 1 < seq_len; ++i) {
                rows.push_back(static_cast<int>(base + i));
                targets.push_back(tokens[base + i + 1]);
            }
        }

        Tape tape;
        TransformerParams attached = attach(res.params, tape);
        Tensor probs = forward(attached, cfg, tokens, static_cast<Index>(batch.size()));
        Tensor loss = cross_entropy(gather_rows(probs, rows), targets);
        res.loss_trace.push_back(loss.value());

        GradMap gm = tape.backward(loss);
        std::vector<Tensor> updated = adam_step(res.params.flat(), grads_in_order(attached, gm), adam);
        res.params = TransformerParams::from_flat(cfg, updated);
        res.steps = step;

        if (step % opts.eval_every == 0 || step == opts.max_steps) {
            const HeldoutEval ev = eval_heldout(res.params, cfg, heldout);
            res.heldout_confidence = ev.confidence;
            res.heldout_exact = ev.exact;
            if (ev.confidence >= opts.confidence_target) {
                res.converged = true;
                break;
            }
        }
    }
    return res;
}

std::vector<CopySweepRow> run_copy_sweep(const TransformerParams& p, const ModelConfig& cfg,
                                         const std::vector<size_t>& n_list, std::string_view pattern,
                                         std::optional<size_t> flip_pos) {
    if (n_list.empty()) throw std::invalid_argument("run_copy_sweep: empty N list");
    std::vector<CopySweepRow> out;
    out.reserve(n_list.size());
    for (const size_t n : n_list) {
        const BitString alpha = make_alpha(n, pattern);
        const size_t flip = flip_pos.value_or(n - 1);
        const BitString beta = make_beta(alpha, flip);

        const DecodeTrace ta = greedy_copy_decode(p, cfg, alpha);
        const DecodeTrace tb = greedy_copy_decode(p, cfg, beta);
        const ConfidenceProfile ca = confidence_profile(ta, alpha);
        const ConfidenceProfile cb = confidence_profile(tb, beta, flip);
        const PplxReport ra = pplx_from_trace(ta, alpha);
        const PplxReport rb = pplx_from_trace(tb, beta);

        CopySweepRow row;
        row.n = n;
        row.linf_gap = dist_linf_gap(ta, tb);
        row.min_prob_alpha = ca.min_prob;
        row.flip_prob_beta = cb.flip_prob.value();
        row.pplx_alpha = ra.mean_neg;
        row.pplx_beta = rb.mean_neg;
        row.alpha_correct = ra.correct;
        row.beta_correct = rb.correct;
        out.push_back(row);
    }
    return out;
}

std::vector<GradNormRow> run_grad_norm_sweep(const TransformerParams& p, const ModelConfig& cfg,
                                             const std::vector<size_t>& n_list, std::string_view pattern,
                                             std::optional<size_t> flip_pos) {
    if (n_list.empty()) throw std::invalid_argument("run_grad_norm_sweep: empty N list");
    std::vector<GradNormRow> out;
    out.reserve(n_list.size());
    for (const size_t n : n_list) {
        const BitString alpha = make_alpha(n, pattern);
        const BitString beta = make_beta(alpha, flip_pos.value_or(n - 1));

        std::vector<int> tokens;
        tokens.reserve(2 * n + 1);
        tokens.insert(tokens.end(), beta.bits().begin(), beta.bits().end());
        tokens.push_back(kStopToken);
        tokens.insert(tokens.end(), beta.bits().begin(), beta.bits().end());
        tokens.pop_back(); // the final bit is a target, never an input

        Tape tape;
        TransformerParams attached = attach(p, tape);
        Tensor probs = forward(attached, cfg, tokens, 1);
        Tensor copy_rows = slice_rows(probs, static_cast<Index>(n), static_cast<Index>(n));
        Tensor loss = cross_entropy(copy_rows, beta.bits());

        GradMap gm = tape.backward(loss);
        Scalar sq = 0;
        for (const Tensor& g : grads_in_order(attached, gm)) sq += g.flat().squaredNorm();

        out.push_back({n, std::sqrt(sq), loss.value()});
    }
    return out;
}

ParityTrainResult run_parity_training(const ModelConfig& cfg, uint64_t seed, const ParityTrainOptions& opts) {
    cfg.validate();
    check_positive(opts.batch, "batch");
    check_positive(opts.steps, "steps");
    check_positive(opts.snapshot_every, "snapshot_every");
    check_lengths(cfg, opts.min_len, opts.max_len, opts.max_len);

    Rng init_rng = Rng::fork(seed, 0);
    Rng data_rng = Rng::fork(seed, 1);

    ParityTrainResult res;
    res.config = cfg;
    TransformerParams params = TransformerParams::init(cfg, init_rng);

    AdamState adam = opts.optimizer;
    adam.step_count = 0;
    adam.m.clear();
    adam.v.clear();

    const size_t len_span = opts.max_len - opts.min_len + 1;
    for (long step = 1; step <= opts.steps; ++step) {
        const size_t n = opts.min_len + data_rng.below(static_cast<uint64_t>(len_span));
        const std::vector<ParityInstance> batch =
            sample_parity_dataset(n, n, static_cast<size_t>(opts.batch), data_rng);

        std::vector<int> tokens, targets; // every position is scored
        tokens.reserve(n * batch.size());
        targets.reserve(n * batch.size());
        for (const ParityInstance& inst : batch) {
            tokens.insert(tokens.end(), inst.bits.bits().begin(), inst.bits.bits().end());
            targets.insert(targets.end(), inst.targets.bits().begin(), inst.targets.bits().end());
        }

        Tape tape;
        TransformerParams attached = attach(params, tape);
        Tensor probs = forward(attached, cfg, tokens, static_cast<Index>(batch.size()));
        Tensor loss = cross_entropy(probs, targets);
        res.loss_trace.push_back(loss.value());

        GradMap gm = tape.backward(loss);
        std::vector<Tensor> updated = adam_step(params.flat(), grads_in_order(attached, gm), adam);
        params = TransformerParams::from_flat(cfg, updated);

        if (step % opts.snapshot_every == 0) {
            res.checkpoints.push_back({step, params});
        }
    }
    return res;
}

const char* split_name(Split s) { return s == Split::iid ? "iid" : "ood"; }

namespace {

CheckpointEval eval_one_split(const ModelConfig& cfg, const TransformerParams& params, long step,
                              const std::vector<ParityInstance>& set, Split split, ParityScoring scoring) {
    // stack same-length instances into one forward
    std::map<size_t, std::vector<size_t>> by_len;
    for (size_t i = 0; i < set.size(); ++i) by_len[set[i].bits.size()].push_back(i);

    size_t scored_total = 0;
    for (const auto& [len, idxs] : by_len) {
        scored_total += (scoring == ParityScoring::all_positions ? len : 1) * idxs.size();
    }

    Mat scored_rows(static_cast<Index>(scored_total), cfg.vocab_size);
    std::vector<int> preds, targs;
    preds.reserve(scored_total);
    targs.reserve(scored_total);
    Scalar neg_log_sum = 0;
    Index cursor = 0;

    for (const auto& [len, idxs] : by_len) {
        std::vector<int> tokens;
        tokens.reserve(len * idxs.size());
        for (const size_t i : idxs) {
            tokens.insert(tokens.end(), set[i].bits.bits().begin(), set[i].bits.bits().end());
        }
        const Tensor probs = forward(params, cfg, tokens, static_cast<Index>(idxs.size()));
        const auto m = probs.mat();

        for (size_t k = 0; k < idxs.size(); ++k) {
            const ParityInstance& inst = set[idxs[k]];
            const size_t first = scoring == ParityScoring::all_positions ? 0 : len - 1;
            for (size_t pos = first; pos < len; ++pos) {
                const Index row = static_cast<Index>(k * len + pos);
                const int target = inst.targets[pos];
                neg_log_sum += -std::log(std::max(m(row, target), kDefaultEpsFloor));
                preds.push_back(m(row, 1) > m(row, 0) ? 1 : 0);
                targs.push_back(target);
                scored_rows.row(cursor++) = m.row(row);
            }
        }
    }

    CheckpointEval ev;
    ev.step = step;
    ev.split = split;
    ev.L = neg_log_sum / static_cast<Scalar>(scored_total);
    ev.f1 = micro_f1(BitString(preds), BitString(targs));
    ev.entropy = avg_entropy(scored_rows);
    return ev;
}

SplitSummary summarize(const std::vector<CheckpointEval>& evals, Split split) {
    std::vector<Scalar> ls, f1s;
    std::vector<long> steps;
    for (const CheckpointEval& ev : evals) {
        if (ev.split != split) continue;
        ls.push_back(ev.L);
        f1s.push_back(ev.f1);
        steps.push_back(ev.step);
    }
    SplitSummary s;
    size_t best_f1 = 0, best_l = 0;
    for (size_t i = 1; i < steps.size(); ++i) {
        if (f1s[i] > f1s[best_f1]) best_f1 = i;
        if (ls[i] < ls[best_l]) best_l = i;
    }
    s.best_f1_step = steps[best_f1];
    s.best_l_step = steps[best_l];
    try {
        s.r = pearson_r(ls, f1s);
    } catch (const std::exception&) {
        s.r_degenerate = true;
    }
    return s;
}

} // namespace

CheckpointEvalResult eval_checkpoints(const ModelConfig& cfg, const std::vector<ParityCheckpoint>& checkpoints,
                                      const std::vector<ParityInstance>& iid_set,
                                      const std::vector<ParityInstance>& ood_set, ParityScoring scoring) {
    if (checkpoints.empty()) throw std::invalid_argument("eval_checkpoints: no checkpoints");
    if (iid_set.empty() || ood_set.empty()) throw std::invalid_argument("eval_checkpoints: empty split");

    CheckpointEvalResult res;
    for (const ParityCheckpoint& ck : checkpoints) {
        res.evals.push_back(eval_one_split(cfg, ck.params, ck.step, iid_set, Split::iid, scoring));
        res.evals.push_back(eval_one_split(cfg, ck.params, ck.step, ood_set, Split::ood, scoring));
    }
    res.iid = summarize(res.evals, Split::iid);
    res.ood = summarize(res.evals, Split::ood);
    return res;
}

} // namespace pplx
