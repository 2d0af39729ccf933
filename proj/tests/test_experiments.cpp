#include "doctest.h"

#include "pplx/experiments.hpp"

#include <cmath>
#include <cstring>
#include <numeric>

using namespace pplx;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.d_model = 8;
    cfg.d_ff = 16;
    cfg.max_context = 17;
    return cfg;
}

bool params_bitwise_equal(const TransformerParams& a, const TransformerParams& b) {
    const auto fa = a.flat(), fb = b.flat();
    if (fa.size() != fb.size()) return false;
    for (size_t i = 0; i < fa.size(); ++i) {
        if (fa[i].shape() != fb[i].shape()) return false;
        if (std::memcmp(fa[i].flat().data(), fb[i].flat().data(),
                        sizeof(Scalar) * static_cast<size_t>(fa[i].flat().size())) != 0) {
            return false;
        }
    }
    return true;
}

CopyTrainOptions tiny_copy_opts() {
    CopyTrainOptions o;
    o.batch = 4;
    o.min_len = 1;
    o.max_len = 3;
    o.max_steps = 6;
    o.eval_every = 3;
    o.heldout_count = 4;
    o.heldout_len = 3;
    return o;
}

} // namespace

TEST_CASE("copy training is deterministic per seed") {
    const ModelConfig cfg = tiny_config();
    const CopyTrainOptions opts = tiny_copy_opts();

    const CopyTrainResult a = run_copy_training(cfg, 5, opts);
    const CopyTrainResult b = run_copy_training(cfg, 5, opts);
    CHECK(a.config == cfg);
    CHECK(a.steps == 6);
    CHECK(a.loss_trace.size() == 6);
    for (const Scalar l : a.loss_trace) CHECK(std::isfinite(l));
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(params_bitwise_equal(a.params, b.params));
    CHECK(a.heldout_confidence == b.heldout_confidence);

    const CopyTrainResult c = run_copy_training(cfg, 6, opts);
    CHECK(a.loss_trace != c.loss_trace);
}

TEST_CASE("copy training convergence check runs on the eval cadence") {
    const ModelConfig cfg = tiny_config();
    CopyTrainOptions opts = tiny_copy_opts();
    opts.confidence_target = 1e-9; // any model clears this at the first eval
    const CopyTrainResult r = run_copy_training(cfg, 5, opts);
    CHECK(r.converged);
    CHECK(r.steps == 3);
    CHECK(r.loss_trace.size() == 3);
    CHECK(r.heldout_confidence > 0);
}

TEST_CASE("copy training validates its options") {
    const ModelConfig cfg = tiny_config();
    CopyTrainOptions o = tiny_copy_opts();
    o.batch = 0;
    CHECK_THROWS_AS(run_copy_training(cfg, 1, o), std::invalid_argument);
    o = tiny_copy_opts();
    o.min_len = 0;
    CHECK_THROWS_AS(run_copy_training(cfg, 1, o), std::invalid_argument);
    o = tiny_copy_opts();
    o.max_len = 9; // 2*9+1 exceeds max_context 17
    o.heldout_len = 3;
    CHECK_THROWS_AS(run_copy_training(cfg, 1, o), std::length_error);
    o = tiny_copy_opts();
    o.confidence_target = 0;
    CHECK_THROWS_AS(run_copy_training(cfg, 1, o), std::invalid_argument);
    o = tiny_copy_opts();
    o.heldout_len = 4; // outside [min_len, max_len]
    CHECK_THROWS_AS(run_copy_training(cfg, 1, o), std::invalid_argument);
}

TEST_CASE("copy sweep rows are recomputable from fresh decodes") {
    const ModelConfig cfg = tiny_config();
    Rng rng(11);
    const TransformerParams p = TransformerParams::init(cfg, rng);

    const std::vector<size_t> ns{2, 4};
    const auto rows = run_copy_sweep(p, cfg, ns);
    REQUIRE(rows.size() == 2);

    for (size_t i = 0; i < rows.size(); ++i) {
        const CopySweepRow& row = rows[i];
        CHECK(row.n == ns[i]);
        CHECK(std::isfinite(row.linf_gap));
        CHECK(row.linf_gap >= 0);
        CHECK(row.linf_gap <= 1);
        CHECK(row.min_prob_alpha >= 0);
        CHECK(row.min_prob_alpha <= 1);
        CHECK(row.flip_prob_beta >= 0);
        CHECK(row.flip_prob_beta <= 1);
        CHECK(row.pplx_alpha >= 0);
        CHECK(row.pplx_beta >= 0);
    }

    // row 0 against a by-hand rerun of the same decodes
    const BitString alpha = make_alpha(2);
    const BitString beta = make_beta(alpha, 1); // default flip is the last bit
    const DecodeTrace ta = greedy_copy_decode(p, cfg, alpha);
    const DecodeTrace tb = greedy_copy_decode(p, cfg, beta);
    CHECK(rows[0].linf_gap == dist_linf_gap(ta, tb));
    CHECK(rows[0].min_prob_alpha == confidence_profile(ta, alpha).min_prob);
    CHECK(rows[0].flip_prob_beta == confidence_profile(tb, beta, 1).flip_prob.value());
    CHECK(rows[0].pplx_alpha == pplx_from_trace(ta, alpha).mean_neg);
    CHECK(rows[0].pplx_beta == pplx_from_trace(tb, beta).mean_neg);
    CHECK(rows[0].alpha_correct == (BitString(ta.emitted) == alpha));
    CHECK(rows[0].beta_correct == (BitString(tb.emitted) == beta));

    CHECK_THROWS_AS(run_copy_sweep(p, cfg, {}), std::invalid_argument);
    CHECK_THROWS_AS(run_copy_sweep(p, cfg, {9}), std::length_error); // 2*9+1 > 17
}

TEST_CASE("grad norm sweep is deterministic and matches a detached forward") {
    const ModelConfig cfg = tiny_config();
    Rng rng(12);
    const TransformerParams p = TransformerParams::init(cfg, rng);

    const std::vector<size_t> ns{2, 3};
    const auto rows = run_grad_norm_sweep(p, cfg, ns);
    const auto rows2 = run_grad_norm_sweep(p, cfg, ns);
    REQUIRE(rows.size() == 2);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].n == ns[i]);
        CHECK(std::isfinite(rows[i].grad_norm_beta));
        CHECK(rows[i].grad_norm_beta > 0);
        CHECK(std::isfinite(rows[i].loss_beta));
        CHECK(rows[i].loss_beta > 0);
        CHECK(rows[i].grad_norm_beta == rows2[i].grad_norm_beta);
        CHECK(rows[i].loss_beta == rows2[i].loss_beta);
    }

    // loss_beta for n=2: forward on "beta|beta"-minus-last-bit, score the copy rows
    const size_t n = 2;
    const BitString beta = make_beta(make_alpha(n), n - 1);
    std::vector<int> tokens(beta.bits());
    tokens.push_back(kStopToken);
    tokens.insert(tokens.end(), beta.bits().begin(), beta.bits().end());
    tokens.pop_back();
    const Tensor probs = forward(p, cfg, tokens, 1);
    Scalar neg = 0;
    for (size_t i = 0; i < n; ++i) {
        neg += -std::log(std::max(probs.mat()(static_cast<Index>(n + i), beta[i]), kDefaultEpsFloor));
    }
    CHECK(rows[0].loss_beta == doctest::Approx(neg / static_cast<Scalar>(n)).epsilon(1e-13));

    CHECK_THROWS_AS(run_grad_norm_sweep(p, cfg, {}), std::invalid_argument);
}

TEST_CASE("parity training snapshots on the stated cadence, deterministically") {
    const ModelConfig cfg = tiny_config();
    ParityTrainOptions opts;
    opts.batch = 4;
    opts.min_len = 1;
    opts.max_len = 4;
    opts.steps = 9;
    opts.snapshot_every = 3;

    const ParityTrainResult a = run_parity_training(cfg, 21, opts);
    CHECK(a.config == cfg);
    CHECK(a.loss_trace.size() == 9);
    for (const Scalar l : a.loss_trace) CHECK(std::isfinite(l));
    REQUIRE(a.checkpoints.size() == 3);
    CHECK(a.checkpoints[0].step == 3);
    CHECK(a.checkpoints[1].step == 6);
    CHECK(a.checkpoints[2].step == 9);

    const ParityTrainResult b = run_parity_training(cfg, 21, opts);
    CHECK(a.loss_trace == b.loss_trace);
    CHECK(params_bitwise_equal(a.checkpoints.back().params, b.checkpoints.back().params));

    const ParityTrainResult c = run_parity_training(cfg, 22, opts);
    CHECK_FALSE(params_bitwise_equal(a.checkpoints.back().params, c.checkpoints.back().params));
}

TEST_CASE("parity training reduces the loss") {
    const ModelConfig cfg = tiny_config();
    ParityTrainOptions opts;
    opts.batch = 16;
    opts.min_len = 1;
    opts.max_len = 4;
    opts.steps = 150;
    opts.snapshot_every = 150;
    opts.optimizer.learning_rate = 3e-3;

    const ParityTrainResult r = run_parity_training(cfg, 33, opts);
    const auto mean = [&](size_t from, size_t to) {
        return std::accumulate(r.loss_trace.begin() + from, r.loss_trace.begin() + to, Scalar{0}) /
               static_cast<Scalar>(to - from);
    };
    // the first thing any model learns is that the stop symbol never appears,
    // worth log(3) - log(2) on its own
    CHECK(mean(130, 150) < mean(0, 20) - 0.1);
}

TEST_CASE("eval_checkpoints layout, recomputation, and tie-breaking") {
    const ModelConfig cfg = tiny_config();
    Rng rng(41);
    const TransformerParams p1 = TransformerParams::init(cfg, rng);
    const TransformerParams p2 = TransformerParams::init(cfg, rng);
    const std::vector<ParityCheckpoint> cks{{100, p1}, {200, p2}};

    Rng data_rng(42);
    const auto iid = sample_parity_dataset(3, 3, 6, data_rng);
    const auto ood = sample_parity_dataset(5, 5, 4, data_rng);

    const CheckpointEvalResult res = eval_checkpoints(cfg, cks, iid, ood);
    REQUIRE(res.evals.size() == 4);
    CHECK(res.evals[0].step == 100);
    CHECK(res.evals[0].split == Split::iid);
    CHECK(res.evals[1].step == 100);
    CHECK(res.evals[1].split == Split::ood);
    CHECK(res.evals[2].step == 200);
    CHECK(res.evals[3].split == Split::ood);
    for (const CheckpointEval& ev : res.evals) {
        CHECK(std::isfinite(ev.L));
        CHECK(ev.L >= 0);
        CHECK(ev.f1 >= 0);
        CHECK(ev.f1 <= 1);
        CHECK(ev.entropy >= 0);
        CHECK(ev.entropy <= std::log(3.0) + 1e-12);
    }

    // recompute checkpoint 1 / iid with per-instance forwards; stacked rows
    // must match bitwise, so the aggregates agree to roundoff
    Scalar neg = 0;
    int hits = 0, total = 0;
    Scalar ent = 0;
    for (const ParityInstance& inst : iid) {
        const Tensor probs = forward(p1, cfg, inst.bits.bits(), 1);
        const auto m = probs.mat();
        for (size_t pos = 0; pos < inst.bits.size(); ++pos) {
            const auto row = static_cast<Index>(pos);
            neg += -std::log(std::max(m(row, inst.targets[pos]), kDefaultEpsFloor));
            const int pred = m(row, 1) > m(row, 0) ? 1 : 0;
            hits += pred == inst.targets[pos];
            ++total;
            for (int v = 0; v < 3; ++v) ent += -m(row, v) * std::log(m(row, v));
        }
    }
    CHECK(res.evals[0].L == doctest::Approx(neg / total).epsilon(1e-12));
    CHECK(res.evals[0].f1 == doctest::Approx(static_cast<Scalar>(hits) / total).epsilon(1e-12));
    CHECK(res.evals[0].entropy == doctest::Approx(ent / total).epsilon(1e-12));

    // identical params at both steps: every metric ties, earliest step wins
    const std::vector<ParityCheckpoint> dup{{100, p1}, {200, p1}};
    const CheckpointEvalResult tied = eval_checkpoints(cfg, dup, iid, ood);
    CHECK(tied.iid.best_f1_step == 100);
    CHECK(tied.iid.best_l_step == 100);
    CHECK(tied.ood.best_f1_step == 100);
    CHECK(tied.iid.r_degenerate); // zero variance across checkpoints

    const std::vector<ParityCheckpoint> one{{100, p1}};
    const CheckpointEvalResult single = eval_checkpoints(cfg, one, iid, ood);
    CHECK(single.iid.r_degenerate); // one point, no correlation

    CHECK_THROWS_AS(eval_checkpoints(cfg, {}, iid, ood), std::invalid_argument);
    CHECK_THROWS_AS(eval_checkpoints(cfg, cks, {}, ood), std::invalid_argument);
    CHECK_THROWS_AS(eval_checkpoints(cfg, cks, iid, {}), std::invalid_argument);
}

TEST_CASE("final_only scoring equals all_positions on length-1 inputs") {
    const ModelConfig cfg = tiny_config();
    Rng rng(43);
    const TransformerParams p = TransformerParams::init(cfg, rng);
    const std::vector<ParityCheckpoint> cks{{1, p}};

    Rng data_rng(44);
    const auto ones = sample_parity_dataset(1, 1, 5, data_rng);
    const auto a = eval_checkpoints(cfg, cks, ones, ones, ParityScoring::all_positions);
    const auto f = eval_checkpoints(cfg, cks, ones, ones, ParityScoring::final_only);
    CHECK(a.evals[0].L == f.evals[0].L);
    CHECK(a.evals[0].f1 == f.evals[0].f1);
    CHECK(a.evals[0].entropy == f.evals[0].entropy);

    // on longer inputs final_only scores one row per instance
    const auto longer = sample_parity_dataset(4, 4, 3, data_rng);
    const auto fl = eval_checkpoints(cfg, cks, longer, longer, ParityScoring::final_only);
    CHECK(std::isfinite(fl.evals[0].L));
}
