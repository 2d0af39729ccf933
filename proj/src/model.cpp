#include "pplx/model.hpp"

#include <cmath>

namespace pplx {

void ModelConfig::validate() const {
    if (vocab_size < 2) throw std::invalid_argument("ModelConfig: vocab_size must be at least 2");
    if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || max_context < 1) {
        throw std::invalid_argument("ModelConfig: sizes must be positive");
    }
    if (d_model % n_heads != 0) {
        throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model) +
                                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (d_head() % 2 != 0) {
        throw std::invalid_argument("ModelConfig: head dimension " + std::to_string(d_head()) +
                                    " must be even for rotary positions");
    }
    if (rope_base <= 0) throw std::invalid_argument("ModelConfig: rope_base must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"vocab_size", c.vocab_size}, {"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},       {"d_model", c.d_model},
                       {"d_ff", c.d_ff},             {"max_context", c.max_context},
                       {"rope_base", c.rope_base}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("n_layers").get_to(c.n_layers);
    j.at("n_heads").get_to(c.n_heads);
    j.at("d_model").get_to(c.d_model);
    j.at("d_ff").get_to(c.d_ff);
    j.at("max_context").get_to(c.max_context);
    j.at("rope_base").get_to(c.rope_base);
    c.validate();
}

// ---- parameters ------------------------------------------------------------

namespace {

Tensor normal_init(std::vector<Index> shape, Scalar std_dev, Rng& rng) {
    Index n = 1;
    for (Index d : shape) n *= d;
    Vec v(n);
    for (Index i = 0; i < n; ++i) v[i] = std_dev * rng.normal();
    return Tensor::from_data(std::move(shape), std::move(v));
}

} // namespace

TransformerParams TransformerParams::init(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    const Index d = cfg.d_model, ff = cfg.d_ff, v = cfg.vocab_size;
    const Scalar base_std = 0.02;
    const Scalar out_std = base_std / std::sqrt(2.0 * cfg.n_layers);

    TransformerParams p;
    p.tok_embed = normal_init({v, d}, base_std, rng);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (LayerParams& l : p.layers) {
        l.attn_gain = Tensor::full({d}, 1.0);
        l.wq = normal_init({d, d}, base_std, rng);
        l.wk = normal_init({d, d}, base_std, rng);
        l.wv = normal_init({d, d}, base_std, rng);
        l.wo = normal_init({d, d}, out_std, rng);
        l.mlp_gain = Tensor::full({d}, 1.0);
        l.w1 = normal_init({d, ff}, base_std, rng);
        l.w2 = normal_init({ff, d}, out_std, rng);
    }
    p.final_gain = Tensor::full({d}, 1.0);
    p.unembed = normal_init({d, v}, base_std, rng);
    return p;
}

std::vector<std::string> TransformerParams::tensor_names(const ModelConfig& cfg) {
    std::vector<std::string> names;
    names.push_back("tok_embed");
    for (int l = 0; l < cfg.n_layers; ++l) {
        const std::string pre = "layer" + std::to_string(l) + ".";
        for (const char* f : {"attn_gain", "wq", "wk", "wv", "wo", "mlp_gain", "w1", "w2"}) {
            names.push_back(pre + f);
        }
    }
    names.push_back("final_gain");
    names.push_back("unembed");
    return names;
}

std::vector<Tensor> TransformerParams::flat() const {
    std::vector<Tensor> out;
    out.push_back(tok_embed);
    for (const LayerParams& l : layers) {
        out.push_back(l.attn_gain);
        out.push_back(l.wq);
        out.push_back(l.wk);
        out.push_back(l.wv);
        out.push_back(l.wo);
        out.push_back(l.mlp_gain);
        out.push_back(l.w1);
        out.push_back(l.w2);
    }
    out.push_back(final_gain);
    out.push_back(unembed);
    return out;
}

TransformerParams TransformerParams::from_flat(const ModelConfig& cfg, const std::vector<Tensor>& tensors) {
    const size_t expected = 2 + 8 * static_cast<size_t>(cfg.n_layers) + 1;
    if (tensors.size() != expected) {
        throw std::invalid_argument("TransformerParams: expected " + std::to_string(expected) +
                                    " tensors, got " + std::to_string(tensors.size()));
    }
    TransformerParams p;
    size_t i = 0;
    p.tok_embed = tensors[i++];
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (LayerParams& l : p.layers) {
        l.attn_gain = tensors[i++];
        l.wq = tensors[i++];
        l.wk = tensors[i++];
        l.wv = tensors[i++];
        l.wo = tensors[i++];
        l.mlp_gain = tensors[i++];
        l.w1 = tensors[i++];
        l.w2 = tensors[i++];
    }
    p.final_gain = tensors[i++];
    p.unembed = tensors[i++];
    p.validate(cfg);
    return p;
}

void TransformerParams::validate(const ModelConfig& cfg) const {
    cfg.validate();
    const Index d = cfg.d_model, ff = cfg.d_ff, v = cfg.vocab_size;
    auto expect = [](const Tensor& t, std::vector<Index> shape, const char* name) {
        if (t.shape() != shape) {
            throw std::invalid_argument(std::string("TransformerParams: ") + name + " has shape " +
                                        shape_str(t.shape()) + ", expected " + shape_str(shape));
        }
    };
    expect(tok_embed, {v, d}, "tok_embed");
    if (layers.size() != static_cast<size_t>(cfg.n_layers)) {
        throw std::invalid_argument("TransformerParams: layer count mismatch");
    }
    for (const LayerParams& l : layers) {
        expect(l.attn_gain, {d}, "attn_gain");
        expect(l.wq, {d, d}, "wq");
        expect(l.wk, {d, d}, "wk");
        expect(l.wv, {d, d}, "wv");
        expect(l.wo, {d, d}, "wo");
        expect(l.mlp_gain, {d}, "mlp_gain");
        expect(l.w1, {d, ff}, "w1");
        expect(l.w2, {ff, d}, "w2");
    }
    expect(final_gain, {d}, "final_gain");
    expect(unembed, {d, v}, "unembed");
}

TransformerParams attach(const TransformerParams& p, Tape& tape) {
    std::vector<Tensor> leaves;
    for (const Tensor& t : p.flat()) leaves.push_back(tape.leaf(t));
    TransformerParams out;
    size_t i = 0;
    out.tok_embed = leaves[i++];
    out.layers.resize(p.layers.size());
    for (LayerParams& l : out.layers) {
        l.attn_gain = leaves[i++];
        l.wq = leaves[i++];
        l.wk = leaves[i++];
        l.wv = leaves[i++];
        l.wo = leaves[i++];
        l.mlp_gain = leaves[i++];
        l.w1 = leaves[i++];
        l.w2 = leaves[i++];
    }
    out.final_gain = leaves[i++];
    out.unembed = leaves[i++];
    return out;
}

// ---- position and attention ops ---------------------------------------------

namespace {

void check_stacked(const Tensor& x, Index n_seqs, Index seq_len, const char* op) {
    if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": input must be rank 2");
    if (n_seqs < 1 || seq_len < 1 || x.rows() != n_seqs * seq_len) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(x.rows()) + " rows do not stack as " +
                                    std::to_string(n_seqs) + " sequences of length " + std::to_string(seq_len));
    }
}

// direction +1 rotates forward, -1 applies the transpose (for gradients)
Vec rope_apply(const Vec& flat, Index rows, Index dh, Index seq_len, Scalar rope_base, int direction) {
    const Index pairs = dh / 2;
    std::vector<Scalar> inv_freq(static_cast<size_t>(pairs));
    for (Index i = 0; i < pairs; ++i) {
        inv_freq[static_cast<size_t>(i)] =
            std::pow(rope_base, -2.0 * static_cast<Scalar>(i) / static_cast<Scalar>(dh));
    }
    Vec out(rows * dh);
    ConstMatMap xm(flat.data(), rows, dh);
    MatMap om(out.data(), rows, dh);
    for (Index r = 0; r < rows; ++r) {
        const Scalar pos = static_cast<Scalar>(r % seq_len);
        for (Index i = 0; i < pairs; ++i) {
            const Scalar angle = pos * inv_freq[static_cast<size_t>(i)];
            const Scalar c = std::cos(angle);
            const Scalar s = direction > 0 ? std::sin(angle) : -std::sin(angle);
            const Scalar a = xm(r, 2 * i), b = xm(r, 2 * i + 1);
            om(r, 2 * i) = c * a - s * b;
            om(r, 2 * i + 1) = s * a + c * b;
        }
    }
    return out;
}

} // namespace

Tensor rope_rotate(const Tensor& x, Index n_seqs, Index seq_len, Scalar rope_base) {
    check_stacked(x, n_seqs, seq_len, "rope_rotate");
    if (x.cols() % 2 != 0) {
        throw std::invalid_argument("rope_rotate: head dimension " + std::to_string(x.cols()) + " is odd");
    }
    if (rope_base <= 0) throw std::invalid_argument("rope_rotate: rope_base must be positive");
    const Index rows = x.rows(), dh = x.cols();
    Vec out = rope_apply(x.flat(), rows, dh, seq_len, rope_base, +1);

    const int xn = x.node();
    Tape* tape = x.on_tape() ? x.tape() : nullptr;
    auto make = [&](Vec v) {
        if (!tape) return Tensor::from_data({rows, dh}, std::move(v));
        return tape->record({rows, dh}, std::move(v), [xn, rows, dh, seq_len, rope_base](Tape& tp, const Vec& g) {
            if (xn < 0) return;
            tp.accumulate(xn, rope_apply(g, rows, dh, seq_len, rope_base, -1));
        });
    };
    if (!out.allFinite()) throw std::runtime_error("non-finite values produced by rope_rotate");
    return make(std::move(out));
}

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, Index n_seqs,
                        Index seq_len, Scalar scale) {
    check_stacked(q, n_seqs, seq_len, "causal_attention");
    if (q.shape() != k.shape() || q.shape() != v.shape()) {
        throw std::invalid_argument("causal_attention: q/k/v shapes differ");
    }
    const Index rows = q.rows(), dh = q.cols();

    // probs: per global row, the attention weights over positions 0..pos
    auto probs = std::make_shared<Mat>(Mat::Zero(rows, seq_len));
    Vec out(rows * dh);
    MatMap om(out.data(), rows, dh);
    ConstMatMap qm = q.mat(), km = k.mat(), vm = v.mat();
    Vec scores(seq_len);
    for (Index b = 0; b < n_seqs; ++b) {
        const Index base = b * seq_len;
        for (Index i = 0; i < seq_len; ++i) {
            Scalar mx = -std::numeric_limits<Scalar>::infinity();
            for (Index j = 0; j <= i; ++j) {
                scores[j] = scale * qm.row(base + i).dot(km.row(base + j));
                if (scores[j] > mx) mx = scores[j];
            }
            Scalar z = 0;
            for (Index j = 0; j <= i; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                z += scores[j];
            }
            om.row(base + i).setZero();
            for (Index j = 0; j <= i; ++j) {
                const Scalar p = scores[j] / z;
                (*probs)(base + i, j) = p;
                om.row(base + i) += p * vm.row(base + j);
            }
        }
    }
    if (!out.allFinite()) throw std::runtime_error("non-finite values produced by causal_attention");

    Tape* tape = nullptr;
    for (const Tensor* t : {&q, &k, &v}) {
        if (!t->on_tape()) continue;
        if (tape && tape != t->tape()) throw std::logic_error("operation mixes tensors from different tapes");
        tape = t->tape();
    }
    if (!tape) return Tensor::from_data({rows, dh}, std::move(out));

    const int qn = q.node(), kn = k.node(), vn = v.node();
    auto qd = q.detached(), kd = k.detached(), vd = v.detached();
    return tape->record(
        {rows, dh}, std::move(out),
        [qn, kn, vn, qd, kd, vd, probs, n_seqs, seq_len, scale, rows, dh](Tape& tp, const Vec& g) {
            ConstMatMap gm(g.data(), rows, dh);
            ConstMatMap qm = qd.mat(), km = kd.mat(), vm = vd.mat();
            Vec dq = Vec::Zero(rows * dh), dk = Vec::Zero(rows * dh), dv = Vec::Zero(rows * dh);
            MatMap dqm(dq.data(), rows, dh), dkm(dk.data(), rows, dh), dvm(dv.data(), rows, dh);
            Vec dp(seq_len), ds(seq_len);
            for (Index b = 0; b < n_seqs; ++b) {
                const Index base = b * seq_len;
                for (Index i = 0; i < seq_len; ++i) {
                    Scalar inner = 0;
                    for (Index j = 0; j <= i; ++j) {
                        dp[j] = gm.row(base + i).dot(vm.row(base + j));
                        inner += dp[j] * (*probs)(base + i, j);
                    }
                    for (Index j = 0; j <= i; ++j) {
                        const Scalar p = (*probs)(base + i, j);
                        ds[j] = p * (dp[j] - inner);
                        dvm.row(base + j) += p * gm.row(base + i);
                        dqm.row(base + i) += scale * ds[j] * km.row(base + j);
                        dkm.row(base + j) += scale * ds[j] * qm.row(base + i);
                    }
                }
            }
            if (qn >= 0) tp.accumulate(qn, dq);
            if (kn >= 0) tp.accumulate(kn, dk);
            if (vn >= 0) tp.accumulate(vn, dv);
        });
}

// ---- forward ---------------------------------------------------------------

Tensor forward(const TransformerParams& p, const ModelConfig& cfg, std::span<const int> tokens,
               Index n_seqs) {
    if (n_seqs < 1 || tokens.empty() || static_cast<Index>(tokens.size()) % n_seqs != 0) {
        throw std::invalid_argument("forward: " + std::to_string(tokens.size()) +
                                    " tokens do not stack as " + std::to_string(n_seqs) + " sequences");
    }
    const Index seq_len = static_cast<Index>(tokens.size()) / n_seqs;
    if (seq_len > cfg.max_context) {
        throw std::length_error("forward: sequence length " + std::to_string(seq_len) + " exceeds max_context " +
                                std::to_string(cfg.max_context));
    }
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab_size) {
            throw std::out_of_range("forward: symbol " + std::to_string(t) + " outside vocabulary of size " +
                                    std::to_string(cfg.vocab_size));
        }
    }

    const Index dh = cfg.d_head();
    const Scalar att_scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));

    Tensor x = gather_rows(p.tok_embed, tokens);
    for (const LayerParams& l : p.layers) {
        Tensor a = scale_columns(rms_norm(x), l.attn_gain);
        Tensor qall = matmul(a, l.wq);
        Tensor kall = matmul(a, l.wk);
        Tensor vall = matmul(a, l.wv);
        std::vector<Tensor> heads;
        heads.reserve(static_cast<size_t>(cfg.n_heads));
        for (int h = 0; h < cfg.n_heads; ++h) {
            Tensor qh = rope_rotate(slice_cols(qall, h * dh, dh), n_seqs, seq_len, cfg.rope_base);
            Tensor kh = rope_rotate(slice_cols(kall, h * dh, dh), n_seqs, seq_len, cfg.rope_base);
            Tensor vh = slice_cols(vall, h * dh, dh);
            heads.push_back(causal_attention(qh, kh, vh, n_seqs, seq_len, att_scale));
        }
        x = add(x, matmul(concat_cols(heads), l.wo));
        Tensor m = scale_columns(rms_norm(x), l.mlp_gain);
        x = add(x, matmul(gelu(matmul(m, l.w1)), l.w2));
    }
    Tensor top = scale_columns(rms_norm(x), p.final_gain);
    return row_softmax(matmul(top, p.unembed));
}

// ---- sampling and decoding ---------------------------------------------------

int greedy_next(const Tensor& dist) {
    if (dist.numel() < 2) throw std::invalid_argument("greedy_next: need probabilities for symbols 0 and 1");
    const Scalar p0 = dist.flat()[0], p1 = dist.flat()[1];
    return p1 > p0 ? 1 : 0;
}

int sample_with_temperature(const Tensor& dist, Scalar theta, Rng& rng) {
    if (theta <= 0) throw std::invalid_argument("sample_with_temperature: temperature must be positive");
    if (dist.numel() < 2) {
        throw std::invalid_argument("sample_with_temperature: need probabilities for symbols 0 and 1");
    }
    const Scalar p0 = dist.flat()[0], p1 = dist.flat()[1];
    if (p0 <= 0 || p1 <= 0) throw std::domain_error("sample_with_temperature: zero probability");
    // p^(1/theta) renormalized over {0,1}, in log space for stability
    const Scalar d = (std::log(p1) - std::log(p0)) / theta;
    const Scalar p1_eff = 1.0 / (1.0 + std::exp(-d));
    return rng.uniform() < p1_eff ? 1 : 0;
}

namespace {

void check_decode_fits(const ModelConfig& cfg, size_t n) {
    if (static_cast<Index>(2 * n + 1) > cfg.max_context) {
        throw std::length_error("copy decode: 2n+1 = " + std::to_string(2 * n + 1) + " exceeds max_context " +
                                std::to_string(cfg.max_context));
    }
}

} // namespace

DecodeTrace greedy_copy_decode_naive(const TransformerParams& p, const ModelConfig& cfg,
                                     const BitString& bits) {
    const size_t n = bits.size();
    check_decode_fits(cfg, n);
    DecodeTrace trace;
    trace.dist.resize(static_cast<Index>(n), cfg.vocab_size);
    if (n == 0) return trace;

    std::vector<int> ctx = bits.bits();
    ctx.push_back(kStopToken);
    for (size_t i = 0; i < n; ++i) {
        Tensor probs = forward(p, cfg, ctx);
        const Index last = static_cast<Index>(ctx.size()) - 1;
        for (Index c = 0; c < cfg.vocab_size; ++c) trace.dist(static_cast<Index>(i), c) = probs.at(last, c);
        Tensor row = Tensor::from_data({cfg.vocab_size}, trace.dist.row(static_cast<Index>(i)).transpose());
        const int o = greedy_next(row);
        trace.emitted.push_back(o);
        trace.target_prob.push_back(trace.dist(static_cast<Index>(i), bits[i]));
        ctx.push_back(o);
    }
    return trace;
}

DecodeTrace greedy_copy_decode(const TransformerParams& p, const ModelConfig& cfg, const BitString& bits) {
    const size_t n = bits.size();
    check_decode_fits(cfg, n);
    DecodeTrace trace;
    trace.dist.resize(static_cast<Index>(n), cfg.vocab_size);
    if (n == 0) return trace;

    // Guess a completion, verify all n greedy steps with one whole-sequence
    // forward, and repair the first mismatch. Rows before the mismatch are
    // bitwise unchanged on the next pass (causality + row-stable kernels), so
    // the verified prefix only grows and the loop always terminates.
    std::vector<int> guess = bits.bits();
    std::vector<int> ctx(2 * n);
    for (size_t pass = 0; pass <= n; ++pass) {
        std::copy(bits.bits().begin(), bits.bits().end(), ctx.begin());
        ctx[n] = kStopToken;
        std::copy(guess.begin(), guess.end() - 1, ctx.begin() + static_cast<long>(n) + 1);
        Tensor probs = forward(p, cfg, ctx);

        long mismatch = -1;
        for (size_t i = 0; i < n; ++i) {
            Tensor row = slice_rows(probs, static_cast<Index>(n + i), 1);
            const int o = greedy_next(row);
            if (o != guess[i]) {
                guess[i] = o;
                mismatch = static_cast<long>(i);
                break;
            }
        }
        if (mismatch >= 0) continue;

        for (size_t i = 0; i < n; ++i) {
            for (Index c = 0; c < cfg.vocab_size; ++c) {
                trace.dist(static_cast<Index>(i), c) = probs.at(static_cast<Index>(n + i), c);
            }
            trace.emitted.push_back(guess[i]);
            trace.target_prob.push_back(trace.dist(static_cast<Index>(i), bits[i]));
        }
        return trace;
    }
    throw std::logic_error("greedy_copy_decode: verification did not converge");
}

} // namespace pplx
