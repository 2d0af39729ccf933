#include "pplx/tensor.hpp"

#include <cmath>

namespace pplx {

namespace {

Index shape_numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) {
        if (d <= 0) throw std::invalid_argument("Tensor: shape entries must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

void check_finite(const Vec& v, const char* op) {
    if (!v.allFinite()) {
        throw std::runtime_error(std::string("non-finite values produced by ") + op);
    }
}

// Resolves the tape an op result lives on; throws if inputs mix tapes.
Tape* joint_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* t = nullptr;
    for (const Tensor* x : inputs) {
        if (!x->on_tape()) continue;
        if (t && t != x->tape()) {
            throw std::logic_error("operation mixes tensors from different tapes");
        }
        t = x->tape();
    }
    return t;
}

Tensor make_result(Tape* tape, std::vector<Index> shape, Vec value,
                   std::function<void(Tape&, const Vec&)> backward, const char* op) {
    check_finite(value, op);
    if (!tape) {
        return Tensor::from_data(std::move(shape), std::move(value));
    }
    return tape->record(std::move(shape), std::move(value), std::move(backward));
}

} // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::from_data(std::vector<Index> shape, Vec data) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
    check_finite(data, "Tensor construction");
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::make_shared<const Vec>(std::move(data));
    return t;
}

Tensor Tensor::zeros(std::vector<Index> shape) {
    const Index n = shape_numel(shape);
    return from_data(std::move(shape), Vec::Zero(n));
}

Tensor Tensor::full(std::vector<Index> shape, Scalar v) {
    const Index n = shape_numel(shape);
    return from_data(std::move(shape), Vec::Constant(n, v));
}

Tensor Tensor::scalar(Scalar v) {
    return from_data({}, Vec::Constant(1, v));
}

Tensor Tensor::from_matrix(const Mat& m) {
    Vec flat(m.size());
    MatMap(flat.data(), m.rows(), m.cols()) = m;
    return from_data({m.rows(), m.cols()}, std::move(flat));
}

Tensor Tensor::from_row(const std::vector<Scalar>& v) {
    Vec flat = Eigen::Map<const Vec>(v.data(), static_cast<Index>(v.size()));
    return from_data({static_cast<Index>(v.size())}, std::move(flat));
}

Scalar Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::value: tensor is not a scalar, shape " + shape_str(shape_));
    return (*data_)[0];
}

Tensor Tensor::detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = data_;
    return t;
}

// ---- Tape -------------------------------------------------------------------

Tensor Tape::leaf(const Tensor& value) {
    if (!value.data_) throw std::invalid_argument("Tape::leaf: empty tensor");
    Tensor t;
    t.shape_ = value.shape_;
    t.data_ = value.data_;
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{value.shape_, nullptr, true});
    return t;
}

Tensor Tape::record(std::vector<Index> shape, Vec value,
                    std::function<void(Tape&, const Vec&)> backward) {
    Tensor t;
    t.data_ = std::make_shared<const Vec>(std::move(value));
    t.shape_ = std::move(shape);
    t.tape_ = this;
    t.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{t.shape_, std::move(backward), false});
    return t;
}

GradMap Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("Tape::backward: tape already differentiated");
    if (loss.tape_ != this) throw std::logic_error("Tape::backward: loss is not on this tape");
    if (!loss.is_scalar()) {
        throw std::invalid_argument("Tape::backward: loss must be a scalar, shape " + shape_str(loss.shape_));
    }
    consumed_ = true;

    grads_.assign(nodes_.size(), Vec());
    grads_[static_cast<size_t>(loss.node_)] = Vec::Ones(1);

    for (int id = loss.node_; id >= 0; --id) {
        const Node& n = nodes_[static_cast<size_t>(id)];
        Vec& g = grads_[static_cast<size_t>(id)];
        if (g.size() == 0 || !n.backward) continue;
        n.backward(*this, g);
    }

    GradMap out;
    for (size_t id = 0; id < nodes_.size(); ++id) {
        const Node& n = nodes_[id];
        if (!n.is_leaf) continue;
        Vec g = grads_[id].size() ? grads_[id] : Vec::Zero(shape_numel(n.shape));
        check_finite(g, "backward");
        out.emplace(static_cast<int>(id), Tensor::from_data(n.shape, std::move(g)));
    }
    grads_.clear();
    return out;
}

// ---- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                                    shape_str(b.shape()));
    }
    const Index m = a.rows(), k = a.cols(), n = b.cols();
    Vec out(m * n);
    // Row-by-row so each output row is bitwise independent of the total row
    // count: Eigen's gemm picks different kernels (and summation orders) per
    // size, which would break the model's bitwise-causality guarantee.
    MatMap om(out.data(), m, n);
    for (Index i = 0; i < m; ++i) om.row(i).noalias() = a.mat().row(i) * b.mat();

    const int an = a.node(), bn = b.node();
    auto ad = a.detached(), bd = b.detached();
    return make_result(
        joint_tape({&a, &b}), {m, n}, std::move(out),
        [an, bn, ad, bd, m, k, n](Tape& tape, const Vec& g) {
            ConstMatMap gm(g.data(), m, n);
            if (an >= 0) {
                Vec da(m * k);
                MatMap(da.data(), m, k).noalias() = gm * bd.mat().transpose();
                tape.accumulate(an, da);
            }
            if (bn >= 0) {
                Vec db(k * n);
                MatMap(db.data(), k, n).noalias() = ad.mat().transpose() * gm;
                tape.accumulate(bn, db);
            }
        },
        "matmul");
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Vec out = a.flat() + b.flat();
    const int an = a.node(), bn = b.node();
    return make_result(
        joint_tape({&a, &b}), a.shape(), std::move(out),
        [an, bn](Tape& tape, const Vec& g) {
            if (an >= 0) tape.accumulate(an, g);
            if (bn >= 0) tape.accumulate(bn, g);
        },
        "add");
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("hadamard: shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
    Vec out = a.flat().cwiseProduct(b.flat());
    const int an = a.node(), bn = b.node();
    auto ad = a.detached(), bd = b.detached();
    return make_result(
        joint_tape({&a, &b}), a.shape(), std::move(out),
        [an, bn, ad, bd](Tape& tape, const Vec& g) {
            if (an >= 0) tape.accumulate(an, g.cwiseProduct(bd.flat()));
            if (bn >= 0) tape.accumulate(bn, g.cwiseProduct(ad.flat()));
        },
        "hadamard");
}

Tensor scale(const Tensor& a, Scalar s) {
    Vec out = a.flat() * s;
    const int an = a.node();
    return make_result(
        joint_tape({&a}), a.shape(), std::move(out),
        [an, s](Tape& tape, const Vec& g) {
            if (an >= 0) tape.accumulate(an, g * s);
        },
        "scale");
}

Tensor gather_rows(const Tensor& table, std::span<const int> idx) {
    if (table.rank() != 2) throw std::invalid_argument("gather_rows: table must be rank 2");
    const Index v = table.rows(), d = table.cols(), n = static_cast<Index>(idx.size());
    for (int i : idx) {
        if (i < 0 || i >= v) throw std::out_of_range("gather_rows: index " + std::to_string(i) + " out of [0," +
                                                     std::to_string(v) + ")");
    }
    Vec out(n * d);
    MatMap om(out.data(), n, d);
    for (Index r = 0; r < n; ++r) om.row(r) = table.mat().row(idx[static_cast<size_t>(r)]);

    const int tn = table.node();
    std::vector<int> ids(idx.begin(), idx.end());
    return make_result(
        joint_tape({&table}), {n, d}, std::move(out),
        [tn, ids, v, d, n](Tape& tape, const Vec& g) {
            if (tn < 0) return;
            Vec dt = Vec::Zero(v * d);
            MatMap dtm(dt.data(), v, d);
            ConstMatMap gm(g.data(), n, d);
            for (Index r = 0; r < n; ++r) dtm.row(ids[static_cast<size_t>(r)]) += gm.row(r);
            tape.accumulate(tn, dt);
        },
        "gather_rows");
}

Tensor slice_rows(const Tensor& a, Index begin, Index count) {
    if (a.rank() != 2) throw std::invalid_argument("slice_rows: input must be rank 2");
    if (begin < 0 || count < 0 || begin + count > a.rows()) {
        throw std::out_of_range("slice_rows: range [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") out of " + std::to_string(a.rows()) + " rows");
    }
    const Index c = a.cols(), r = a.rows();
    Vec out(count * c);
    MatMap(out.data(), count, c) = a.mat().middleRows(begin, count);

    const int an = a.node();
    return make_result(
        joint_tape({&a}), {count, c}, std::move(out),
        [an, begin, count, r, c](Tape& tape, const Vec& g) {
            if (an < 0) return;
            Vec da = Vec::Zero(r * c);
            MatMap(da.data(), r, c).middleRows(begin, count) = ConstMatMap(g.data(), count, c);
            tape.accumulate(an, da);
        },
        "slice_rows");
}

Tensor slice_cols(const Tensor& a, Index begin, Index count) {
    if (a.rank() != 2) throw std::invalid_argument("slice_cols: input must be rank 2");
    if (begin < 0 || count < 0 || begin + count > a.cols()) {
        throw std::out_of_range("slice_cols: range [" + std::to_string(begin) + "," +
                                std::to_string(begin + count) + ") out of " + std::to_string(a.cols()) + " cols");
    }
    const Index r = a.rows(), c = a.cols();
    Vec out(r * count);
    MatMap(out.data(), r, count) = a.mat().middleCols(begin, count);

    const int an = a.node();
    return make_result(
        joint_tape({&a}), {r, count}, std::move(out),
        [an, begin, count, r, c](Tape& tape, const Vec& g) {
            if (an < 0) return;
            Vec da = Vec::Zero(r * c);
            MatMap(da.data(), r, c).middleCols(begin, count) = ConstMatMap(g.data(), r, count);
            tape.accumulate(an, da);
        },
        "slice_cols");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    const Index r = parts[0].rows();
    Index total = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 2 || p.rows() != r) {
            throw std::invalid_argument("concat_cols: row mismatch, " + shape_str(parts[0].shape()) + " vs " +
                                        shape_str(p.shape()));
        }
        total += p.cols();
    }
    Vec out(r * total);
    MatMap om(out.data(), r, total);
    Index off = 0;
    for (const Tensor& p : parts) {
        om.middleCols(off, p.cols()) = p.mat();
        off += p.cols();
    }

    Tape* tape = nullptr;
    for (const Tensor& p : parts) {
        if (!p.on_tape()) continue;
        if (tape && tape != p.tape()) throw std::logic_error("operation mixes tensors from different tapes");
        tape = p.tape();
    }
    std::vector<int> nodes;
    std::vector<Index> widths;
    for (const Tensor& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.cols());
    }
    return make_result(
        tape, {r, total}, std::move(out),
        [nodes, widths, r, total](Tape& tp, const Vec& g) {
            ConstMatMap gm(g.data(), r, total);
            Index off = 0;
            for (size_t i = 0; i < nodes.size(); ++i) {
                if (nodes[i] >= 0) {
                    Vec dp(r * widths[i]);
                    MatMap(dp.data(), r, widths[i]) = gm.middleCols(off, widths[i]);
                    tp.accumulate(nodes[i], dp);
                }
                off += widths[i];
            }
        },
        "concat_cols");
}

Tensor row_softmax(const Tensor& logits) {
    if (logits.rank() == 0 || logits.cols() < 1) {
        throw std::invalid_argument("row_softmax: need at least one column");
    }
    const Index r = logits.rows(), c = logits.cols();
    Vec out(r * c);
    MatMap om(out.data(), r, c);
    ConstMatMap lm = logits.mat();
    for (Index i = 0; i < r; ++i) {
        const Scalar mx = lm.row(i).maxCoeff();
        om.row(i) = (lm.row(i).array() - mx).exp();
        om.row(i) /= om.row(i).sum();
    }

    const int ln = logits.node();
    std::shared_ptr<const Vec> saved = std::make_shared<const Vec>(out);
    return make_result(
        joint_tape({&logits}), logits.shape(), std::move(out),
        [ln, saved, r, c](Tape& tape, const Vec& g) {
            if (ln < 0) return;
            ConstMatMap pm(saved->data(), r, c);
            ConstMatMap gm(g.data(), r, c);
            Vec dl(r * c);
            MatMap dlm(dl.data(), r, c);
            for (Index i = 0; i < r; ++i) {
                const Scalar dot = gm.row(i).cwiseProduct(pm.row(i)).sum();
                dlm.row(i) = pm.row(i).array() * (gm.row(i).array() - dot);
            }
            tape.accumulate(ln, dl);
        },
        "row_softmax");
}

Tensor rms_norm(const Tensor& x, Scalar eps) {
    if (x.rank() != 2) throw std::invalid_argument("rms_norm: input must be rank 2");
    const Index r = x.rows(), c = x.cols();
    Vec out(r * c);
    Vec inv_rms(r);
    MatMap om(out.data(), r, c);
    ConstMatMap xm = x.mat();
    for (Index i = 0; i < r; ++i) {
        const Scalar ms = xm.row(i).squaredNorm() / static_cast<Scalar>(c);
        inv_rms[i] = 1.0 / std::sqrt(ms + eps);
        om.row(i) = xm.row(i) * inv_rms[i];
    }

    const int xn = x.node();
    auto saved_y = std::make_shared<const Vec>(out);
    auto saved_r = std::make_shared<const Vec>(std::move(inv_rms));
    return make_result(
        joint_tape({&x}), x.shape(), std::move(out),
        [xn, saved_y, saved_r, r, c](Tape& tape, const Vec& g) {
            if (xn < 0) return;
            ConstMatMap ym(saved_y->data(), r, c);
            ConstMatMap gm(g.data(), r, c);
            Vec dx(r * c);
            MatMap dxm(dx.data(), r, c);
            for (Index i = 0; i < r; ++i) {
                const Scalar mean_gy = gm.row(i).cwiseProduct(ym.row(i)).sum() / static_cast<Scalar>(c);
                dxm.row(i) = (gm.row(i) - ym.row(i) * mean_gy) * (*saved_r)[i];
            }
            tape.accumulate(xn, dx);
        },
        "rms_norm");
}

Tensor scale_columns(const Tensor& x, const Tensor& g) {
    if (x.rank() != 2 || g.rank() != 1 || g.cols() != x.cols()) {
        throw std::invalid_argument("scale_columns: expected [r x c] and [c], got " + shape_str(x.shape()) +
                                    " and " + shape_str(g.shape()));
    }
    const Index r = x.rows(), c = x.cols();
    Vec out(r * c);
    MatMap om(out.data(), r, c);
    om = x.mat().array().rowwise() * g.flat().transpose().array();

    const int xn = x.node(), gn = g.node();
    auto xd = x.detached(), gd = g.detached();
    return make_result(
        joint_tape({&x, &g}), x.shape(), std::move(out),
        [xn, gn, xd, gd, r, c](Tape& tape, const Vec& dy) {
            ConstMatMap dym(dy.data(), r, c);
            if (xn >= 0) {
                Vec dx(r * c);
                MatMap(dx.data(), r, c) = dym.array().rowwise() * gd.flat().transpose().array();
                tape.accumulate(xn, dx);
            }
            if (gn >= 0) {
                Vec dg = dym.cwiseProduct(xd.mat()).colwise().sum().transpose();
                tape.accumulate(gn, dg);
            }
        },
        "scale_columns");
}

Tensor gelu(const Tensor& x) {
    const Index n = x.numel();
    Vec out(n);
    const Vec& xv = x.flat();
    constexpr Scalar inv_sqrt2 = 0.70710678118654752440;
    for (Index i = 0; i < n; ++i) {
        out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * inv_sqrt2));
    }

    const int xn = x.node();
    auto xd = x.detached();
    return make_result(
        joint_tape({&x}), x.shape(), std::move(out),
        [xn, xd, n](Tape& tape, const Vec& g) {
            if (xn < 0) return;
            constexpr Scalar inv_sqrt2 = 0.70710678118654752440;
            constexpr Scalar inv_sqrt2pi = 0.39894228040143267794;
            const Vec& xv = xd.flat();
            Vec dx(n);
            for (Index i = 0; i < n; ++i) {
                const Scalar phi = 0.5 * (1.0 + std::erf(xv[i] * inv_sqrt2));
                const Scalar pdf = inv_sqrt2pi * std::exp(-0.5 * xv[i] * xv[i]);
                dx[i] = g[i] * (phi + xv[i] * pdf);
            }
            tape.accumulate(xn, dx);
        },
        "gelu");
}

Tensor cross_entropy(const Tensor& probs, std::span<const int> targets, Scalar eps_floor) {
    if (probs.rank() != 2) throw std::invalid_argument("cross_entropy: probabilities must be rank 2");
    const Index n = probs.rows(), v = probs.cols();
    if (static_cast<Index>(targets.size()) != n) {
        throw std::invalid_argument("cross_entropy: got " + std::to_string(targets.size()) + " targets for " +
                                    std::to_string(n) + " rows");
    }
    if (n == 0) throw std::invalid_argument("cross_entropy: empty batch");
    for (int t : targets) {
        if (t < 0 || t >= v) throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " out of [0," +
                                                     std::to_string(v) + ")");
    }
    ConstMatMap pm = probs.mat();
    Scalar acc = 0.0;
    for (Index i = 0; i < n; ++i) {
        acc -= std::log(std::max(pm(i, targets[static_cast<size_t>(i)]), eps_floor));
    }
    Vec out = Vec::Constant(1, acc / static_cast<Scalar>(n));

    const int pn = probs.node();
    auto pd = probs.detached();
    std::vector<int> tg(targets.begin(), targets.end());
    return make_result(
        joint_tape({&probs}), {}, std::move(out),
        [pn, pd, tg, n, v, eps_floor](Tape& tape, const Vec& g) {
            if (pn < 0) return;
            const Scalar g0 = g[0];
            Vec dp = Vec::Zero(n * v);
            MatMap dpm(dp.data(), n, v);
            ConstMatMap pm(pd.flat().data(), n, v);
            for (Index i = 0; i < n; ++i) {
                const int t = tg[static_cast<size_t>(i)];
                const Scalar p = pm(i, t);
                if (p > eps_floor) {
                    dpm(i, t) = -g0 / (static_cast<Scalar>(n) * p);
                }
            }
            tape.accumulate(pn, dp);
        },
        "cross_entropy");
}

} // namespace pplx
