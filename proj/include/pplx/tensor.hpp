#pragma once

#include "pplx/common.hpp"

#include <functional>
#include <memory>
#include <span>
#include <unordered_map>

namespace pplx {

class Tape;

// Dense tensor of 64-bit reals, rank 0..2, flat row-major storage.
// Value tensors are immutable and cheap to copy (shared data). A tensor may
// additionally carry a handle onto a Tape, in which case operations on it
// are recorded for reverse-mode differentiation.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<Index> shape);
    static Tensor full(std::vector<Index> shape, Scalar v);
    static Tensor scalar(Scalar v);
    static Tensor from_matrix(const Mat& m);                      // rank 2
    static Tensor from_row(const std::vector<Scalar>& v);         // rank 1
    static Tensor from_data(std::vector<Index> shape, Vec data);

    const std::vector<Index>& shape() const { return shape_; }
    Index numel() const { return data_ ? data_->size() : 0; }
    size_t rank() const { return shape_.size(); }
    bool is_scalar() const { return shape_.empty() && data_; }

    // 2-D view: rank 0 -> 1x1, rank 1 -> 1xn, rank 2 -> (r, c)
    Index rows() const { return rank() < 2 ? (data_ ? 1 : 0) : shape_[0]; }
    Index cols() const {
        if (rank() == 0) return data_ ? 1 : 0;
        return shape_.back();
    }
    ConstMatMap mat() const { return ConstMatMap(data_->data(), rows(), cols()); }
    const Vec& flat() const { return *data_; }
    Scalar value() const;                                          // scalar only
    Scalar at(Index r, Index c) const { return (*data_)[r * cols() + c]; }

    bool on_tape() const { return tape_ != nullptr; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }
    Tensor detached() const;

private:
    std::vector<Index> shape_;
    std::shared_ptr<const Vec> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;

    friend class Tape;
};

using GradMap = std::unordered_map<int, Tensor>;

// Records one forward computation for a single reverse pass. Single-threaded:
// a tape and the tensors attached to it form one unit of work.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Attach a value tensor as a differentiable leaf.
    Tensor leaf(const Tensor& value);

    // Record an operation result. `backward` receives the output gradient and
    // must push gradients into this tape via accumulate(); it may be empty for
    // inputs that need no gradient.
    Tensor record(std::vector<Index> shape, Vec value,
                  std::function<void(Tape&, const Vec&)> backward);

    // Add into the gradient buffer of a node during the reverse pass.
    template <class Expr>
    void accumulate(int node, const Expr& e) {
        Vec& g = grads_[static_cast<size_t>(node)];
        if (g.size() == 0) {
            g = e;
        } else {
            g += e;
        }
    }

    // Reverse pass from a scalar loss. Returns gradients for every leaf
    // (zero tensors for leaves that do not influence the loss). A tape can
    // be differentiated exactly once.
    GradMap backward(const Tensor& loss);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        std::vector<Index> shape;
        std::function<void(Tape&, const Vec&)> backward;
        bool is_leaf = false;
    };
    std::vector<Node> nodes_;
    std::vector<Vec> grads_;
    bool consumed_ = false;
};

// ---- differentiable operations ------------------------------------------
// Each op works on detached tensors too; the result is attached to a tape
// iff at least one input is. Mixing tensors from different tapes is an error.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);

// rows of `table` selected by index; the embedding lookup
Tensor gather_rows(const Tensor& table, std::span<const int> idx);
Tensor slice_rows(const Tensor& a, Index begin, Index count);
Tensor slice_cols(const Tensor& a, Index begin, Index count);
Tensor concat_cols(const std::vector<Tensor>& parts);

// softmax along the last dimension, max-subtracted for stability
Tensor row_softmax(const Tensor& logits);

// x / sqrt(mean(x^2) + eps), per row
Tensor rms_norm(const Tensor& x, Scalar eps = 1e-6);

// multiply column j of x by g[j] (the RMSNorm gain)
Tensor scale_columns(const Tensor& x, const Tensor& g);

// exact erf-based GELU, elementwise
Tensor gelu(const Tensor& x);

// -(1/n) sum_i log(max(p[i, target_i], eps_floor)); inputs are probabilities
Tensor cross_entropy(const Tensor& probs, std::span<const int> targets,
                     Scalar eps_floor = 1e-12);

inline constexpr Scalar kDefaultEpsFloor = 1e-12;

} // namespace pplx
