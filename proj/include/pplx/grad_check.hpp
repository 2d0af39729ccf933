#pragma once

#include "pplx/tensor.hpp"

#include <functional>

namespace pplx {

// Pure scalar function of a parameter list, re-evaluated at perturbed points.
using ParamLoss = std::function<Scalar(const std::vector<Tensor>&)>;

// Compares autodiff gradients against central finite differences at sampled
// coordinates. Returns max over coordinates of |g_ad - g_fd| / max(1, |g_ad|).
// `coords_per_tensor` bounds the work on large tensors; every coordinate is
// checked when a tensor is small enough.
Scalar finite_diff_check(const ParamLoss& f, const std::vector<Tensor>& point,
                         const std::vector<Tensor>& analytic_grads, Scalar h,
                         Index coords_per_tensor, Rng& rng);

} // namespace pplx
