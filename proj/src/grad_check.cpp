#include "pplx/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace pplx {

Scalar finite_diff_check(const ParamLoss& f, const std::vector<Tensor>& point,
                         const std::vector<Tensor>& analytic_grads, Scalar h,
                         Index coords_per_tensor, Rng& rng) {
    if (h <= 0) throw std::invalid_argument("finite_diff_check: h must be positive");
    if (point.size() != analytic_grads.size()) {
        throw std::invalid_argument("finite_diff_check: point/gradient count mismatch");
    }

    Scalar worst = 0.0;
    for (size_t t = 0; t < point.size(); ++t) {
        if (point[t].shape() != analytic_grads[t].shape()) {
            throw std::invalid_argument("finite_diff_check: shape mismatch at tensor " + std::to_string(t));
        }
        const Index n = point[t].numel();
        std::vector<Index> coords;
        if (n <= coords_per_tensor) {
            coords.resize(static_cast<size_t>(n));
            for (Index i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            coords.reserve(static_cast<size_t>(coords_per_tensor));
            for (Index i = 0; i < coords_per_tensor; ++i) {
                coords.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
            }
        }

        std::vector<Tensor> probe = point;
        for (Index c : coords) {
            Vec bumped = point[t].flat();
            bumped[c] += h;
            probe[t] = Tensor::from_data(point[t].shape(), bumped);
            const Scalar up = f(probe);
            bumped[c] -= 2.0 * h;
            probe[t] = Tensor::from_data(point[t].shape(), std::move(bumped));
            const Scalar down = f(probe);
            probe[t] = point[t];

            const Scalar g_fd = (up - down) / (2.0 * h);
            const Scalar g_ad = analytic_grads[t].flat()[c];
            const Scalar rel = std::abs(g_ad - g_fd) / std::max(1.0, std::abs(g_ad));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace pplx
