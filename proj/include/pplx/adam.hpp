#pragma once

#include "pplx/tensor.hpp"

namespace pplx {

// Adam with bias correction. Defaults are the standard values; the training
// runs record them in their manifests since nothing upstream pins them.
struct AdamState {
    Scalar learning_rate = 3e-4;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar epsilon_div = 1e-8;
    long step_count = 0;
    std::vector<Vec> m; // first moments, sized on first step
    std::vector<Vec> v; // second moments
};

// One update over a parameter list; grads[i] pairs with params[i].
// Deterministic: same inputs give bitwise identical outputs.
std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads, AdamState& state);

} // namespace pplx
