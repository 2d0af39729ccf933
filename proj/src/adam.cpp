#include "pplx/adam.hpp"

#include <cmath>

namespace pplx {

std::vector<Tensor> adam_step(const std::vector<Tensor>& params,
                              const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params vs " +
                                    std::to_string(grads.size()) + " grads");
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i] = Vec::Zero(params[i].numel());
            state.v[i] = Vec::Zero(params[i].numel());
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state tracks " + std::to_string(state.m.size()) +
                                    " tensors, got " + std::to_string(params.size()));
    }

    state.step_count += 1;
    const Scalar bc1 = 1.0 - std::pow(state.beta1, static_cast<Scalar>(state.step_count));
    const Scalar bc2 = 1.0 - std::pow(state.beta2, static_cast<Scalar>(state.step_count));

    std::vector<Tensor> out;
    out.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape()) {
            throw std::invalid_argument("adam_step: tensor " + std::to_string(i) + " shape " +
                                        shape_str(params[i].shape()) + " vs grad " +
                                        shape_str(grads[i].shape()));
        }
        if (state.m[i].size() != params[i].numel()) {
            throw std::invalid_argument("adam_step: moment size mismatch at tensor " + std::to_string(i));
        }
        const Vec& g = grads[i].flat();
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseProduct(g);
        const Vec mhat = state.m[i] / bc1;
        const Vec vhat = state.v[i] / bc2;
        const Vec denom = vhat.cwiseSqrt() + Vec::Constant(vhat.size(), state.epsilon_div);
        Vec updated = params[i].flat() - state.learning_rate * mhat.cwiseQuotient(denom);
        out.push_back(Tensor::from_data(params[i].shape(), std::move(updated)));
    }
    return out;
}

} // namespace pplx
