#pragma once

#include <cmath>
#include <cstdint>

#include "oemb/error.hpp"
#include "oemb/params.hpp"

namespace oemb {

/// L2 norm of all gradient tensors concatenated.
template <typename Scalar>
Scalar global_norm(const ModelParams<Scalar>& grads) {
    Scalar acc = 0;
    for (const auto& t : grads.tensors()) {
        for (Scalar g : t.values) {
            acc += g * g;
        }
    }
    return std::sqrt(acc);
}

/// Rescales every tensor by threshold / norm when the global norm exceeds
/// `threshold`. Returns the norm before clipping.
template <typename Scalar>
Scalar clip_gradients(ModelParams<Scalar>& grads, Scalar threshold) {
    if (!(threshold > Scalar(0))) {
        throw ValidationError("clip threshold must be positive");
    }
    const Scalar norm = global_norm(grads);
    if (norm > threshold) {
        const Scalar scale = threshold / norm;
        for (auto& t : grads.tensors()) {
            for (auto& g : t.values) {
                g *= scale;
            }
        }
    }
    return norm;
}

template <typename Scalar>
struct AdamState {
    ModelParams<Scalar> m;
    ModelParams<Scalar> v;
    std::uint64_t step = 0;
    Scalar beta1 = Scalar(0.9);
    Scalar beta2 = Scalar(0.999);
    Scalar eps = Scalar(1e-8);

    AdamState() = default;
    explicit AdamState(const ModelParams<Scalar>& like) : m(like.zeros_like()), v(like.zeros_like()) {}
};

/// Adam with bias correction, in place.
template <typename Scalar>
void adam_step(ModelParams<Scalar>& params, const ModelParams<Scalar>& grads, AdamState<Scalar>& state, Scalar lr) {
    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    require_shape(p.size() == g.size() && p.size() == m.size(), "adam_step: parameter/gradient layout mismatch");
    ++state.step;
    const auto t = static_cast<Scalar>(state.step);
    const Scalar c1 = Scalar(1) - std::pow(state.beta1, t);
    const Scalar c2 = Scalar(1) - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
        require_shape(p[i].values.size() == g[i].values.size(), "adam_step: shape mismatch in " +
                                                                    std::string(p[i].name));
        for (std::size_t k = 0; k < p[i].values.size(); ++k) {
            const Scalar gk = g[i].values[k];
            m[i].values[k] = state.beta1 * m[i].values[k] + (Scalar(1) - state.beta1) * gk;
            v[i].values[k] = state.beta2 * v[i].values[k] + (Scalar(1) - state.beta2) * gk * gk;
            const Scalar mhat = m[i].values[k] / c1;
            const Scalar vhat = v[i].values[k] / c2;
            p[i].values[k] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace oemb
