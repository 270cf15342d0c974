#include "buildswitch/adam.hpp"

#include <cmath>

#include "buildswitch/error.hpp"

namespace bsw::ad {

AdamState::AdamState(std::span<Parameter* const> params, AdamHyper h) : hyper(h) {
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Parameter* p : params) {
        m.push_back(Array::zeros_like(p->value));
        v.push_back(Array::zeros_like(p->value));
    }
}

void adam_step(std::span<Parameter* const> params, AdamState& state) {
    expect(params.size() == state.m.size() && params.size() == state.v.size(),
           "adam_step: parameter list does not match optimizer state");
    state.t += 1;
    const auto& hp = state.hyper;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        Array& m = state.m[k];
        Array& v = state.v[k];
        expect(p.value.shape() == m.shape() && p.grad.shape() == m.shape(), "adam_step: shape mismatch");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.epsilon);
        }
    }
}

void zero_grads(std::span<Parameter* const> params) {
    for (Parameter* p : params) p->zero_grad();
}

}  // namespace bsw::ad
