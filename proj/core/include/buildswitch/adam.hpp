#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "buildswitch/autograd.hpp"

namespace bsw::ad {

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment estimates for a fixed, ordered list of parameters.
struct AdamState {
    AdamHyper hyper;
    std::vector<Array> m;
    std::vector<Array> v;
    std::int64_t t = 0;

    AdamState() = default;
    AdamState(std::span<Parameter* const> params, AdamHyper h);
};

/// One bias-corrected Adam update from each parameter's accumulated grad.
/// Gradients are left untouched; the caller zeroes them.
void adam_step(std::span<Parameter* const> params, AdamState& state);

void zero_grads(std::span<Parameter* const> params);

}  // namespace bsw::ad
