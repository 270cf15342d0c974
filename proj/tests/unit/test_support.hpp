#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "buildswitch/autograd.hpp"
#include "buildswitch/content.hpp"

namespace testing_support {

using bsw::ad::Parameter;
using bsw::ad::Tape;
using bsw::ad::Var;

/// Central differences of a scalar function of the parameters.
inline std::vector<std::vector<double>> numeric_grad(const std::function<double()>& f, std::vector<Parameter*> ps,
                                                     double h = 1e-6) {
    std::vector<std::vector<double>> out;
    for (auto* p : ps) {
        std::vector<double> g(p->value.size());
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double orig = p->value[k];
            p->value[k] = orig + h;
            const double up = f();
            p->value[k] = orig - h;
            const double down = f();
            p->value[k] = orig;
            g[k] = (up - down) / (2 * h);
        }
        out.push_back(std::move(g));
    }
    return out;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3}); }

/// Builtin content with combat noise and skill spread switched off.
inline bsw::sim::Content quiet_content() {
    auto c = bsw::sim::builtin_content();
    c.params.combat_noise = 0.0;
    c.params.skill_spread = 0.0;
    return c;
}

}  // namespace testing_support
