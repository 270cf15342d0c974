#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace bsw::ad {

struct GradCheckResult {
    std::string op;
    int trials = 0;
    std::size_t coordinates = 0;  // parameter coordinates compared in total
    double max_rel_error = 0.0;
    bool all_finite = true;
};

/// |a - n| / max(|a|, |n|, 1e-3): relative for ordinary gradients, absolute
/// for gradients near zero.
double relative_error(double analytic, double numeric);

/// Central finite differences against backward for every op and for a
/// 3-step unrolled network with hidden size 8. Inputs are drawn with |x| <= 10.
std::vector<GradCheckResult> run_gradcheck_suite(int trials, std::uint64_t seed, double step = 1e-6);

}  // namespace bsw::ad
