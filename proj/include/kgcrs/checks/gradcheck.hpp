// Central finite-difference gradient checking.

#pragma once

#include "kgcrs/autograd.hpp"
#include "kgcrs/util.hpp"

#include <functional>
#include <string>
#include <vector>

namespace kgcrs::checks {

struct GradInput {
    std::string name;
    ag::Var var;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "name[r,c] analytic=... numeric=..."
    int checked = 0;
};

/// |a - n| / max(|a|, |n|, 1e-6).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients of `loss` (rebuilt on every call) with
/// central differences of step `h`. At most `per_input` coordinates of each
/// input are probed, chosen by `rng`; all of them when per_input <= 0.
GradCheckResult gradcheck(const std::function<ag::Var()>& loss, const std::vector<GradInput>& inputs, Rng& rng,
                          int per_input = 0, double h = 1e-5);

}  // namespace kgcrs::checks
