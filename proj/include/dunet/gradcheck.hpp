#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dunet/tape.hpp"

namespace dunet {

// All finite-difference checking runs on the 64-bit tape regardless of the
// training precision.
using CheckVar = Tape<double>::Var;
using CheckFn = std::function<CheckVar(Tape<double>&, const std::vector<CheckVar>&)>;

struct FdOptions {
    // central-difference step: eps_scale * max(1, |x|)
    double eps_scale = 1e-5;
    // relative-error denominator floor; raise it for ops whose exact gradients
    // are O(1) so that near-zero entries do not inflate the ratio
    double denom_floor = 1e-6;
    // per-input element subsets to compare; std::nullopt = every element
    std::vector<std::optional<std::vector<std::int64_t>>> check_elems;
    // self-test hook: negate analytic gradients before comparing
    bool flip_analytic_sign = false;
};

// max over checked elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
double fd_max_rel_error(const CheckFn& fn, const std::vector<Tensor<double>>& inputs,
                        const FdOptions& opts = {});

struct GradCheckRow {
    std::string op;
    double max_err = 0.0;
    double threshold = 0.0;
    int seeds = 0;
    bool pass = false;
};

// Every differentiable op plus two composites (conv-relu-pool-bce and the full
// dynamic-illumination forward, checked against its straight-through clip
// convention). inject_fault adds a deliberately sign-flipped conv row so the
// harness itself can be exercised.
std::vector<GradCheckRow> gradcheck_suite(int seeds, bool inject_fault = false);

bool gradcheck_all_pass(const std::vector<GradCheckRow>& rows);

} // namespace dunet
