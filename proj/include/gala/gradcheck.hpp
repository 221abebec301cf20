#pragma once

#include "gala/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gala {

// Builds the loss graph on a fresh tape and returns the scalar loss Var.
// Must be deterministic: two calls at the same parameter values have to
// produce bit-identical losses.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t worst_index = -1;
    std::int64_t coords_checked = 0;
};

// Central finite differences (f(x+h)-f(x-h))/2h per coordinate against one
// tape backward pass. Relative error convention:
//   |g_tape - g_fd| / max(1, |g_fd|)
// so zero-gradient cases are well-defined.
GradCheckReport finite_diff_check(const LossBuilder& build, std::vector<Parameter*> params,
                                  double step = 1e-4);

// Named graph generator for the registered-op suite: fills `params` with the
// trainables of a freshly built random problem and returns the builder.
struct OpCheck {
    std::string name;
    double tolerance;
    std::function<LossBuilder(std::uint64_t seed, std::vector<Parameter*>& params,
                              std::vector<std::shared_ptr<Parameter>>& storage)>
        make;
};

struct OpCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

// Every differentiable op and loss in the repo, each checked over `seeds`
// random problems. `fault` optionally names one entry whose reported
// gradient error is corrupted (testing hook for the failure path).
std::vector<OpCheckResult> run_op_check_suite(int seeds, double step = 1e-4,
                                              const std::string& fault = "");

} // namespace gala
