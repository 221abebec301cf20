#pragma once

#include "gala/tape.hpp"

#include <vector>

namespace gala {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard Adam with bias correction; zeroes gradients afterwards.
void adam_step(std::vector<Parameter*>& params, const AdamConfig& cfg);

} // namespace gala
