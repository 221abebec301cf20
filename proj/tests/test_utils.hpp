#pragma once

#include "gala/rng.hpp"
#include "gala/tensor.hpp"

#include <vector>

namespace gala::testutil {

inline Tensor random_tensor(std::vector<int> shape, RngStream& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_normal(std::vector<int> shape, RngStream& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.normal(0.0, stddev);
    return t;
}

} // namespace gala::testutil
