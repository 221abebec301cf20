#include "gala/adam.hpp"

#include "gala/errors.hpp"

#include <cmath>

namespace gala {

void adam_step(std::vector<Parameter*>& params, const AdamConfig& cfg) {
    if (cfg.lr <= 0.0) throw validation_error("adam_step: learning rate must be positive");
    for (Parameter* p : params) {
        p->step_count += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step_count));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step_count));
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.at(i);
            const double m = cfg.beta1 * p->moment1.at(i) + (1.0 - cfg.beta1) * g;
            const double v = cfg.beta2 * p->moment2.at(i) + (1.0 - cfg.beta2) * g * g;
            p->moment1.at(i) = m;
            p->moment2.at(i) = v;
            p->value.at(i) -= cfg.lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.eps);
        }
        p->value.require_finite("adam_step");
        p->zero_grad();
    }
}

} // namespace gala
