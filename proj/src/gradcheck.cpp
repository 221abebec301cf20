#include "gala/gradcheck.hpp"

#include "gala/errors.hpp"

#include <cmath>

namespace gala {

namespace {

double eval_loss(const LossBuilder& build) {
    Tape tape;
    Var loss = build(tape);
    return tape.value(loss).scalar_value();
}

} // namespace

GradCheckReport finite_diff_check(const LossBuilder& build, std::vector<Parameter*> params,
                                  double step) {
    if (step < 1e-6 || step > 1e-3)
        throw validation_error("finite_diff_check: step must lie in [1e-6, 1e-3]");

    // Determinism guard: two evaluations at the same point must agree exactly.
    const double f0 = eval_loss(build);
    const double f0_again = eval_loss(build);
    if (f0 != f0_again)
        throw numeric_error("finite_diff_check: loss builder is non-deterministic");

    for (Parameter* p : params) p->zero_grad();
    Tape tape;
    Var loss = build(tape);
    tape.backward(loss);

    GradCheckReport report;
    for (Parameter* p : params) {
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            const double saved = p->value.at(i);
            p->value.at(i) = saved + step;
            const double f_plus = eval_loss(build);
            p->value.at(i) = saved - step;
            const double f_minus = eval_loss(build);
            p->value.at(i) = saved;

            const double g_fd = (f_plus - f_minus) / (2.0 * step);
            const double g_tape = p->grad.at(i);
            const double rel = std::fabs(g_tape - g_fd) / std::max(1.0, std::fabs(g_fd));
            ++report.coords_checked;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = p->name;
                report.worst_index = i;
            }
        }
    }
    for (Parameter* p : params) p->zero_grad();
    return report;
}

} // namespace gala
