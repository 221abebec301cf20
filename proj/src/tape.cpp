#include "gala/tape.hpp"

#include "gala/errors.hpp"

namespace gala {

Parameter::Parameter(std::string name_, Tensor init)
    : name(std::move(name_)),
      value(std::move(init)),
      grad(Tensor::zeros(value.shape())),
      moment1(Tensor::zeros(value.shape())),
      moment2(Tensor::zeros(value.shape())) {}

void Parameter::zero_grad() {
    for (std::int64_t i = 0; i < grad.size(); ++i) grad.at(i) = 0.0;
}

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, nullptr, "constant"});
    grads_.emplace_back();
    return Var{static_cast<int>(nodes_.size()) - 1, this};
}

Var Tape::param(Parameter& p) {
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return Var{it->second, this};
    nodes_.push_back(Node{p.value, {}, nullptr, &p, "param"});
    grads_.emplace_back();
    const int id = static_cast<int>(nodes_.size()) - 1;
    param_ids_.emplace(&p, id);
    return Var{id, this};
}

void Tape::check_var(Var v) const {
    if (v.tape != this || v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw validation_error("Var does not belong to this tape");
}

const Tensor& Tape::value(Var v) const {
    check_var(v);
    return nodes_[static_cast<std::size_t>(v.id)].value;
}

Tensor Tape::grad(Var v) const {
    check_var(v);
    const Tensor& g = grads_[static_cast<std::size_t>(v.id)];
    if (g.defined()) return g;
    return Tensor::zeros(nodes_[static_cast<std::size_t>(v.id)].value.shape());
}

Tensor& Tape::grad_buffer(int id) {
    Tensor& g = grads_[static_cast<std::size_t>(id)];
    if (!g.defined()) g = Tensor::zeros(nodes_[static_cast<std::size_t>(id)].value.shape());
    return g;
}

bool Tape::grad_touched(int id) const { return grads_[static_cast<std::size_t>(id)].defined(); }

const std::vector<int>& Tape::inputs_of(int id) const {
    return nodes_[static_cast<std::size_t>(id)].inputs;
}

Var Tape::emit(Tensor out, std::vector<Var> inputs, std::function<void(Tape&, int)> backward,
               const char* op_name) {
    out.require_finite(op_name);
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (Var v : inputs) {
        check_var(v);
        ids.push_back(v.id);
    }
    nodes_.push_back(Node{std::move(out), std::move(ids), std::move(backward), nullptr, op_name});
    grads_.emplace_back();
    return Var{static_cast<int>(nodes_.size()) - 1, this};
}

void Tape::backward(Var loss) {
    check_var(loss);
    const Tensor& lv = nodes_[static_cast<std::size_t>(loss.id)].value;
    if (!lv.is_scalar())
        throw validation_error("backward() target must be scalar, got shape " + shape_string(lv.shape()));

    grad_buffer(loss.id).at(0) = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward) continue;
        if (!grad_touched(id)) continue; // dead branch
        n.backward(*this, id);
    }
    for (auto& [p, id] : param_ids_) {
        if (!grad_touched(id)) continue;
        axpy_into(p->grad, grads_[static_cast<std::size_t>(id)]);
    }
}

void axpy_into(Tensor& dst, const Tensor& src, double scale) {
    double* d = dst.data();
    const double* s = src.data();
    const std::int64_t n = dst.size();
    for (std::int64_t i = 0; i < n; ++i) d[i] += scale * s[i];
}

} // namespace gala
