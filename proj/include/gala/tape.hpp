#pragma once

#include "gala/tensor.hpp"

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace gala {

class Tape;

// Lightweight handle to a value recorded on a tape.
struct Var {
    int id = -1;
    Tape* tape = nullptr;
    bool defined() const { return tape != nullptr && id >= 0; }
};

// A trainable tensor with its accumulated gradient and Adam state.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor moment1;
    Tensor moment2;
    std::int64_t step_count = 0;

    Parameter() = default;
    Parameter(std::string name_, Tensor init);

    void zero_grad();
    std::int64_t size() const { return value.size(); }
};

// Define-by-run op record. Rebuilt every training step; single-threaded.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf holding a non-trainable value.
    Var constant(Tensor value);

    // Leaf bound to a Parameter; repeated calls for the same Parameter
    // return the same Var so reuse accumulates naturally.
    Var param(Parameter& p);

    const Tensor& value(Var v) const;

    // Gradient of the last backward() target w.r.t. v; zeros if v was not
    // reached. Valid until the tape is destroyed.
    Tensor grad(Var v) const;

    // Reverse pass from a scalar loss. Visits each recorded op exactly once,
    // newest first, then adds leaf gradients into their bound Parameters.
    void backward(Var loss);

    int num_nodes() const { return static_cast<int>(nodes_.size()); }

    // --- op-author interface ---
    // Record a node. `backward` receives the tape and the node id; it reads
    // grad_buffer(id) and accumulates into grad_buffer of its inputs.
    Var emit(Tensor out, std::vector<Var> inputs, std::function<void(Tape&, int)> backward,
             const char* op_name);

    // Accumulation buffer for node `id`; allocated zeroed on first touch.
    Tensor& grad_buffer(int id);
    // Null until someone accumulated into id (used to skip dead branches).
    bool grad_touched(int id) const;
    const std::vector<int>& inputs_of(int id) const;

private:
    struct Node {
        Tensor value;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> backward;
        Parameter* bound = nullptr;
        const char* op = "";
    };

    void check_var(Var v) const;

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<Parameter*, int> param_ids_;
};

// Elementwise y += x into a grad buffer.
void axpy_into(Tensor& dst, const Tensor& src, double scale = 1.0);

} // namespace gala
