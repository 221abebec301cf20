#pragma once

#include <cstdint>
#include <memory>
#include <vector>

namespace gala {

// Dense row-major tensor of 64-bit floats. Values are treated as immutable
// once an op has produced them; the mutable accessors exist for construction
// and for parameter updates between tapes.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> values);

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return data_ != nullptr; }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t size() const;

    // 2-D helpers; both throw unless ndim() == 2.
    int rows() const;
    int cols() const;

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }

    double at(std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }
    double& at(std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
    double operator()(int r, int c) const;
    double& operator()(int r, int c);

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool is_scalar() const { return size() == 1; }
    double scalar_value() const;

    // Throws numeric_error naming `what` if any entry is NaN or Inf.
    void require_finite(const char* what) const;

    // Deep copy (fresh storage).
    Tensor clone() const;

private:
    std::vector<int> shape_;
    std::shared_ptr<std::vector<double>> data_;
};

std::string shape_string(const std::vector<int>& shape);

} // namespace gala
