#include "gala/tensor.hpp"

#include "gala/errors.hpp"

#include <cmath>
#include <sstream>

namespace gala {

namespace {

std::int64_t product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw validation_error("tensor shape extents must be positive, got " + shape_string(shape));
        n *= d;
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)),
      data_(std::make_shared<std::vector<double>>(static_cast<std::size_t>(product(shape_)), 0.0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> values) : shape_(std::move(shape)) {
    const std::int64_t n = product(shape_);
    if (n != static_cast<std::int64_t>(values.size()))
        throw validation_error("tensor value count " + std::to_string(values.size()) +
                               " does not match shape " + shape_string(shape_));
    data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = value;
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::int64_t Tensor::size() const {
    if (!data_) return 0;
    return static_cast<std::int64_t>(data_->size());
}

int Tensor::rows() const {
    if (ndim() != 2) throw validation_error("rows(): tensor is not 2-D, shape " + shape_string(shape_));
    return shape_[0];
}

int Tensor::cols() const {
    if (ndim() != 2) throw validation_error("cols(): tensor is not 2-D, shape " + shape_string(shape_));
    return shape_[1];
}

double Tensor::operator()(int r, int c) const {
    return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(c)];
}

double& Tensor::operator()(int r, int c) {
    return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(c)];
}

double Tensor::scalar_value() const {
    if (!is_scalar()) throw validation_error("scalar_value(): tensor has " + std::to_string(size()) + " entries");
    return (*data_)[0];
}

void Tensor::require_finite(const char* what) const {
    if (!data_) return;
    for (double v : *data_) {
        if (!std::isfinite(v))
            throw numeric_error(std::string("non-finite value produced by ") + what);
    }
}

Tensor Tensor::clone() const {
    if (!data_) return Tensor();
    Tensor out;
    out.shape_ = shape_;
    out.data_ = std::make_shared<std::vector<double>>(*data_);
    return out;
}

std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

} // namespace gala
