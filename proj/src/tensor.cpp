#include "melisa/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace melisa {

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw std::runtime_error("negative dimension in shape");
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw std::runtime_error("tensor shape/data size mismatch");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
}

double Tensor::value() const {
    if (data_.size() != 1) throw std::runtime_error("value() on non-scalar tensor");
    return data_[0];
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != numel())
        throw std::runtime_error("reshape changes element count");
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ',';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

void ensure_finite(const Tensor& t, const char* where) {
    if (!t.all_finite())
        throw std::runtime_error(std::string("non-finite values in ") + where);
}

}  // namespace melisa
