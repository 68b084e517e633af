#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace melisa {

/// Dense row-major tensor of doubles. Rank is small (<= 5); shape {1} is
/// treated as a scalar by the broadcasting elementwise ops.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool is_scalar() const { return data_.size() == 1; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double value() const;  ///< the single element; throws unless numel()==1

    /// Same data, new shape; element count must match.
    Tensor reshaped(std::vector<int> shape) const;

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

int64_t shape_numel(const std::vector<int>& shape);

/// Throws std::runtime_error mentioning `where` if any entry is non-finite.
void ensure_finite(const Tensor& t, const char* where);

}  // namespace melisa
