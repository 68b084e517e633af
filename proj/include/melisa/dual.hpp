#pragma once

#include "melisa/tensor.hpp"

namespace melisa {

/// Forward-mode pair (value, tangent). A defaulted tangent (`zero == true`)
/// marks an exactly-zero tangent so ops can skip the linearized work; network
/// parameters are lifted with zero tangents when computing input-direction
/// JVPs.
struct Dual {
    Tensor v;
    Tensor d;
    bool zero = true;

    Dual() = default;
    explicit Dual(Tensor value) : v(std::move(value)), zero(true) {}
    Dual(Tensor value, Tensor tangent)
        : v(std::move(value)), d(std::move(tangent)), zero(false) {}

    static Dual constant(Tensor value) { return Dual(std::move(value)); }

    const Tensor& tangent_or_zeros() const;  ///< materializes zeros if needed

    Tensor materialized_tangent() const {
        return zero ? Tensor::zeros(v.shape()) : d;
    }
};

}  // namespace melisa
