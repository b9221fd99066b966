#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sedid {

// Dense n-dimensional array of 64-bit reals, row-major. Immutable by
// convention once handed to another module; cheap to copy at desk scale.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape)
        : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

    Tensor(std::vector<size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (checked_size(shape_) != data_.size())
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor from_vector(std::vector<double> v) {
        size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor reshaped(std::vector<size_t> shape) const {
        if (checked_size(shape) != data_.size())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        return Tensor(std::move(shape), data_);
    }

private:
    static size_t checked_size(const std::vector<size_t>& shape) {
        if (shape.empty()) throw std::invalid_argument("Tensor: empty shape");
        size_t n = 1;
        for (size_t d : shape) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
            n *= d;
        }
        return n;
    }

    std::vector<size_t> shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(who) + ": shape mismatch");
}

// Sum of squared differences, the stepwise-error reduction.
inline double l2_sq(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "l2_sq");
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// y = ca*a + cb*b, elementwise.
inline Tensor lincomb(double ca, const Tensor& a, double cb, const Tensor& b) {
    require_same_shape(a, b, "lincomb");
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
    return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return lincomb(1.0, a, 1.0, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return lincomb(1.0, a, -1.0, b); }

inline Tensor operator*(double c, const Tensor& a) {
    Tensor out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
    return out;
}

}  // namespace sedid
