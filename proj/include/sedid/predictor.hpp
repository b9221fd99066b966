#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

#include "sedid/errors.hpp"
#include "sedid/schedule.hpp"
#include "sedid/tensor.hpp"

namespace sedid {

// Noise-prediction abstraction: estimate of the injected Gaussian noise for a
// sample at timestep t, optionally conditioned. Implementations are pure:
// the same (x, t, cond) always yields the same output, of the same shape.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;

    virtual Tensor eval(const Tensor& x, int t, const Tensor* cond = nullptr) const = 0;

    // Earliest timestep at which eval is defined. Predictors singular at the
    // identity point alpha_bar = 1 override this to 1; step functions that
    // need a noise estimate at t = 0 then fall back to eval(x, 1).
    virtual int min_timestep() const { return 0; }
};

// Returns a fixed value regardless of (x, t): either a scalar broadcast over
// the input shape or a stored tensor of matching shape.
class ConstantPredictor final : public NoisePredictor {
public:
    explicit ConstantPredictor(double c) : scalar_(c), broadcast_(true) {}
    explicit ConstantPredictor(Tensor c) : value_(std::move(c)), broadcast_(false) {}

    Tensor eval(const Tensor& x, int /*t*/, const Tensor* /*cond*/ = nullptr) const override {
        if (broadcast_) {
            Tensor out(x.shape());
            for (size_t i = 0; i < out.size(); ++i) out[i] = scalar_;
            return out;
        }
        require_same_shape(x, value_, "ConstantPredictor::eval");
        return value_;
    }

private:
    Tensor value_;
    double scalar_ = 0.0;
    bool broadcast_;
};

// Bayes-optimal noise estimate when the data distribution is a point mass at
// x_star: inverts the closed-form forward sample. Singular at t = 0.
class PointMassPredictor final : public NoisePredictor {
public:
    PointMassPredictor(Tensor x_star, const NoiseSchedule& s)
        : x_star_(std::move(x_star)), schedule_(&s) {}

    Tensor eval(const Tensor& x, int t, const Tensor* /*cond*/ = nullptr) const override {
        if (t < 1)
            throw UndefinedTimestep("PointMassPredictor: undefined at t=" + std::to_string(t) +
                                    " (alpha_bar = 1)");
        require_same_shape(x, x_star_, "PointMassPredictor::eval");
        double ab = schedule_->alpha_bar(t);
        return lincomb(1.0 / std::sqrt(1.0 - ab), x, -std::sqrt(ab) / std::sqrt(1.0 - ab), x_star_);
    }

    int min_timestep() const override { return 1; }

private:
    Tensor x_star_;
    const NoiseSchedule* schedule_;
};

// eps(x) = k * x. Analytic oracle whose round trip has nonzero error.
class LinearPredictor final : public NoisePredictor {
public:
    explicit LinearPredictor(double k) : k_(k) {}

    Tensor eval(const Tensor& x, int /*t*/, const Tensor* /*cond*/ = nullptr) const override {
        return k_ * x;
    }

private:
    double k_;
};

}  // namespace sedid
