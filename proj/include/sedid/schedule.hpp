#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/tensor.hpp"

namespace sedid {

// Variance schedule: beta_t for t = 1..T, alpha_t = 1 - beta_t, and the
// cumulative product alpha_bar_t. alpha_bar(0) is defined as 1 so chains may
// start at t = 0.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> beta) : beta_(std::move(beta)) {
        if (beta_.empty()) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        alpha_.resize(beta_.size());
        alpha_bar_.resize(beta_.size() + 1);
        alpha_bar_[0] = 1.0;
        for (size_t i = 0; i < beta_.size(); ++i) {
            if (!(beta_[i] > 0.0 && beta_[i] < 1.0))
                throw std::invalid_argument("NoiseSchedule: beta_" + std::to_string(i + 1) +
                                            " outside (0, 1)");
            alpha_[i] = 1.0 - beta_[i];
            alpha_bar_[i + 1] = alpha_bar_[i] * alpha_[i];
        }
    }

    int T() const { return static_cast<int>(beta_.size()); }

    double beta(int t) const {
        check_step(t);
        return beta_[static_cast<size_t>(t) - 1];
    }

    double alpha(int t) const {
        check_step(t);
        return alpha_[static_cast<size_t>(t) - 1];
    }

    // Defined for t = 0..T.
    double alpha_bar(int t) const {
        if (t < 0 || t > T())
            throw std::invalid_argument("NoiseSchedule: alpha_bar timestep " + std::to_string(t) +
                                        " outside [0, " + std::to_string(T()) + "]");
        return alpha_bar_[static_cast<size_t>(t)];
    }

    const std::vector<double>& betas() const { return beta_; }

private:
    void check_step(int t) const {
        if (t < 1 || t > T())
            throw std::invalid_argument("NoiseSchedule: timestep " + std::to_string(t) +
                                        " outside [1, " + std::to_string(T()) + "]");
    }

    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

// beta_t interpolated linearly from beta_start (t=1) to beta_end (t=T).
inline NoiseSchedule linear_schedule(int T = 1000, double beta_start = 1e-4,
                                     double beta_end = 0.02) {
    if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
        throw std::invalid_argument("linear_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> beta(static_cast<size_t>(T));
    if (T == 1) {
        beta[0] = beta_start;
    } else {
        double step = (beta_end - beta_start) / static_cast<double>(T - 1);
        for (int t = 1; t <= T; ++t)
            beta[static_cast<size_t>(t) - 1] = beta_start + static_cast<double>(t - 1) * step;
    }
    return NoiseSchedule(std::move(beta));
}

// Closed-form forward sampling: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
inline Tensor forward_sample(const NoiseSchedule& s, const Tensor& x0, int t, const Tensor& eps) {
    if (t < 1 || t > s.T())
        throw std::invalid_argument("forward_sample: timestep " + std::to_string(t) +
                                    " outside [1, " + std::to_string(s.T()) + "]");
    require_same_shape(x0, eps, "forward_sample");
    double ab = s.alpha_bar(t);
    return lincomb(std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

}  // namespace sedid
