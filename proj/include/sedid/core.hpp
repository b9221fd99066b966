#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/predictor.hpp"
#include "sedid/schedule.hpp"
#include "sedid/tensor.hpp"

namespace sedid {

// Timestep at which the stepwise error is evaluated, and the stepsize of the
// deterministic up/down chain reaching it.
struct StepConfig {
    int t_se = 0;
    int delta = 1;

    void validate(int T) const {
        if (delta < 1) throw std::invalid_argument("StepConfig: delta must be >= 1");
        if (t_se < 0) throw std::invalid_argument("StepConfig: t_se must be >= 0");
        if (t_se + delta > T)
            throw std::invalid_argument("StepConfig: t_se + delta exceeds T (" +
                                        std::to_string(t_se) + " + " + std::to_string(delta) +
                                        " > " + std::to_string(T) + ")");
        if (t_se % delta != 0)
            throw std::invalid_argument("StepConfig: t_se must be a multiple of delta");
    }
};

// Intermediate states of one sample's round trip at t_se, plus the error.
struct NoiseProfile {
    Tensor x_tilde_t;  // deterministic reverse chain result at t_se
    Tensor x_up;       // one step further up, at t_se + delta
    Tensor x_recon;    // back down at t_se
    Tensor residual;   // x_recon - x_tilde_t
    double error = 0.0;
};

// Predicted clean sample: (x - sqrt(1 - abar_t) eps) / sqrt(abar_t).
inline Tensor f_theta(const NoisePredictor& p, const NoiseSchedule& s, const Tensor& x, int t,
                      const Tensor* cond = nullptr) {
    if (t < 1 || t > s.T())
        throw std::invalid_argument("f_theta: timestep " + std::to_string(t) + " outside [1, " +
                                    std::to_string(s.T()) + "]");
    Tensor eps = p.eval(x, t, cond);
    double ab = s.alpha_bar(t);
    double inv = 1.0 / std::sqrt(ab);
    return lincomb(inv, x, -std::sqrt(1.0 - ab) * inv, eps);
}

// Deterministic denoising step: x at t -> x at t - delta.
inline Tensor psi(const NoisePredictor& p, const NoiseSchedule& s, const Tensor& x, int t,
                  int delta, const Tensor* cond = nullptr) {
    if (delta < 1) throw std::invalid_argument("psi: delta must be >= 1");
    if (t < delta || t > s.T())
        throw std::invalid_argument("psi: timestep " + std::to_string(t) + " outside [" +
                                    std::to_string(delta) + ", " + std::to_string(s.T()) + "]");
    Tensor eps = p.eval(x, t, cond);
    double ab_t = s.alpha_bar(t);
    double ab_dst = s.alpha_bar(t - delta);
    double f_of_x = std::sqrt(ab_dst / ab_t);
    // sqrt(ab_dst) * f + sqrt(1 - ab_dst) * eps, with f expanded
    return lincomb(f_of_x, x,
                   std::sqrt(1.0 - ab_dst) - f_of_x * std::sqrt(1.0 - ab_t), eps);
}

// Deterministic reverse step: x at t -> x at t + delta. At t = 0 the clean
// estimate degenerates to x itself (alpha_bar(0) = 1); predictors undefined
// there supply their noise estimate at min_timestep() instead.
inline Tensor phi(const NoisePredictor& p, const NoiseSchedule& s, const Tensor& x, int t,
                  int delta, const Tensor* cond = nullptr) {
    if (delta < 1) throw std::invalid_argument("phi: delta must be >= 1");
    if (t < 0 || t + delta > s.T())
        throw std::invalid_argument("phi: timestep " + std::to_string(t) + " outside [0, " +
                                    std::to_string(s.T() - delta) + "]");
    int t_eval = std::max(t, p.min_timestep());
    Tensor eps = p.eval(x, t_eval, cond);
    double ab_t = s.alpha_bar(t);
    double ab_dst = s.alpha_bar(t + delta);
    double f_of_x = std::sqrt(ab_dst / ab_t);
    return lincomb(f_of_x, x,
                   std::sqrt(1.0 - ab_dst) - f_of_x * std::sqrt(1.0 - ab_t), eps);
}

// Iterated reverse steps from the data: phi applied at t = 0, delta, ...,
// t_se - delta. Empty chain for t_se = 0.
inline Tensor reverse_chain(const NoisePredictor& p, const NoiseSchedule& s, const Tensor& x0,
                            int t_se, int delta, const Tensor* cond = nullptr) {
    StepConfig{t_se, delta}.validate(s.T());
    Tensor x = x0;
    for (int t = 0; t < t_se; t += delta) x = phi(p, s, x, t, delta, cond);
    return x;
}

// Stepwise error at cfg.t_se: chain up to t_se, one more reverse step to
// t_se + delta, denoise back down, and compare. The denoising step is taken
// at t_se + delta, where the reverse output lives, so the comparison at t_se
// is between states at the same timestep.
inline NoiseProfile t_delta_error(const NoisePredictor& p, const NoiseSchedule& s,
                                  const Tensor& x0, const StepConfig& cfg,
                                  const Tensor* cond = nullptr) {
    cfg.validate(s.T());
    NoiseProfile profile;
    profile.x_tilde_t = reverse_chain(p, s, x0, cfg.t_se, cfg.delta, cond);
    profile.x_up = phi(p, s, profile.x_tilde_t, cfg.t_se, cfg.delta, cond);
    profile.x_recon = psi(p, s, profile.x_up, cfg.t_se + cfg.delta, cfg.delta, cond);
    profile.residual = profile.x_recon - profile.x_tilde_t;
    profile.error = l2_sq(profile.x_recon, profile.x_tilde_t);
    return profile;
}

// Maps a sample into the space the chain runs in.
class LatentEncoder {
public:
    virtual ~LatentEncoder() = default;
    virtual Tensor encode(const Tensor& x) const = 0;
};

class IdentityEncoder final : public LatentEncoder {
public:
    Tensor encode(const Tensor& x) const override { return x; }
};

// Fixed linear map on the flattened input: v = M x, M row-major [out][in].
class LinearMapEncoder final : public LatentEncoder {
public:
    LinearMapEncoder(size_t in, size_t out, std::vector<double> m)
        : in_(in), out_(out), m_(std::move(m)) {
        if (m_.size() != in_ * out_)
            throw std::invalid_argument("LinearMapEncoder: matrix size mismatch");
    }

    Tensor encode(const Tensor& x) const override {
        if (x.size() != in_) throw std::invalid_argument("LinearMapEncoder: input size mismatch");
        Tensor v({out_});
        for (size_t o = 0; o < out_; ++o) {
            double acc = 0.0;
            for (size_t i = 0; i < in_; ++i) acc += m_[o * in_ + i] * x[i];
            v[o] = acc;
        }
        return v;
    }

private:
    size_t in_, out_;
    std::vector<double> m_;
};

// 2x average downsampling over the trailing two dimensions.
class AvgPool2Encoder final : public LatentEncoder {
public:
    Tensor encode(const Tensor& x) const override {
        const auto& shape = x.shape();
        if (shape.size() < 2)
            throw std::invalid_argument("AvgPool2Encoder: need at least 2 dims");
        size_t h = shape[shape.size() - 2];
        size_t w = shape[shape.size() - 1];
        if (h % 2 != 0 || w % 2 != 0)
            throw std::invalid_argument("AvgPool2Encoder: trailing dims must be even");
        size_t batch = x.size() / (h * w);
        std::vector<size_t> out_shape = shape;
        out_shape[shape.size() - 2] = h / 2;
        out_shape[shape.size() - 1] = w / 2;
        Tensor v(out_shape);
        for (size_t n = 0; n < batch; ++n) {
            const double* src = x.data() + n * h * w;
            double* dst = v.data() + n * (h / 2) * (w / 2);
            for (size_t r = 0; r < h / 2; ++r)
                for (size_t c = 0; c < w / 2; ++c)
                    dst[r * (w / 2) + c] = 0.25 * (src[(2 * r) * w + 2 * c] +
                                                   src[(2 * r) * w + 2 * c + 1] +
                                                   src[(2 * r + 1) * w + 2 * c] +
                                                   src[(2 * r + 1) * w + 2 * c + 1]);
        }
        return v;
    }
};

// Stepwise error in a latent space: encode first, then run the identical
// pipeline on v0 with the condition threaded through every noise evaluation.
inline NoiseProfile latent_t_error(const NoisePredictor& p, const LatentEncoder& encoder,
                                   const NoiseSchedule& s, const Tensor& x0,
                                   const StepConfig& cfg, const Tensor* cond = nullptr) {
    Tensor v0 = encoder.encode(x0);
    return t_delta_error(p, s, v0, cfg, cond);
}

}  // namespace sedid
