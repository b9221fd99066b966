#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "sedid/rng.hpp"

namespace sedid {

// Fully connected layer with gradient accumulators. Weights are row-major
// [out][in]; an empty bias vector means the layer has no bias term.
struct Dense {
    size_t in = 0, out = 0;
    std::vector<double> w, b;
    std::vector<double> gw, gb;
};

inline Dense make_dense(size_t in, size_t out, Rng& rng, bool bias = true) {
    Dense d;
    d.in = in;
    d.out = out;
    d.w.resize(in * out);
    d.gw.assign(in * out, 0.0);
    double scale = std::sqrt(1.0 / static_cast<double>(in));
    for (auto& v : d.w) v = scale * rng.next_normal();
    if (bias) {
        d.b.assign(out, 0.0);
        d.gb.assign(out, 0.0);
    }
    return d;
}

inline void dense_forward(const Dense& d, const double* x, double* y) {
    for (size_t o = 0; o < d.out; ++o) {
        double acc = d.b.empty() ? 0.0 : d.b[o];
        const double* row = d.w.data() + o * d.in;
        for (size_t i = 0; i < d.in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

// Accumulates parameter gradients from dy; writes input gradient to dx
// (pass nullptr when not needed).
inline void dense_backward(Dense& d, const double* x, const double* dy, double* dx) {
    for (size_t o = 0; o < d.out; ++o) {
        double g = dy[o];
        double* grow = d.gw.data() + o * d.in;
        for (size_t i = 0; i < d.in; ++i) grow[i] += g * x[i];
        if (!d.gb.empty()) d.gb[o] += g;
    }
    if (dx) {
        for (size_t i = 0; i < d.in; ++i) dx[i] = 0.0;
        for (size_t o = 0; o < d.out; ++o) {
            double g = dy[o];
            const double* row = d.w.data() + o * d.in;
            for (size_t i = 0; i < d.in; ++i) dx[i] += row[i] * g;
        }
    }
}

inline void tanh_inplace(double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

// d/dpre tanh(pre) = 1 - tanh(pre)^2, expressed through the activation value.
inline void tanh_backward(const double* act, double* dact, size_t n) {
    for (size_t i = 0; i < n; ++i) dact[i] *= 1.0 - act[i] * act[i];
}

// View of one parameter block and its gradient accumulator.
struct ParamRef {
    std::vector<double>* value;
    std::vector<double>* grad;
};

// SGD with classical momentum; weight decay enters as an L2 term added to
// the gradient before the momentum update.
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum, double weight_decay)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {
        if (lr < 0.0) throw std::invalid_argument("SgdMomentum: negative learning rate");
        if (momentum < 0.0 || momentum >= 1.0)
            throw std::invalid_argument("SgdMomentum: momentum outside [0, 1)");
    }

    // Applies one update and zeroes the gradient accumulators.
    void step(const std::vector<ParamRef>& params) {
        if (vel_.empty()) {
            vel_.resize(params.size());
            for (size_t p = 0; p < params.size(); ++p)
                vel_[p].assign(params[p].value->size(), 0.0);
        }
        if (vel_.size() != params.size())
            throw std::invalid_argument("SgdMomentum: parameter set changed between steps");
        for (size_t p = 0; p < params.size(); ++p) {
            auto& value = *params[p].value;
            auto& grad = *params[p].grad;
            auto& vel = vel_[p];
            for (size_t i = 0; i < value.size(); ++i) {
                double g = grad[i] + weight_decay_ * value[i];
                vel[i] = momentum_ * vel[i] + g;
                value[i] -= lr_ * vel[i];
                grad[i] = 0.0;
            }
        }
    }

private:
    double lr_, momentum_, weight_decay_;
    std::vector<std::vector<double>> vel_;
};

inline void zero_grads(const std::vector<ParamRef>& params) {
    for (const auto& p : params)
        for (auto& g : *p.grad) g = 0.0;
}

}  // namespace sedid
