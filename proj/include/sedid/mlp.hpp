#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/archive.hpp"
#include "sedid/errors.hpp"
#include "sedid/nn.hpp"
#include "sedid/predictor.hpp"
#include "sedid/rng.hpp"
#include "sedid/schedule.hpp"

namespace sedid {

// Architecture of the trainable noise predictor: fully connected layers over
// the flattened sample concatenated with a learned per-timestep embedding.
// A condition vector, when configured, enters as an additive projection into
// the first hidden layer and is skipped when absent.
struct MlpConfig {
    std::vector<size_t> hidden{128, 128};
    size_t t_embed_dim = 16;
    size_t cond_dim = 0;
};

struct TrainConfig {
    size_t steps = 20000;
    size_t batch_size = 128;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    uint64_t seed = 0;
};

// Substream tags (see README, "Seeding").
constexpr uint64_t kStreamMlpInit = 0x11;
constexpr uint64_t kStreamMlpBatch = 0x12;

class MlpPredictor final : public NoisePredictor {
public:
    MlpPredictor(int T, std::vector<size_t> data_shape, MlpConfig cfg, uint64_t init_seed)
        : T_(T), data_shape_(std::move(data_shape)), cfg_(std::move(cfg)) {
        if (T_ < 1) throw std::invalid_argument("MlpPredictor: T must be >= 1");
        if (cfg_.hidden.empty())
            throw std::invalid_argument("MlpPredictor: need at least one hidden layer");
        if (cfg_.t_embed_dim == 0)
            throw std::invalid_argument("MlpPredictor: t_embed_dim must be >= 1");
        data_dim_ = 1;
        for (size_t d : data_shape_) data_dim_ *= d;

        Rng rng(init_seed);
        size_t in = data_dim_ + cfg_.t_embed_dim;
        for (size_t width : cfg_.hidden) {
            layers_.push_back(make_dense(in, width, rng));
            in = width;
        }
        layers_.push_back(make_dense(in, data_dim_, rng));

        t_embed_.resize(static_cast<size_t>(T_ + 1) * cfg_.t_embed_dim);
        for (auto& v : t_embed_) v = 0.1 * rng.next_normal();
        t_embed_grad_.assign(t_embed_.size(), 0.0);

        if (cfg_.cond_dim > 0)
            cond_proj_ = make_dense(cfg_.cond_dim, cfg_.hidden[0], rng, /*bias=*/false);
    }

    Tensor eval(const Tensor& x, int t, const Tensor* cond = nullptr) const override {
        Workspace ws;
        forward(x, t, cond, ws);
        Tensor out(data_shape_);
        std::copy(ws.out.begin(), ws.out.end(), out.data());
        return out;
    }

    // Accumulates gradients of ||eval(x, t, cond) - eps_target||^2 into the
    // parameter accumulators and returns the loss value.
    double loss_and_grad(const Tensor& x, int t, const Tensor& eps_target,
                         const Tensor* cond = nullptr) {
        require_same_shape(x, eps_target, "MlpPredictor::loss_and_grad");
        Workspace ws;
        forward(x, t, cond, ws);

        double loss = 0.0;
        std::vector<double> dnext(data_dim_);
        for (size_t i = 0; i < data_dim_; ++i) {
            double d = ws.out[i] - eps_target[i];
            loss += d * d;
            dnext[i] = 2.0 * d;
        }

        // Invariant walking down: dnext == dL/d(pre_l).
        for (size_t l = layers_.size(); l-- > 0;) {
            if (l == 0 && cond && !cond_proj_.w.empty()) {
                for (size_t o = 0; o < cond_proj_.out; ++o)
                    for (size_t i = 0; i < cond_proj_.in; ++i)
                        cond_proj_.gw[o * cond_proj_.in + i] += dnext[o] * (*cond)[i];
            }
            std::vector<double> dprev(layers_[l].in);
            dense_backward(layers_[l], ws.acts[l].data(), dnext.data(), dprev.data());
            if (l == 0) {
                const size_t dt = cfg_.t_embed_dim;
                double* erow = t_embed_grad_.data() + static_cast<size_t>(t) * dt;
                for (size_t i = 0; i < dt; ++i) erow[i] += dprev[data_dim_ + i];
            } else {
                tanh_backward(ws.acts[l].data(), dprev.data(), layers_[l].in);
                dnext = std::move(dprev);
            }
        }
        return loss;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (auto& l : layers_) {
            out.push_back({&l.w, &l.gw});
            out.push_back({&l.b, &l.gb});
        }
        out.push_back({&t_embed_, &t_embed_grad_});
        if (!cond_proj_.w.empty()) out.push_back({&cond_proj_.w, &cond_proj_.gw});
        return out;
    }

    int T() const { return T_; }
    const std::vector<size_t>& data_shape() const { return data_shape_; }
    size_t data_dim() const { return data_dim_; }
    const MlpConfig& config() const { return cfg_; }

    std::vector<Dense>& layers() { return layers_; }
    const std::vector<Dense>& layers() const { return layers_; }
    std::vector<double>& t_embed() { return t_embed_; }
    const std::vector<double>& t_embed() const { return t_embed_; }
    Dense& cond_proj() { return cond_proj_; }
    const Dense& cond_proj() const { return cond_proj_; }

private:
    struct Workspace {
        std::vector<std::vector<double>> acts;  // acts[l] = input of layer l
        std::vector<double> out;
    };

    void check_t(int t) const {
        if (t < 0 || t > T_)
            throw std::invalid_argument("MlpPredictor: timestep " + std::to_string(t) +
                                        " outside [0, " + std::to_string(T_) + "]");
    }

    void check_cond(const Tensor* cond) const {
        if (cfg_.cond_dim == 0)
            throw std::invalid_argument("MlpPredictor: model has no condition input");
        if (cond->size() != cfg_.cond_dim)
            throw std::invalid_argument("MlpPredictor: condition size mismatch");
    }

    void forward(const Tensor& x, int t, const Tensor* cond, Workspace& ws) const {
        check_t(t);
        if (x.size() != data_dim_)
            throw std::invalid_argument("MlpPredictor: input size mismatch");
        if (cond) check_cond(cond);

        ws.acts.resize(layers_.size());
        auto& z = ws.acts[0];
        z.resize(data_dim_ + cfg_.t_embed_dim);
        std::copy(x.data(), x.data() + data_dim_, z.begin());
        const double* erow = t_embed_.data() + static_cast<size_t>(t) * cfg_.t_embed_dim;
        std::copy(erow, erow + cfg_.t_embed_dim, z.begin() + static_cast<long>(data_dim_));

        for (size_t l = 0; l < layers_.size(); ++l) {
            std::vector<double> y(layers_[l].out);
            dense_forward(layers_[l], ws.acts[l].data(), y.data());
            if (l == 0 && cond && !cond_proj_.w.empty()) {
                std::vector<double> proj(cond_proj_.out);
                dense_forward(cond_proj_, cond->data(), proj.data());
                for (size_t i = 0; i < y.size(); ++i) y[i] += proj[i];
            }
            if (l + 1 < layers_.size()) {
                tanh_inplace(y.data(), y.size());
                ws.acts[l + 1] = std::move(y);
            } else {
                ws.out = std::move(y);
            }
        }
    }

    int T_;
    std::vector<size_t> data_shape_;
    size_t data_dim_ = 0;
    MlpConfig cfg_;
    std::vector<Dense> layers_;
    std::vector<double> t_embed_, t_embed_grad_;
    Dense cond_proj_;
};

struct DdpmTrainResult {
    MlpPredictor model;
    std::vector<double> loss_trace;  // batch-mean of ||eps_hat - eps||^2, one per step
};

// Standard denoising objective: draw (x0, t, eps), form the closed-form
// noised sample, regress the predictor onto eps. t is uniform in 1..T.
inline DdpmTrainResult ddpm_train(const NoiseSchedule& s, const std::vector<Tensor>& data,
                                  const TrainConfig& cfg, const MlpConfig& arch = {}) {
    if (data.empty()) throw std::invalid_argument("ddpm_train: empty data");
    for (const auto& x : data) require_same_shape(data.front(), x, "ddpm_train");
    if (cfg.steps == 0) throw std::invalid_argument("ddpm_train: steps must be >= 1");
    if (cfg.batch_size == 0) throw std::invalid_argument("ddpm_train: batch_size must be >= 1");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("ddpm_train: negative weight decay");

    MlpPredictor model(s.T(), data.front().shape(), arch, derive_seed(cfg.seed, kStreamMlpInit));
    SgdMomentum opt(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    auto params = model.params();
    Rng rng(derive_seed(cfg.seed, kStreamMlpBatch));

    std::vector<double> trace;
    trace.reserve(cfg.steps);
    const auto& shape = data.front().shape();
    const uint64_t T = static_cast<uint64_t>(s.T());

    for (size_t step = 0; step < cfg.steps; ++step) {
        double batch_loss = 0.0;
        for (size_t b = 0; b < cfg.batch_size; ++b) {
            const Tensor& x0 = data[rng.next_below(data.size())];
            int t = static_cast<int>(1 + rng.next_below(T));
            Tensor eps = gaussian(rng, shape);
            Tensor xt = forward_sample(s, x0, t, eps);
            batch_loss += model.loss_and_grad(xt, t, eps);
        }
        batch_loss /= static_cast<double>(cfg.batch_size);
        if (!std::isfinite(batch_loss))
            throw TrainingDiverged("ddpm_train: non-finite loss at step " + std::to_string(step),
                                   step);
        double inv = 1.0 / static_cast<double>(cfg.batch_size);
        for (auto& p : params)
            for (auto& g : *p.grad) g *= inv;
        opt.step(params);
        trace.push_back(batch_loss);
    }
    return DdpmTrainResult{std::move(model), std::move(trace)};
}

// Max relative deviation between analytic gradients of the denoising loss
// and central finite differences with step h.
inline double grad_check(MlpPredictor& model, const Tensor& x, int t, const Tensor& eps_target,
                         const Tensor* cond = nullptr, double h = 1e-5) {
    auto params = model.params();
    zero_grads(params);
    model.loss_and_grad(x, t, eps_target, cond);

    std::vector<std::vector<double>> analytic;
    for (auto& p : params) analytic.push_back(*p.grad);
    zero_grads(params);

    auto loss_at = [&]() {
        Tensor pred = model.eval(x, t, cond);
        return l2_sq(pred, eps_target);
    };

    double worst = 0.0;
    for (size_t p = 0; p < params.size(); ++p) {
        auto& value = *params[p].value;
        for (size_t i = 0; i < value.size(); ++i) {
            double saved = value[i];
            value[i] = saved + h;
            double lp = loss_at();
            value[i] = saved - h;
            double lm = loss_at();
            value[i] = saved;
            double cd = (lp - lm) / (2.0 * h);
            double a = analytic[p][i];
            double rel = std::abs(a - cd) / std::max({std::abs(a), std::abs(cd), 1e-8});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Checkpoint layout: "manifest" f64 vector
//   [version, T, ndim, data_shape..., t_embed_dim, cond_dim, n_hidden, hidden...]
// plus "beta", "layer{i}.w" [out, in], "layer{i}.b" [out], "t_embed" [T+1, d_t]
// and "cond_proj.w" [hidden0, cond_dim] when conditioned.
constexpr double kCheckpointVersion = 1.0;

inline void save_checkpoint(const std::string& path, const MlpPredictor& model,
                            const NoiseSchedule& s) {
    std::vector<ArchiveEntry> entries;

    std::vector<double> man{kCheckpointVersion, static_cast<double>(model.T()),
                            static_cast<double>(model.data_shape().size())};
    for (size_t d : model.data_shape()) man.push_back(static_cast<double>(d));
    man.push_back(static_cast<double>(model.config().t_embed_dim));
    man.push_back(static_cast<double>(model.config().cond_dim));
    man.push_back(static_cast<double>(model.config().hidden.size()));
    for (size_t w : model.config().hidden) man.push_back(static_cast<double>(w));
    entries.push_back({"manifest", Dtype::f64, Tensor::from_vector(man)});

    entries.push_back({"beta", Dtype::f64, Tensor::from_vector(s.betas())});

    const auto& layers = model.layers();
    for (size_t i = 0; i < layers.size(); ++i) {
        entries.push_back({"layer" + std::to_string(i) + ".w", Dtype::f64,
                           Tensor({layers[i].out, layers[i].in}, layers[i].w)});
        entries.push_back({"layer" + std::to_string(i) + ".b", Dtype::f64,
                           Tensor({layers[i].out}, layers[i].b)});
    }
    entries.push_back({"t_embed", Dtype::f64,
                       Tensor({static_cast<size_t>(model.T() + 1), model.config().t_embed_dim},
                              model.t_embed())});
    if (model.config().cond_dim > 0)
        entries.push_back({"cond_proj.w", Dtype::f64,
                           Tensor({model.cond_proj().out, model.cond_proj().in},
                                  model.cond_proj().w)});
    archive_write(path, entries);
}

struct Checkpoint {
    MlpPredictor model;
    NoiseSchedule schedule;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    auto entries = archive_read(path);
    const Tensor& man = archive_get(entries, "manifest");
    size_t at = 0;
    auto next = [&]() {
        if (at >= man.size()) throw FormatError("checkpoint: manifest too short");
        return man[at++];
    };
    if (next() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
    int T = static_cast<int>(next());
    size_t ndim = static_cast<size_t>(next());
    std::vector<size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<size_t>(next());
    MlpConfig cfg;
    cfg.t_embed_dim = static_cast<size_t>(next());
    cfg.cond_dim = static_cast<size_t>(next());
    size_t n_hidden = static_cast<size_t>(next());
    cfg.hidden.resize(n_hidden);
    for (auto& w : cfg.hidden) w = static_cast<size_t>(next());

    NoiseSchedule schedule(archive_get(entries, "beta").values());
    if (schedule.T() != T) throw FormatError("checkpoint: beta length disagrees with manifest T");

    MlpPredictor model(T, shape, cfg, /*init_seed=*/0);
    auto& layers = model.layers();
    for (size_t i = 0; i < layers.size(); ++i) {
        const Tensor& w = archive_get(entries, "layer" + std::to_string(i) + ".w");
        const Tensor& b = archive_get(entries, "layer" + std::to_string(i) + ".b");
        if (w.size() != layers[i].w.size() || b.size() != layers[i].b.size())
            throw FormatError("checkpoint: layer " + std::to_string(i) + " size mismatch");
        layers[i].w = w.values();
        layers[i].b = b.values();
    }
    const Tensor& te = archive_get(entries, "t_embed");
    if (te.size() != model.t_embed().size()) throw FormatError("checkpoint: t_embed size mismatch");
    model.t_embed() = te.values();
    if (cfg.cond_dim > 0) {
        const Tensor& cp = archive_get(entries, "cond_proj.w");
        if (cp.size() != model.cond_proj().w.size())
            throw FormatError("checkpoint: cond_proj size mismatch");
        model.cond_proj().w = cp.values();
    }
    return Checkpoint{std::move(model), std::move(schedule)};
}

}  // namespace sedid
