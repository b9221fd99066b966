#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/archive.hpp"
#include "sedid/core.hpp"
#include "sedid/errors.hpp"
#include "sedid/nn.hpp"
#include "sedid/profile_io.hpp"
#include "sedid/rng.hpp"

namespace sedid {

struct NnTrainConfig {
    size_t epochs = 20;
    double learning_rate = 0.001;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    size_t batch_size = 128;
    double train_fraction = 0.1;
    uint64_t seed = 0;
    std::vector<size_t> hidden{256, 64};
};

constexpr uint64_t kStreamSplit = 0x41;
constexpr uint64_t kStreamNnInit = 0x42;
constexpr uint64_t kStreamNnShuffle = 0x43;

// Classifier input: both chain states at t_se plus the squared residual the
// statistical branch thresholds, concatenated and flattened.
inline Tensor build_input(const NoiseProfile& profile) {
    const Tensor& a = profile.x_tilde_t;
    const Tensor& b = profile.x_recon;
    const Tensor& r = profile.residual;
    require_same_shape(a, b, "build_input");
    require_same_shape(a, r, "build_input");
    Tensor out({3 * a.size()});
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i];
    for (size_t i = 0; i < b.size(); ++i) out[a.size() + i] = b[i];
    for (size_t i = 0; i < r.size(); ++i) out[2 * a.size() + i] = r[i] * r[i];
    return out;
}

// Two-way fully connected classifier over a flattened profile input. The
// profile features span several orders of magnitude (chain states are O(1),
// squared residuals can be 1e-4 and below), so the net owns an input
// standardizer; training fits it on the training split.
class ClassifierNet {
public:
    enum class Init { random, zeros };

    ClassifierNet(size_t input_dim, std::vector<size_t> hidden, uint64_t seed,
                  Init init = Init::random)
        : input_dim_(input_dim), hidden_(std::move(hidden)), shift_(input_dim, 0.0),
          inv_scale_(input_dim, 1.0) {
        if (input_dim_ == 0) throw std::invalid_argument("ClassifierNet: zero input dim");
        Rng rng(seed);
        size_t in = input_dim_;
        for (size_t width : hidden_) {
            layers_.push_back(make_dense(in, width, rng));
            in = width;
        }
        layers_.push_back(make_dense(in, 2, rng));
        if (init == Init::zeros)
            for (auto& l : layers_) std::fill(l.w.begin(), l.w.end(), 0.0);
    }

    size_t input_dim() const { return input_dim_; }
    const std::vector<size_t>& hidden() const { return hidden_; }

    // x -> (x - mean) / std, fixed at fit time; not a trained parameter.
    void set_standardizer(std::vector<double> mean, std::vector<double> std_dev) {
        if (mean.size() != input_dim_ || std_dev.size() != input_dim_)
            throw std::invalid_argument("ClassifierNet: standardizer size mismatch");
        shift_ = std::move(mean);
        inv_scale_.resize(input_dim_);
        for (size_t i = 0; i < input_dim_; ++i)
            inv_scale_[i] = 1.0 / std::max(std_dev[i], 1e-12);
    }

    const std::vector<double>& standardizer_shift() const { return shift_; }
    const std::vector<double>& standardizer_inv_scale() const { return inv_scale_; }

    // Bit-exact restore from a checkpoint.
    void set_standardizer_raw(std::vector<double> shift, std::vector<double> inv_scale) {
        if (shift.size() != input_dim_ || inv_scale.size() != input_dim_)
            throw std::invalid_argument("ClassifierNet: standardizer size mismatch");
        shift_ = std::move(shift);
        inv_scale_ = std::move(inv_scale);
    }

    std::array<double, 2> logits(const Tensor& input) const {
        std::vector<double> a = standardize(input);
        for (size_t l = 0; l < layers_.size(); ++l) {
            std::vector<double> y(layers_[l].out);
            dense_forward(layers_[l], a.data(), y.data());
            if (l + 1 < layers_.size()) tanh_inplace(y.data(), y.size());
            a = std::move(y);
        }
        return {a[0], a[1]};
    }

    // Max-subtracted for stability at large logit magnitudes.
    static std::array<double, 2> softmax(const std::array<double, 2>& logit) {
        double m = std::max(logit[0], logit[1]);
        double e0 = std::exp(logit[0] - m);
        double e1 = std::exp(logit[1] - m);
        double z = e0 + e1;
        return {e0 / z, e1 / z};
    }

    // Probability of "generated".
    double score(const Tensor& input) const { return softmax(logits(input))[1]; }

    // Cross-entropy on the softmax outputs; accumulates gradients.
    double loss_and_grad(const Tensor& input, int label) {
        if (label != 0 && label != 1)
            throw std::invalid_argument("ClassifierNet: label must be 0 or 1");

        std::vector<std::vector<double>> acts(layers_.size());
        acts[0] = standardize(input);
        std::vector<double> out;
        for (size_t l = 0; l < layers_.size(); ++l) {
            std::vector<double> y(layers_[l].out);
            dense_forward(layers_[l], acts[l].data(), y.data());
            if (l + 1 < layers_.size()) {
                tanh_inplace(y.data(), y.size());
                acts[l + 1] = std::move(y);
            } else {
                out = std::move(y);
            }
        }

        double m = std::max(out[0], out[1]);
        double lse = m + std::log(std::exp(out[0] - m) + std::exp(out[1] - m));
        double loss = lse - out[label];

        auto prob = softmax({out[0], out[1]});
        std::vector<double> dnext{prob[0], prob[1]};
        dnext[static_cast<size_t>(label)] -= 1.0;
        for (size_t l = layers_.size(); l-- > 0;) {
            std::vector<double> dprev(layers_[l].in);
            dense_backward(layers_[l], acts[l].data(), dnext.data(), dprev.data());
            if (l == 0) break;
            tanh_backward(acts[l].data(), dprev.data(), layers_[l].in);
            dnext = std::move(dprev);
        }
        return loss;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> out;
        for (auto& l : layers_) {
            out.push_back({&l.w, &l.gw});
            out.push_back({&l.b, &l.gb});
        }
        return out;
    }

    std::vector<Dense>& layers() { return layers_; }
    const std::vector<Dense>& layers() const { return layers_; }

private:
    std::vector<double> standardize(const Tensor& input) const {
        if (input.size() != input_dim_)
            throw std::invalid_argument("ClassifierNet: input length " +
                                        std::to_string(input.size()) + " != " +
                                        std::to_string(input_dim_));
        std::vector<double> a(input_dim_);
        for (size_t i = 0; i < input_dim_; ++i)
            a[i] = (input[i] - shift_[i]) * inv_scale_[i];
        return a;
    }

    size_t input_dim_;
    std::vector<size_t> hidden_;
    std::vector<Dense> layers_;
    std::vector<double> shift_, inv_scale_;
};

// Seed-deterministic stratified split taking exactly floor(fraction * N)
// items. Per-class quotas are floor(fraction * N_c); the remainder, if any,
// goes to the classes with the largest fractional parts (ties by label).
inline std::pair<std::vector<size_t>, std::vector<size_t>> stratified_split(
    const std::vector<int>& labels, double fraction, uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("stratified_split: fraction outside (0, 1]");
    const size_t n = labels.size();
    size_t n_train = static_cast<size_t>(fraction * static_cast<double>(n));

    std::map<int, std::vector<size_t>> by_label;
    for (size_t i = 0; i < n; ++i) by_label[labels[i]].push_back(i);

    std::map<int, size_t> quota;
    std::vector<std::pair<double, int>> remainders;  // (-frac_part, label)
    size_t assigned = 0;
    for (auto& [label, idx] : by_label) {
        double exact = fraction * static_cast<double>(idx.size());
        size_t q = static_cast<size_t>(exact);
        quota[label] = q;
        assigned += q;
        remainders.emplace_back(-(exact - static_cast<double>(q)), label);
    }
    std::sort(remainders.begin(), remainders.end());
    for (auto& [negrem, label] : remainders) {
        if (assigned >= n_train) break;
        if (quota[label] < by_label[label].size()) {
            quota[label]++;
            assigned++;
        }
    }

    std::vector<size_t> train, holdout;
    for (auto& [label, idx] : by_label) {
        Rng rng(derive_seed(seed, kStreamSplit, static_cast<uint64_t>(label)));
        for (size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[rng.next_below(i)]);
        for (size_t i = 0; i < idx.size(); ++i)
            (i < quota[label] ? train : holdout).push_back(idx[i]);
    }
    std::sort(train.begin(), train.end());
    std::sort(holdout.begin(), holdout.end());
    return {std::move(train), std::move(holdout)};
}

struct NnTrainResult {
    ClassifierNet net;
    std::vector<double> loss_trace;  // mean cross-entropy per epoch
    std::vector<size_t> train_idx, holdout_idx;
};

inline NnTrainResult nn_train(const std::vector<ProfileRecord>& profiles,
                              const NnTrainConfig& cfg) {
    if (profiles.empty()) throw std::invalid_argument("nn_train: no profiles");
    if (cfg.epochs == 0) throw std::invalid_argument("nn_train: epochs must be >= 1");
    if (cfg.batch_size == 0) throw std::invalid_argument("nn_train: batch_size must be >= 1");
    if (cfg.weight_decay < 0.0) throw std::invalid_argument("nn_train: negative weight decay");

    std::vector<int> labels;
    for (const auto& r : profiles) {
        if (r.label != 0 && r.label != 1)
            throw std::invalid_argument("nn_train: profile '" + r.id + "' is unlabeled");
        labels.push_back(r.label);
    }
    auto [train_idx, holdout_idx] = stratified_split(labels, cfg.train_fraction, cfg.seed);

    bool has0 = false, has1 = false;
    for (size_t i : train_idx) (labels[i] ? has1 : has0) = true;
    if (!has0 || !has1)
        throw std::invalid_argument("nn_train: training split lacks one class");

    std::vector<Tensor> inputs;
    inputs.reserve(profiles.size());
    for (const auto& r : profiles) inputs.push_back(build_input(r.profile));

    ClassifierNet net(inputs.front().size(), cfg.hidden, derive_seed(cfg.seed, kStreamNnInit));

    // Standardizer fitted on the training split only.
    {
        const size_t dim = inputs.front().size();
        const double n = static_cast<double>(train_idx.size());
        std::vector<double> mean(dim, 0.0), std_dev(dim, 0.0);
        for (size_t i : train_idx)
            for (size_t j = 0; j < dim; ++j) mean[j] += inputs[i][j];
        for (size_t j = 0; j < dim; ++j) mean[j] /= n;
        for (size_t i : train_idx)
            for (size_t j = 0; j < dim; ++j) {
                double d = inputs[i][j] - mean[j];
                std_dev[j] += d * d;
            }
        for (size_t j = 0; j < dim; ++j) std_dev[j] = std::sqrt(std_dev[j] / n);
        net.set_standardizer(std::move(mean), std_dev);
    }

    SgdMomentum opt(cfg.learning_rate, cfg.momentum, cfg.weight_decay);
    auto params = net.params();
    Rng shuffle_rng(derive_seed(cfg.seed, kStreamNnShuffle));

    std::vector<double> trace;
    std::vector<size_t> order = train_idx;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);
        double epoch_loss = 0.0;
        size_t done = 0;
        while (done < order.size()) {
            size_t take = std::min(cfg.batch_size, order.size() - done);
            double batch_loss = 0.0;
            for (size_t b = 0; b < take; ++b) {
                size_t i = order[done + b];
                batch_loss += net.loss_and_grad(inputs[i], labels[i]);
            }
            double inv = 1.0 / static_cast<double>(take);
            for (auto& p : params)
                for (auto& g : *p.grad) g *= inv;
            opt.step(params);
            epoch_loss += batch_loss;
            done += take;
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            throw TrainingDiverged("nn_train: non-finite loss at epoch " + std::to_string(epoch),
                                   epoch);
        trace.push_back(epoch_loss);
    }
    return NnTrainResult{std::move(net), std::move(trace), std::move(train_idx),
                         std::move(holdout_idx)};
}

inline double nn_score(const ClassifierNet& net, const NoiseProfile& profile) {
    return net.score(build_input(profile));
}

// Classifier checkpoint: manifest [version, input_dim, n_hidden, hidden...]
// plus layer{i}.w / layer{i}.b.
constexpr double kClassifierVersion = 1.0;

inline void save_classifier(const std::string& path, const ClassifierNet& net) {
    std::vector<double> man{kClassifierVersion, static_cast<double>(net.input_dim()),
                            static_cast<double>(net.hidden().size())};
    for (size_t w : net.hidden()) man.push_back(static_cast<double>(w));
    std::vector<ArchiveEntry> entries;
    entries.push_back({"manifest", Dtype::f64, Tensor::from_vector(man)});
    entries.push_back(
        {"input_shift", Dtype::f64, Tensor::from_vector(net.standardizer_shift())});
    entries.push_back(
        {"input_inv_scale", Dtype::f64, Tensor::from_vector(net.standardizer_inv_scale())});
    const auto& layers = net.layers();
    for (size_t i = 0; i < layers.size(); ++i) {
        entries.push_back({"layer" + std::to_string(i) + ".w", Dtype::f64,
                           Tensor({layers[i].out, layers[i].in}, layers[i].w)});
        entries.push_back({"layer" + std::to_string(i) + ".b", Dtype::f64,
                           Tensor({layers[i].out}, layers[i].b)});
    }
    archive_write(path, entries);
}

inline ClassifierNet load_classifier(const std::string& path) {
    auto entries = archive_read(path);
    const Tensor& man = archive_get(entries, "manifest");
    if (man.size() < 3 || man[0] != kClassifierVersion)
        throw FormatError("classifier checkpoint: bad manifest");
    size_t input_dim = static_cast<size_t>(man[1]);
    size_t n_hidden = static_cast<size_t>(man[2]);
    if (man.size() != 3 + n_hidden) throw FormatError("classifier checkpoint: manifest too short");
    std::vector<size_t> hidden(n_hidden);
    for (size_t i = 0; i < n_hidden; ++i) hidden[i] = static_cast<size_t>(man[3 + i]);

    ClassifierNet net(input_dim, hidden, 0);
    net.set_standardizer_raw(archive_get(entries, "input_shift").values(),
                             archive_get(entries, "input_inv_scale").values());
    auto& layers = net.layers();
    for (size_t i = 0; i < layers.size(); ++i) {
        const Tensor& w = archive_get(entries, "layer" + std::to_string(i) + ".w");
        const Tensor& b = archive_get(entries, "layer" + std::to_string(i) + ".b");
        if (w.size() != layers[i].w.size() || b.size() != layers[i].b.size())
            throw FormatError("classifier checkpoint: layer " + std::to_string(i) +
                              " size mismatch");
        layers[i].w = w.values();
        layers[i].b = b.values();
    }
    return net;
}

}  // namespace sedid
