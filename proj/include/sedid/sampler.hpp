#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/archive.hpp"
#include "sedid/core.hpp"
#include "sedid/errors.hpp"
#include "sedid/fsio.hpp"
#include "sedid/predictor.hpp"
#include "sedid/rng.hpp"
#include "sedid/schedule.hpp"

namespace sedid {

enum class SamplerMode { ancestral, ddim };

inline const char* to_string(SamplerMode m) {
    return m == SamplerMode::ancestral ? "ancestral" : "ddim";
}

inline SamplerMode sampler_mode_from_string(const std::string& s) {
    if (s == "ancestral") return SamplerMode::ancestral;
    if (s == "ddim") return SamplerMode::ddim;
    throw std::invalid_argument("unknown sampler mode '" + s + "'");
}

struct SamplerConfig {
    SamplerMode mode = SamplerMode::ancestral;
    int ddim_stepsize = 1;
    uint64_t seed = 0;
    size_t count = 1;
    bool beta_tilde_variance = false;
};

struct AncestralOptions {
    bool beta_tilde_variance = false;  // sigma_t^2 = beta_tilde_t instead of beta_t
};

constexpr uint64_t kStreamSample = 0x21;

// Stochastic denoising recursion from a given x at t = T down to t = 0.
// rng == nullptr forces z = 0 throughout (the deterministic mean recursion);
// otherwise z = 0 only at the final step.
inline Tensor ancestral_chain(const NoisePredictor& p, const NoiseSchedule& s, Tensor x, Rng* rng,
                              const AncestralOptions& opts = {}) {
    for (int t = s.T(); t >= 1; --t) {
        Tensor eps = p.eval(x, t);
        double a = s.alpha(t);
        double coef = s.beta(t) / std::sqrt(1.0 - s.alpha_bar(t));
        x = lincomb(1.0 / std::sqrt(a), x, -coef / std::sqrt(a), eps);
        if (t > 1 && rng) {
            double var = opts.beta_tilde_variance
                             ? (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t)
                             : s.beta(t);
            Tensor z = gaussian(*rng, x.shape());
            x = lincomb(1.0, x, std::sqrt(var), z);
        }
        if (!x.all_finite())
            throw SamplerDiverged("ancestral sampling: non-finite state at t=" + std::to_string(t),
                                  t);
    }
    return x;
}

inline Tensor sample_ancestral(const NoisePredictor& p, const NoiseSchedule& s, Rng& rng,
                               const std::vector<size_t>& shape,
                               const AncestralOptions& opts = {}) {
    Tensor x = gaussian(rng, shape);
    return ancestral_chain(p, s, std::move(x), &rng, opts);
}

// Deterministic denoising from a given x at t = T: psi applied down the grid
// T, T - delta, ..., delta. Requires the grid to terminate exactly at 0.
inline Tensor ddim_chain(const NoisePredictor& p, const NoiseSchedule& s, Tensor x, int delta) {
    if (delta < 1 || s.T() % delta != 0)
        throw std::invalid_argument("ddim_chain: timestep grid must end at 0 (T mod delta == 0)");
    for (int t = s.T(); t >= delta; t -= delta) {
        x = psi(p, s, x, t, delta);
        if (!x.all_finite())
            throw SamplerDiverged("ddim sampling: non-finite state at t=" + std::to_string(t), t);
    }
    return x;
}

inline Tensor sample_ddim(const NoisePredictor& p, const NoiseSchedule& s, Rng& rng,
                          const std::vector<size_t>& shape, int delta) {
    Tensor x = gaussian(rng, shape);
    return ddim_chain(p, s, std::move(x), delta);
}

// Independent samples with per-sample substreams derived from (seed, index).
inline std::vector<Tensor> generate_set(const NoisePredictor& p, const NoiseSchedule& s,
                                        const SamplerConfig& cfg,
                                        const std::vector<size_t>& shape) {
    std::vector<Tensor> out;
    out.reserve(cfg.count);
    for (size_t i = 0; i < cfg.count; ++i) {
        Rng rng(derive_seed(cfg.seed, kStreamSample, i));
        if (cfg.mode == SamplerMode::ancestral) {
            out.push_back(sample_ancestral(p, s, rng, shape, {cfg.beta_tilde_variance}));
        } else {
            out.push_back(sample_ddim(p, s, rng, shape, cfg.ddim_stepsize));
        }
    }
    return out;
}

// Sample-set manifest layout: [version, mode, delta, count,
//   seed_hi, seed_lo, checksum_hi, checksum_lo] with 64-bit values split
// into exact 32-bit halves.
constexpr double kSampleSetVersion = 1.0;

inline void split_u64(uint64_t v, double& hi, double& lo) {
    hi = static_cast<double>(v >> 32);
    lo = static_cast<double>(v & 0xFFFFFFFFull);
}

inline uint64_t join_u64(double hi, double lo) {
    return (static_cast<uint64_t>(hi) << 32) | static_cast<uint64_t>(lo);
}

inline void write_sample_set(const std::string& path, const std::vector<Tensor>& samples,
                             const SamplerConfig& cfg, uint64_t model_checksum) {
    std::vector<double> man{kSampleSetVersion, static_cast<double>(cfg.mode == SamplerMode::ddim),
                            static_cast<double>(cfg.ddim_stepsize),
                            static_cast<double>(samples.size()), 0, 0, 0, 0};
    split_u64(cfg.seed, man[4], man[5]);
    split_u64(model_checksum, man[6], man[7]);

    std::vector<ArchiveEntry> entries;
    entries.push_back({"manifest", Dtype::f64, Tensor::from_vector(man)});
    for (size_t i = 0; i < samples.size(); ++i)
        entries.push_back({"sample" + std::to_string(i), Dtype::f64, samples[i]});
    archive_write(path, entries);
}

inline std::vector<Tensor> read_sample_set(const std::string& path) {
    auto entries = archive_read(path);
    const Tensor& man = archive_get(entries, "manifest");
    if (man.size() < 8 || man[0] != kSampleSetVersion)
        throw FormatError("sample set: bad manifest");
    size_t count = static_cast<size_t>(man[3]);
    std::vector<Tensor> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i)
        out.push_back(archive_get(entries, "sample" + std::to_string(i)));
    return out;
}

}  // namespace sedid
