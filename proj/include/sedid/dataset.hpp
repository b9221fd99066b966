#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/rng.hpp"
#include "sedid/tensor.hpp"

namespace sedid {

enum class ToyKind { gauss_mixture, ring, bars8x8 };

inline ToyKind toy_kind_from_string(const std::string& s) {
    if (s == "gauss_mixture") return ToyKind::gauss_mixture;
    if (s == "ring") return ToyKind::ring;
    if (s == "bars8x8") return ToyKind::bars8x8;
    throw std::invalid_argument("unknown toy dataset '" + s + "'");
}

inline const char* to_string(ToyKind k) {
    switch (k) {
        case ToyKind::gauss_mixture: return "gauss_mixture";
        case ToyKind::ring: return "ring";
        default: return "bars8x8";
    }
}

// Dataset-wide normalization convention: mean 0.5, std 0.5 per channel,
// i.e. x -> (x - 0.5) / 0.5.
inline double normalize_unit(double raw) { return (raw - 0.5) / 0.5; }

// Deterministic synthetic datasets, emitted already normalized.
//   gauss_mixture: 2-D, four isotropic components on a grid, sigma 0.04
//   ring:          2-D annulus around the origin, raw radius in [0.8, 1.2]
//   bars8x8:       binary 8x8 images of random horizontal or vertical bars
inline std::vector<Tensor> make_toy_dataset(ToyKind kind, size_t n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("make_toy_dataset: n must be >= 1");
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(n);

    switch (kind) {
        case ToyKind::gauss_mixture: {
            static const double cx[4] = {0.35, 0.35, 0.65, 0.65};
            static const double cy[4] = {0.35, 0.65, 0.35, 0.65};
            for (size_t i = 0; i < n; ++i) {
                size_t c = rng.next_below(4);
                double x = cx[c] + 0.04 * rng.next_normal();
                double y = cy[c] + 0.04 * rng.next_normal();
                out.push_back(Tensor({2}, {normalize_unit(x), normalize_unit(y)}));
            }
            break;
        }
        case ToyKind::ring: {
            for (size_t i = 0; i < n; ++i) {
                double theta = 2.0 * std::numbers::pi * rng.next_double();
                double r = 0.8 + 0.4 * rng.next_double();
                double x = r * std::cos(theta);
                double y = r * std::sin(theta);
                out.push_back(Tensor({2}, {normalize_unit(x), normalize_unit(y)}));
            }
            break;
        }
        case ToyKind::bars8x8: {
            for (size_t i = 0; i < n; ++i) {
                Tensor img({8, 8});
                bool horizontal = rng.next_below(2) == 0;
                uint64_t mask = rng.next_below(256);
                for (size_t r = 0; r < 8; ++r)
                    for (size_t c = 0; c < 8; ++c) {
                        bool on = (mask >> (horizontal ? r : c)) & 1;
                        img[r * 8 + c] = normalize_unit(on ? 1.0 : 0.0);
                    }
                out.push_back(std::move(img));
            }
            break;
        }
    }
    return out;
}

}  // namespace sedid
