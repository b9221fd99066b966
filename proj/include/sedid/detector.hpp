#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sedid/errors.hpp"
#include "sedid/fsio.hpp"
#include "sedid/predictor.hpp"
#include "sedid/rng.hpp"
#include "sedid/schedule.hpp"
#include "sedid/tensor.hpp"

namespace sedid {

enum class SampleClass : int { real = 0, generated = 1 };

// Which side of the threshold counts as "generated". The raw rule is
// generated-if-less (small error = familiar = generated), but the separation
// direction flips with t_se, so calibration searches both.
enum class Orientation { generated_if_less, generated_if_greater };

inline const char* to_string(Orientation o) {
    return o == Orientation::generated_if_less ? "generated_if_less" : "generated_if_greater";
}

inline Orientation orientation_from_string(const std::string& s) {
    if (s == "generated_if_less") return Orientation::generated_if_less;
    if (s == "generated_if_greater") return Orientation::generated_if_greater;
    throw std::invalid_argument("unknown orientation '" + s + "'");
}

struct ScoredSample {
    std::string id;
    double score = 0.0;
    int label = -1;  // 0 real, 1 generated, -1 unknown
};

struct Threshold {
    double h = 0.0;
    Orientation orientation = Orientation::generated_if_less;
};

// Strict comparison on both sides, mirroring the indicator rule.
inline SampleClass classify(const ScoredSample& sample, const Threshold& th) {
    bool generated = th.orientation == Orientation::generated_if_less ? sample.score < th.h
                                                                      : sample.score > th.h;
    return generated ? SampleClass::generated : SampleClass::real;
}

struct Calibration {
    Threshold threshold;
    double best_acc = 0.0;
};

// Exhaustive scan over the achievable confusion matrices: candidate
// thresholds are midpoints of adjacent distinct sorted scores plus sentinels
// below the minimum and above the maximum (finite stand-ins for -inf/+inf),
// under both orientations. Ties resolve to the smaller threshold, then to
// generated_if_less.
inline Calibration calibrate(const std::vector<ScoredSample>& scores) {
    std::vector<std::pair<double, int>> labeled;  // (score, label)
    size_t n_gen = 0, n_real = 0;
    for (const auto& s : scores) {
        if (s.label != 0 && s.label != 1) continue;
        labeled.emplace_back(s.score, s.label);
        (s.label == 1 ? n_gen : n_real)++;
    }
    if (n_gen == 0 || n_real == 0)
        throw DegenerateCalibration("calibrate: need both classes, got " +
                                    std::to_string(n_gen) + " generated / " +
                                    std::to_string(n_real) + " real");

    std::sort(labeled.begin(), labeled.end());
    const size_t n = labeled.size();

    // Candidate cut positions: block boundaries in the sorted order. Cut k
    // means "the first k samples score below the threshold".
    std::vector<size_t> cuts{0};
    std::vector<double> cut_h{labeled.front().first - 1.0};
    for (size_t i = 1; i < n; ++i) {
        if (labeled[i].first > labeled[i - 1].first) {
            cuts.push_back(i);
            cut_h.push_back(0.5 * (labeled[i - 1].first + labeled[i].first));
        }
    }
    cuts.push_back(n);
    cut_h.push_back(labeled.back().first + 1.0);

    // Prefix counts of generated labels.
    std::vector<size_t> gen_prefix(n + 1, 0);
    for (size_t i = 0; i < n; ++i) gen_prefix[i + 1] = gen_prefix[i] + (labeled[i].second == 1);

    Calibration best;
    bool have_best = false;
    auto consider = [&](double acc, double h, Orientation o) {
        if (!have_best || acc > best.best_acc ||
            (acc == best.best_acc &&
             (h < best.threshold.h ||
              (h == best.threshold.h && o == Orientation::generated_if_less &&
               best.threshold.orientation == Orientation::generated_if_greater)))) {
            best = {{h, o}, acc};
            have_best = true;
        }
    };

    for (size_t c = 0; c < cuts.size(); ++c) {
        size_t k = cuts[c];
        size_t gen_below = gen_prefix[k];
        size_t real_below = k - gen_below;
        // generated_if_less: below-threshold predicted generated
        size_t correct_less = gen_below + (n_real - real_below);
        // generated_if_greater: above-threshold predicted generated
        size_t correct_greater = (n_gen - gen_below) + real_below;
        consider(static_cast<double>(correct_less) / static_cast<double>(n), cut_h[c],
                 Orientation::generated_if_less);
        consider(static_cast<double>(correct_greater) / static_cast<double>(n), cut_h[c],
                 Orientation::generated_if_greater);
    }
    return best;
}

constexpr uint64_t kStreamBaseline = 0x31;

// Reference detector: squared distance between a fresh noise draw and the
// model's prediction on the corresponding noised sample.
inline double baseline_score(const NoisePredictor& p, const NoiseSchedule& s, const Tensor& x0,
                             int t, Rng& rng) {
    if (t < 1 || t > s.T())
        throw std::invalid_argument("baseline_score: timestep " + std::to_string(t) +
                                    " outside [1, " + std::to_string(s.T()) + "]");
    Tensor eps = gaussian(rng, x0.shape());
    Tensor xt = forward_sample(s, x0, t, eps);
    return l2_sq(eps, p.eval(xt, t));
}

// Scores CSV: header id,label,score; label column empty when unknown.
inline std::string scores_to_csv(const std::vector<ScoredSample>& scores) {
    std::string out = "id,label,score\n";
    for (const auto& s : scores) {
        out += s.id;
        out += ',';
        if (s.label >= 0) out += std::to_string(s.label);
        out += ',';
        out += double_to_string(s.score);
        out += '\n';
    }
    return out;
}

inline void write_scores_csv(const std::string& path, const std::vector<ScoredSample>& scores) {
    atomic_write_bytes(path, scores_to_csv(scores));
}

inline std::vector<ScoredSample> read_scores_csv(const std::string& path) {
    std::istringstream in(read_file_bytes(path));
    std::string line;
    if (!std::getline(in, line) || line != "id,label,score")
        throw FormatError("scores csv: bad header in " + path);
    std::vector<ScoredSample> out;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        size_t c1 = line.find(',');
        size_t c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw FormatError("scores csv: malformed line " + std::to_string(lineno) + " in " +
                              path);
        ScoredSample s;
        s.id = line.substr(0, c1);
        std::string label = line.substr(c1 + 1, c2 - c1 - 1);
        s.label = label.empty() ? -1 : std::stoi(label);
        s.score = std::stod(line.substr(c2 + 1));
        if (!std::isfinite(s.score))
            throw FormatError("scores csv: non-finite score at line " + std::to_string(lineno));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace sedid
