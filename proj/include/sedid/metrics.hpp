#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sedid/detector.hpp"
#include "sedid/errors.hpp"
#include "sedid/fsio.hpp"

namespace sedid {

namespace detail {

struct SplitScores {
    std::vector<double> pos, neg;  // generated / real
};

inline SplitScores split_by_label(const std::vector<ScoredSample>& scores, const char* who) {
    SplitScores out;
    for (const auto& s : scores) {
        if (s.label == 1)
            out.pos.push_back(s.score);
        else if (s.label == 0)
            out.neg.push_back(s.score);
    }
    if (out.pos.empty() || out.neg.empty())
        throw UndefinedMetric(std::string(who) + ": need both classes");
    return out;
}

}  // namespace detail

// Rank statistic: probability that a generated score beats a real score in
// the orientation's direction, ties counted one half. Numerators stay exact
// half-integers, so this matches the pairwise definition bit for bit.
inline double auc(const std::vector<ScoredSample>& scores, Orientation orientation) {
    auto split = detail::split_by_label(scores, "auc");
    const size_t np = split.pos.size(), nn = split.neg.size();

    std::vector<std::pair<double, int>> all;  // (score, is_pos)
    all.reserve(np + nn);
    for (double v : split.pos) all.emplace_back(v, 1);
    for (double v : split.neg) all.emplace_back(v, 0);
    std::sort(all.begin(), all.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Average ranks over tie blocks; ranks are 1-based.
    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < all.size()) {
        size_t j = i + 1;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (size_t k = i; k < j; ++k)
            if (all[k].second) pos_rank_sum += avg_rank;
        i = j;
    }

    double pairs = static_cast<double>(np) * static_cast<double>(nn);
    double num_greater = pos_rank_sum - 0.5 * static_cast<double>(np) * static_cast<double>(np + 1);
    double num = orientation == Orientation::generated_if_greater ? num_greater
                                                                  : pairs - num_greater;
    return num / pairs;
}

// Operating points of the threshold family, most-generated-first: one point
// per distinct score plus the endpoints (0,0) and (1,1).
inline std::vector<std::pair<double, double>> roc_curve(const std::vector<ScoredSample>& scores,
                                                        Orientation orientation) {
    auto split = detail::split_by_label(scores, "roc_curve");
    const double np = static_cast<double>(split.pos.size());
    const double nn = static_cast<double>(split.neg.size());

    std::vector<std::pair<double, int>> all;
    for (double v : split.pos) all.emplace_back(v, 1);
    for (double v : split.neg) all.emplace_back(v, 0);
    bool ascending = orientation == Orientation::generated_if_less;
    std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
        return ascending ? a.first < b.first : a.first > b.first;
    });

    std::vector<std::pair<double, double>> roc{{0.0, 0.0}};
    size_t tp = 0, fp = 0, i = 0;
    while (i < all.size()) {
        size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) {
            (all[j].second ? tp : fp)++;
            ++j;
        }
        roc.emplace_back(static_cast<double>(fp) / nn, static_cast<double>(tp) / np);
        i = j;
    }
    return roc;
}

inline double roc_trapezoid_area(const std::vector<std::pair<double, double>>& roc) {
    double area = 0.0;
    for (size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].first - roc[i - 1].first) * 0.5 * (roc[i].second + roc[i - 1].second);
    return area;
}

// Max TPR among operating points whose empirical FPR does not exceed the
// target; no interpolation between points.
inline double tpr_at_fpr(const std::vector<ScoredSample>& scores, double target_fpr,
                         Orientation orientation) {
    if (!(target_fpr > 0.0 && target_fpr < 1.0))
        throw std::invalid_argument("tpr_at_fpr: target_fpr outside (0, 1)");
    auto roc = roc_curve(scores, orientation);
    double best = 0.0;
    for (const auto& [fpr, tpr] : roc)
        if (fpr <= target_fpr) best = std::max(best, tpr);
    return best;
}

struct MetricsReport {
    double auc = 0.0;      // under the calibrated orientation
    double auc_raw = 0.0;  // orientation-locked: generated_if_less
    double best_acc = 0.0;
    Orientation orientation = Orientation::generated_if_less;
    double tpr_at_1pct = 0.0;
    double tpr_at_01pct = 0.0;
    std::vector<std::pair<double, double>> roc;
};

inline MetricsReport compute_metrics(const std::vector<ScoredSample>& scores) {
    Calibration cal = calibrate(scores);
    MetricsReport report;
    report.orientation = cal.threshold.orientation;
    report.best_acc = cal.best_acc;
    report.auc = auc(scores, report.orientation);
    report.auc_raw = auc(scores, Orientation::generated_if_less);
    report.tpr_at_1pct = tpr_at_fpr(scores, 0.01, report.orientation);
    report.tpr_at_01pct = tpr_at_fpr(scores, 0.001, report.orientation);
    report.roc = roc_curve(scores, report.orientation);
    return report;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
    return nlohmann::json{{"auc", r.auc},
                          {"auc_raw", r.auc_raw},
                          {"best_acc", r.best_acc},
                          {"orientation", to_string(r.orientation)},
                          {"tpr_at_fpr", {{"0.01", r.tpr_at_1pct}, {"0.001", r.tpr_at_01pct}}}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
    MetricsReport r;
    r.auc = j.at("auc").get<double>();
    r.auc_raw = j.at("auc_raw").get<double>();
    r.best_acc = j.at("best_acc").get<double>();
    r.orientation = orientation_from_string(j.at("orientation").get<std::string>());
    r.tpr_at_1pct = j.at("tpr_at_fpr").at("0.01").get<double>();
    r.tpr_at_01pct = j.at("tpr_at_fpr").at("0.001").get<double>();
    return r;
}

inline void write_roc_csv(const std::string& path,
                          const std::vector<std::pair<double, double>>& roc) {
    std::string out = "fpr,tpr\n";
    for (const auto& [fpr, tpr] : roc)
        out += double_to_string(fpr) + "," + double_to_string(tpr) + "\n";
    atomic_write_bytes(path, out);
}

}  // namespace sedid
