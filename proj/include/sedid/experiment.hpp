#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sedid/classifier.hpp"
#include "sedid/core.hpp"
#include "sedid/dataset.hpp"
#include "sedid/detector.hpp"
#include "sedid/fsio.hpp"
#include "sedid/metrics.hpp"
#include "sedid/mlp.hpp"
#include "sedid/profile_io.hpp"
#include "sedid/sampler.hpp"

namespace sedid {

constexpr uint64_t kStreamData = 0x51;
constexpr uint64_t kStreamGen = 0x52;
constexpr uint64_t kStreamBaselineCell = 0x53;
constexpr uint64_t kStreamNnCell = 0x54;
constexpr uint64_t kStreamCompare = 0x55;

struct ExperimentSpec {
    std::string dataset = "ring";
    std::string checkpoint;
    std::vector<int> t_se_grid;  // empty: multiples of delta from 0 up to T - delta
    std::vector<int> delta_grid{5, 10, 20, 25};
    size_t n_real = 512;
    size_t n_generated = 512;
    uint64_t seed = 0;
    std::vector<std::string> detectors{"stat"};
    SamplerMode gen_mode = SamplerMode::ancestral;
    int gen_ddim_stepsize = 1;
    NnTrainConfig nn;
    size_t jobs = 1;

    void validate() const {
        if (n_real < 2 || n_generated < 2)
            throw std::invalid_argument("ExperimentSpec: need at least 2 samples per class");
        if (delta_grid.empty()) throw std::invalid_argument("ExperimentSpec: empty delta grid");
        if (jobs < 1) throw std::invalid_argument("ExperimentSpec: jobs must be >= 1");
        for (const auto& d : detectors)
            if (d != "stat" && d != "nns" && d != "baseline")
                throw std::invalid_argument("ExperimentSpec: unknown detector '" + d + "'");
    }
};

struct SweepCell {
    int t_se = 0;
    int delta = 0;
    std::string detector;
    bool failed = false;
    std::string reason;
    MetricsReport metrics;
};

struct SweepReport {
    std::vector<SweepCell> cells;

    const SweepCell* best_by_auc(const std::string& detector) const {
        const SweepCell* best = nullptr;
        for (const auto& c : cells) {
            if (c.failed || c.detector != detector) continue;
            if (!best || c.metrics.auc > best->metrics.auc ||
                (c.metrics.auc == best->metrics.auc &&
                 (c.t_se < best->t_se || (c.t_se == best->t_se && c.delta < best->delta))))
                best = &c;
        }
        return best;
    }
};

struct SweepContext {
    Checkpoint ck;
    uint64_t model_checksum = 0;
    std::vector<Tensor> real, generated;
};

inline SweepContext prepare_context(const ExperimentSpec& spec) {
    spec.validate();
    Checkpoint ck = load_checkpoint(spec.checkpoint);
    uint64_t checksum = fnv1a64_file(spec.checkpoint);
    ToyKind kind = toy_kind_from_string(spec.dataset);
    std::vector<Tensor> real =
        make_toy_dataset(kind, spec.n_real, derive_seed(spec.seed, kStreamData));
    SamplerConfig gen_cfg;
    gen_cfg.mode = spec.gen_mode;
    gen_cfg.ddim_stepsize = spec.gen_ddim_stepsize;
    gen_cfg.seed = derive_seed(spec.seed, kStreamGen);
    gen_cfg.count = spec.n_generated;
    std::vector<Tensor> generated =
        generate_set(ck.model, ck.schedule, gen_cfg, ck.model.data_shape());
    return SweepContext{std::move(ck), checksum, std::move(real), std::move(generated)};
}

inline std::string sample_id(const char* prefix, size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%04zu", prefix, i);
    return buf;
}

// (t_se, delta) grid; explicit t_se lists are kept verbatim so invalid cells
// surface as failures rather than being silently dropped.
inline std::vector<std::pair<int, int>> make_grid(const ExperimentSpec& spec, int T) {
    std::vector<int> deltas = spec.delta_grid;
    std::sort(deltas.begin(), deltas.end());
    std::vector<std::pair<int, int>> grid;
    for (int delta : deltas) {
        if (spec.t_se_grid.empty()) {
            if (delta < 1) {
                grid.emplace_back(0, delta);
                continue;
            }
            for (int t = 0; t + delta <= T; t += delta) grid.emplace_back(t, delta);
        } else {
            for (int t : spec.t_se_grid) grid.emplace_back(t, delta);
        }
    }
    std::sort(grid.begin(), grid.end());
    return grid;
}

namespace detail {

inline std::vector<ProfileRecord> profile_all(const SweepContext& ctx, const StepConfig& cfg) {
    std::vector<ProfileRecord> records;
    records.reserve(ctx.real.size() + ctx.generated.size());
    for (size_t i = 0; i < ctx.real.size(); ++i)
        records.push_back({sample_id("real", i), 0,
                           t_delta_error(ctx.ck.model, ctx.ck.schedule, ctx.real[i], cfg)});
    for (size_t i = 0; i < ctx.generated.size(); ++i)
        records.push_back({sample_id("gen", i), 1,
                           t_delta_error(ctx.ck.model, ctx.ck.schedule, ctx.generated[i], cfg)});
    return records;
}

inline std::vector<ScoredSample> scores_of(const std::vector<ProfileRecord>& records) {
    std::vector<ScoredSample> scores;
    scores.reserve(records.size());
    for (const auto& r : records) scores.push_back({r.id, r.profile.error, r.label});
    return scores;
}

inline void check_accounting(size_t got, size_t want, const char* what) {
    if (got != want)
        throw std::logic_error(std::string("sample accounting: ") + what + " scored " +
                               std::to_string(got) + " of " + std::to_string(want));
}

}  // namespace detail

// Runs the grid and writes, per cell, {out}/{t_se}_{delta}/scores.csv and
// metrics.json for the stat detector (suffixed variants for nns/baseline),
// then assembles {out}/report.json and report.csv. Cells are independent
// jobs; all seeds derive from (spec.seed, cell), so the output is identical
// regardless of job count.
inline SweepReport run_sweep(const SweepContext& ctx, const ExperimentSpec& spec,
                             const std::string& out_dir);

// Re-derives the top-level report files from the per-cell artifacts on disk.
inline void assemble_report(const std::string& out_dir);

namespace detail {

inline void run_cell(const SweepContext& ctx, const ExperimentSpec& spec, int t_se, int delta,
                     const std::string& out_dir, std::vector<SweepCell>& out) {
    const int T = ctx.ck.schedule.T();
    std::string cell_dir = out_dir + "/" + std::to_string(t_se) + "_" + std::to_string(delta);

    bool valid = true;
    std::string invalid_reason;
    try {
        StepConfig{t_se, delta}.validate(T);
    } catch (const std::exception& e) {
        valid = false;
        invalid_reason = std::string("invalid StepConfig: ") + e.what();
    }

    std::vector<ProfileRecord> records;
    if (valid) {
        std::filesystem::create_directories(cell_dir);
        records = profile_all(ctx, StepConfig{t_se, delta});
    }

    for (const auto& detector : spec.detectors) {
        SweepCell cell;
        cell.t_se = t_se;
        cell.delta = delta;
        cell.detector = detector;
        if (!valid) {
            cell.failed = true;
            cell.reason = invalid_reason;
            out.push_back(std::move(cell));
            continue;
        }
        try {
            std::vector<ScoredSample> scores;
            if (detector == "stat") {
                scores = scores_of(records);
                check_accounting(scores.size(), spec.n_real + spec.n_generated, "stat");
            } else if (detector == "baseline") {
                if (t_se < 1) throw std::invalid_argument("baseline undefined at t_se=0");
                uint64_t cell_seed =
                    derive_seed(spec.seed, kStreamBaselineCell, static_cast<uint64_t>(t_se));
                for (size_t k = 0; k < ctx.real.size(); ++k) {
                    Rng rng(derive_seed(cell_seed, k));
                    scores.push_back({sample_id("real", k),
                                      baseline_score(ctx.ck.model, ctx.ck.schedule, ctx.real[k],
                                                     t_se, rng),
                                      0});
                }
                for (size_t k = 0; k < ctx.generated.size(); ++k) {
                    Rng rng(derive_seed(cell_seed, 1000003 + k));
                    scores.push_back({sample_id("gen", k),
                                      baseline_score(ctx.ck.model, ctx.ck.schedule,
                                                     ctx.generated[k], t_se, rng),
                                      1});
                }
                check_accounting(scores.size(), spec.n_real + spec.n_generated, "baseline");
            } else {  // nns
                NnTrainConfig cfg = spec.nn;
                cfg.seed = derive_seed(spec.seed, kStreamNnCell,
                                       (static_cast<uint64_t>(t_se) << 32) |
                                           static_cast<uint64_t>(delta));
                NnTrainResult trained = nn_train(records, cfg);
                for (size_t k : trained.holdout_idx)
                    scores.push_back({records[k].id, nn_score(trained.net, records[k].profile),
                                      records[k].label});
                check_accounting(scores.size(),
                                 records.size() - trained.train_idx.size(), "nns holdout");
            }
            cell.metrics = compute_metrics(scores);

            std::string suffix = detector == "stat" ? "" : "_" + detector;
            write_scores_csv(cell_dir + "/scores" + suffix + ".csv", scores);
            atomic_write_bytes(cell_dir + "/metrics" + suffix + ".json",
                               metrics_to_json(cell.metrics).dump(2) + "\n");
        } catch (const std::exception& e) {
            cell.failed = true;
            cell.reason = e.what();
        }
        out.push_back(std::move(cell));
    }
}

}  // namespace detail

inline SweepReport run_sweep(const SweepContext& ctx, const ExperimentSpec& spec,
                             const std::string& out_dir) {
    spec.validate();
    std::filesystem::create_directories(out_dir);
    auto grid = make_grid(spec, ctx.ck.schedule.T());

    std::vector<std::vector<SweepCell>> slots(grid.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= grid.size()) return;
            detail::run_cell(ctx, spec, grid[i].first, grid[i].second, out_dir, slots[i]);
        }
    };
    if (spec.jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (size_t j = 0; j < spec.jobs; ++j) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    SweepReport report;
    nlohmann::json cells_meta = nlohmann::json::array();
    for (auto& slot : slots)
        for (auto& cell : slot) {
            cells_meta.push_back({{"t_se", cell.t_se},
                                  {"delta", cell.delta},
                                  {"detector", cell.detector},
                                  {"failed", cell.failed},
                                  {"reason", cell.reason}});
            report.cells.push_back(std::move(cell));
        }
    atomic_write_bytes(out_dir + "/cells.json", cells_meta.dump(2) + "\n");
    assemble_report(out_dir);
    return report;
}

inline void assemble_report(const std::string& out_dir) {
    nlohmann::json cells_meta;
    try {
        cells_meta = nlohmann::json::parse(read_file_bytes(out_dir + "/cells.json"));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(out_dir + "/cells.json: " + e.what());
    }

    struct Row {
        int t_se, delta;
        std::string detector;
        bool failed;
        std::string reason;
        MetricsReport metrics;
    };
    std::vector<Row> rows;
    for (const auto& c : cells_meta) {
        Row row{c.at("t_se").get<int>(), c.at("delta").get<int>(),
                c.at("detector").get<std::string>(), c.at("failed").get<bool>(),
                c.at("reason").get<std::string>(), {}};
        if (!row.failed) {
            std::string suffix = row.detector == "stat" ? "" : "_" + row.detector;
            std::string path = out_dir + "/" + std::to_string(row.t_se) + "_" +
                               std::to_string(row.delta) + "/metrics" + suffix + ".json";
            row.metrics = metrics_from_json(nlohmann::json::parse(read_file_bytes(path)));
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.t_se, a.delta, a.detector) < std::tie(b.t_se, b.delta, b.detector);
    });

    // Argmax per (detector, metric), from the stored per-cell metrics.
    std::map<std::string, const Row*> best_auc, best_acc;
    for (const auto& r : rows) {
        if (r.failed) continue;
        auto& ba = best_auc[r.detector];
        if (!ba || r.metrics.auc > ba->metrics.auc) ba = &r;
        auto& bc = best_acc[r.detector];
        if (!bc || r.metrics.best_acc > bc->metrics.best_acc) bc = &r;
    }

    nlohmann::json out;
    out["cells"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json c{{"t_se", r.t_se}, {"delta", r.delta}, {"detector", r.detector},
                         {"failed", r.failed}};
        if (r.failed)
            c["reason"] = r.reason;
        else
            c["metrics"] = metrics_to_json(r.metrics);
        out["cells"].push_back(std::move(c));
    }
    out["argmax"] = nlohmann::json::object();
    for (const auto& [detector, row] : best_auc)
        out["argmax"][detector]["auc"] = {{"t_se", row->t_se},
                                          {"delta", row->delta},
                                          {"value", row->metrics.auc}};
    for (const auto& [detector, row] : best_acc)
        out["argmax"][detector]["best_acc"] = {{"t_se", row->t_se},
                                               {"delta", row->delta},
                                               {"value", row->metrics.best_acc}};
    atomic_write_bytes(out_dir + "/report.json", out.dump(2) + "\n");

    std::string csv = "t_se,delta,detector,auc,auc_raw,best_acc,tpr@0.01,tpr@0.001\n";
    for (const auto& r : rows) {
        if (r.failed) continue;
        csv += std::to_string(r.t_se) + "," + std::to_string(r.delta) + "," + r.detector + "," +
               double_to_string(r.metrics.auc) + "," + double_to_string(r.metrics.auc_raw) + "," +
               double_to_string(r.metrics.best_acc) + "," +
               double_to_string(r.metrics.tpr_at_1pct) + "," +
               double_to_string(r.metrics.tpr_at_01pct) + "\n";
    }
    atomic_write_bytes(out_dir + "/report.csv", csv);
}

// Head-to-head table at the best stat cell: the classifier trains on the
// configured fraction of profiles; every detector is then evaluated on the
// same held-out remainder. The baseline picks its best fixed t over the
// distinct valid t_se values (plus T/2).
inline nlohmann::json compare_detectors(const SweepContext& ctx, const ExperimentSpec& spec,
                                        const SweepReport& sweep, const std::string& out_dir) {
    const SweepCell* best = sweep.best_by_auc("stat");
    if (!best) throw std::invalid_argument("compare_detectors: no successful stat cell");
    StepConfig cfg{best->t_se, best->delta};

    auto records = detail::profile_all(ctx, cfg);
    NnTrainConfig nn_cfg = spec.nn;
    nn_cfg.seed = derive_seed(spec.seed, kStreamCompare);
    NnTrainResult trained = nn_train(records, nn_cfg);
    const auto& holdout = trained.holdout_idx;

    std::vector<ScoredSample> stat_scores, nns_scores;
    for (size_t k : holdout) {
        stat_scores.push_back({records[k].id, records[k].profile.error, records[k].label});
        nns_scores.push_back(
            {records[k].id, nn_score(trained.net, records[k].profile), records[k].label});
    }

    // Baseline t candidates: distinct t_se >= 1 present in the sweep, plus T/2.
    std::vector<int> ts;
    for (const auto& c : sweep.cells)
        if (!c.failed && c.t_se >= 1) ts.push_back(c.t_se);
    ts.push_back(std::max(1, ctx.ck.schedule.T() / 2));
    std::sort(ts.begin(), ts.end());
    ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

    auto sample_of = [&](size_t k) -> const Tensor& {
        return k < ctx.real.size() ? ctx.real[k] : ctx.generated[k - ctx.real.size()];
    };
    double best_baseline_auc = -1.0;
    int best_t = ts.front();
    std::vector<ScoredSample> baseline_scores;
    for (int t : ts) {
        std::vector<ScoredSample> scores;
        uint64_t cell_seed = derive_seed(spec.seed, kStreamBaselineCell, static_cast<uint64_t>(t));
        for (size_t k : holdout) {
            int label = records[k].label;
            // same substream mapping as the sweep cells: real k, gen 1000003 + k
            uint64_t stream = label ? 1000003 + (k - ctx.real.size()) : k;
            Rng rng(derive_seed(cell_seed, stream));
            scores.push_back({records[k].id,
                              baseline_score(ctx.ck.model, ctx.ck.schedule, sample_of(k), t, rng),
                              label});
        }
        MetricsReport m = compute_metrics(scores);
        double oriented = std::max(m.auc, 1.0 - m.auc);
        if (oriented > best_baseline_auc) {
            best_baseline_auc = oriented;
            best_t = t;
            baseline_scores = std::move(scores);
        }
    }

    auto row = [&](const char* name, const std::vector<ScoredSample>& scores) {
        MetricsReport m = compute_metrics(scores);
        return nlohmann::json{{"detector", name},
                              {"auc", m.auc},
                              {"auc_raw", m.auc_raw},
                              {"best_acc", m.best_acc},
                              {"orientation", to_string(m.orientation)},
                              {"n_eval", scores.size()}};
    };
    nlohmann::json out;
    out["cell"] = {{"t_se", best->t_se}, {"delta", best->delta}};
    out["baseline_t"] = best_t;
    out["n_train"] = trained.train_idx.size();
    out["rows"] = nlohmann::json::array(
        {row("baseline", baseline_scores), row("sedid_stat", stat_scores),
         row("sedid_nns", nns_scores)});

    std::filesystem::create_directories(out_dir);
    atomic_write_bytes(out_dir + "/compare.json", out.dump(2) + "\n");
    std::string csv = "detector,auc,auc_raw,best_acc\n";
    for (const auto& r : out["rows"])
        csv += r.at("detector").get<std::string>() + "," +
               double_to_string(r.at("auc").get<double>()) + "," +
               double_to_string(r.at("auc_raw").get<double>()) + "," +
               double_to_string(r.at("best_acc").get<double>()) + "\n";
    atomic_write_bytes(out_dir + "/compare.csv", csv);
    return out;
}

}  // namespace sedid
