// sedid: train toy diffusion models, generate samples, and score
// real-vs-generated detection via stepwise reverse/denoise errors.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sedid/sedid.hpp"

namespace fs = std::filesystem;
using namespace sedid;

namespace {

uint64_t env_seed() {
    const char* env = std::getenv("SEDID_SEED");
    if (!env) return 0;
    try {
        return std::stoull(env);
    } catch (const std::exception&) {
        throw std::invalid_argument("SEDID_SEED is not an unsigned integer");
    }
}

std::vector<size_t> parse_widths(const std::string& csv) {
    std::vector<size_t> out;
    std::string cur;
    for (char c : csv + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(std::stoul(cur));
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur.push_back(c);
        }
    }
    if (out.empty()) throw std::invalid_argument("empty layer width list");
    return out;
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw std::invalid_argument(std::string(what) + " path '" + path + "' does not exist");
}

std::string loss_trace_csv(const std::vector<double>& trace) {
    std::string out = "step,loss\n";
    for (size_t i = 0; i < trace.size(); ++i)
        out += std::to_string(i) + "," + double_to_string(trace[i]) + "\n";
    return out;
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
    std::string spec_path, toy, data, out, trace;
    std::optional<uint64_t> seed;
    std::optional<int64_t> steps, n_data, T, batch_size, t_embed_dim;
    std::optional<double> beta_start, beta_end, lr, momentum, weight_decay;
    std::optional<std::string> hidden;
};

int cmd_train(const TrainArgs& args) {
    KvConfig cfg = args.spec_path.empty() ? KvConfig::parse_string("", "<none>")
                                          : KvConfig::parse_file(args.spec_path);
    // flags win over spec-file keys
    auto text = [&](const char* key, const std::optional<std::string>& flag,
                    const std::string& fallback) {
        return flag ? *flag : cfg.get_string(key, fallback);
    };
    std::string toy = args.toy.empty() ? cfg.get_string("toy", "") : args.toy;
    std::string data = args.data.empty() ? cfg.get_string("data", "") : args.data;
    std::string out = args.out.empty() ? cfg.get_string("out", "") : args.out;

    TrainConfig train_cfg;
    train_cfg.steps = static_cast<size_t>(args.steps ? *args.steps : cfg.get_int("steps", 20000));
    train_cfg.batch_size = static_cast<size_t>(
        args.batch_size ? *args.batch_size : cfg.get_int("batch_size", 128));
    train_cfg.learning_rate = args.lr ? *args.lr : cfg.get_double("learning_rate", 0.001);
    train_cfg.momentum = args.momentum ? *args.momentum : cfg.get_double("momentum", 0.9);
    train_cfg.weight_decay =
        args.weight_decay ? *args.weight_decay : cfg.get_double("weight_decay", 5e-4);
    train_cfg.seed = args.seed ? *args.seed : cfg.get_u64("seed", env_seed());

    int T = static_cast<int>(args.T ? *args.T : cfg.get_int("T", 100));
    double beta_start = args.beta_start ? *args.beta_start : cfg.get_double("beta_start", 1e-4);
    // Toy default keeps sum(beta) near the T=1000 DDPM geometry.
    double beta_end = args.beta_end ? *args.beta_end : cfg.get_double("beta_end", 0.2);
    size_t n_data = static_cast<size_t>(args.n_data ? *args.n_data : cfg.get_int("n_data", 2048));

    MlpConfig arch;
    arch.hidden = parse_widths(text("hidden", args.hidden, "128,128"));
    arch.t_embed_dim = static_cast<size_t>(
        args.t_embed_dim ? *args.t_embed_dim : cfg.get_int("t_embed_dim", 16));
    std::string trace_path =
        args.trace.empty() ? cfg.get_string("trace_out", out + ".loss.csv") : args.trace;
    cfg.reject_unknown();

    if (out.empty()) throw std::invalid_argument("missing output path (--out or out=)");
    if (toy.empty() && data.empty())
        throw std::invalid_argument("need a dataset: --toy KIND or --data ARCHIVE");

    std::vector<Tensor> dataset;
    if (!data.empty()) {
        require_file(data, "dataset");
        dataset = read_sample_set(data);
    } else {
        dataset = make_toy_dataset(toy_kind_from_string(toy), n_data,
                                   derive_seed(train_cfg.seed, kStreamData));
    }

    NoiseSchedule schedule = linear_schedule(T, beta_start, beta_end);
    DdpmTrainResult res = ddpm_train(schedule, dataset, train_cfg, arch);
    save_checkpoint(out, res.model, schedule);
    atomic_write_bytes(trace_path, loss_trace_csv(res.loss_trace));
    std::cout << "checkpoint written to " << out << " (final loss "
              << double_to_string(res.loss_trace.back()) << ")\n";
    return 0;
}

// --------------------------------------------------------------- sample ---

int cmd_sample(const std::string& ckpt, size_t count, const std::string& mode, int delta,
               std::optional<uint64_t> seed, const std::string& out) {
    require_file(ckpt, "checkpoint");
    Checkpoint ck = load_checkpoint(ckpt);
    SamplerConfig cfg;
    cfg.mode = sampler_mode_from_string(mode);
    cfg.ddim_stepsize = delta;
    cfg.seed = seed ? *seed : env_seed();
    cfg.count = count;
    auto samples = generate_set(ck.model, ck.schedule, cfg, ck.model.data_shape());
    write_sample_set(out, samples, cfg, fnv1a64_file(ckpt));
    std::cout << count << " samples written to " << out << "\n";
    return 0;
}

// -------------------------------------------------------------- profile ---

int cmd_profile(const std::string& ckpt, const std::string& real_path,
                const std::string& gen_path, int t_se, int delta, const std::string& out_dir) {
    require_file(ckpt, "checkpoint");
    require_file(real_path, "real sample");
    require_file(gen_path, "generated sample");
    Checkpoint ck = load_checkpoint(ckpt);
    StepConfig cfg{t_se, delta};
    cfg.validate(ck.schedule.T());

    auto real = read_sample_set(real_path);
    auto gen = read_sample_set(gen_path);
    std::vector<ProfileRecord> records;
    for (size_t i = 0; i < real.size(); ++i)
        records.push_back(
            {sample_id("real", i), 0, t_delta_error(ck.model, ck.schedule, real[i], cfg)});
    for (size_t i = 0; i < gen.size(); ++i)
        records.push_back(
            {sample_id("gen", i), 1, t_delta_error(ck.model, ck.schedule, gen[i], cfg)});

    fs::create_directories(out_dir);
    write_profiles(out_dir + "/profiles.sedd", out_dir + "/scores.csv", records);
    std::cout << records.size() << " profiles written to " << out_dir << "\n";
    return 0;
}

// --------------------------------------------------------------- detect ---

void write_detection(const std::string& out_dir, const std::vector<ScoredSample>& scores) {
    fs::create_directories(out_dir);
    write_scores_csv(out_dir + "/scores.csv", scores);
    Calibration cal = calibrate(scores);
    nlohmann::json j{{"h", cal.threshold.h},
                     {"orientation", to_string(cal.threshold.orientation)},
                     {"best_acc", cal.best_acc}};
    atomic_write_bytes(out_dir + "/calibration.json", j.dump(2) + "\n");
    MetricsReport m = compute_metrics(scores);
    atomic_write_bytes(out_dir + "/metrics.json", metrics_to_json(m).dump(2) + "\n");
    write_roc_csv(out_dir + "/roc.csv", m.roc);
}

struct DetectArgs {
    std::string mode, profile_dir, ckpt, real, generated, out_dir;
    std::optional<int> t;
    std::optional<uint64_t> seed;
    NnTrainConfig nn;
    std::string nn_hidden = "256,64";
};

int cmd_detect(const DetectArgs& args) {
    uint64_t seed = args.seed ? *args.seed : env_seed();
    if (args.mode == "stat") {
        require_file(args.profile_dir + "/scores.csv", "profile scores");
        auto scores = read_scores_csv(args.profile_dir + "/scores.csv");
        write_detection(args.out_dir, scores);
    } else if (args.mode == "nns") {
        require_file(args.profile_dir + "/profiles.sedd", "profile archive");
        require_file(args.profile_dir + "/scores.csv", "profile scores");
        auto records =
            read_profiles(args.profile_dir + "/profiles.sedd", args.profile_dir + "/scores.csv");
        NnTrainConfig cfg = args.nn;
        cfg.hidden = parse_widths(args.nn_hidden);
        cfg.seed = seed;
        NnTrainResult trained = nn_train(records, cfg);
        std::vector<ScoredSample> scores;
        for (size_t k : trained.holdout_idx)
            scores.push_back(
                {records[k].id, nn_score(trained.net, records[k].profile), records[k].label});
        write_detection(args.out_dir, scores);
        save_classifier(args.out_dir + "/classifier.sedd", trained.net);
    } else if (args.mode == "baseline") {
        require_file(args.ckpt, "checkpoint");
        require_file(args.real, "real sample");
        require_file(args.generated, "generated sample");
        Checkpoint ck = load_checkpoint(args.ckpt);
        int t = args.t ? *args.t : ck.schedule.T() / 2;
        auto real = read_sample_set(args.real);
        auto gen = read_sample_set(args.generated);
        std::vector<ScoredSample> scores;
        uint64_t cell_seed = derive_seed(seed, kStreamBaselineCell, static_cast<uint64_t>(t));
        for (size_t i = 0; i < real.size(); ++i) {
            Rng rng(derive_seed(cell_seed, i));
            scores.push_back(
                {sample_id("real", i), baseline_score(ck.model, ck.schedule, real[i], t, rng), 0});
        }
        for (size_t i = 0; i < gen.size(); ++i) {
            Rng rng(derive_seed(cell_seed, 1000003 + i));
            scores.push_back(
                {sample_id("gen", i), baseline_score(ck.model, ck.schedule, gen[i], t, rng), 1});
        }
        write_detection(args.out_dir, scores);
    } else {
        throw std::invalid_argument("unknown detect mode '" + args.mode + "'");
    }
    std::cout << "detection artifacts written to " << args.out_dir << "\n";
    return 0;
}

// ---------------------------------------------------------------- sweep ---

int cmd_sweep(const std::string& spec_path, const std::string& out_dir,
              std::optional<uint64_t> seed_flag, std::optional<size_t> jobs_flag) {
    require_file(spec_path, "spec");
    KvConfig cfg = KvConfig::parse_file(spec_path);

    ExperimentSpec spec;
    spec.checkpoint = cfg.require_string("ckpt");
    spec.dataset = cfg.get_string("toy", "ring");
    spec.n_real = static_cast<size_t>(cfg.get_int("n_real", 512));
    spec.n_generated = static_cast<size_t>(cfg.get_int("n_generated", 512));
    spec.seed = seed_flag ? *seed_flag : cfg.get_u64("seed", env_seed());
    spec.jobs = jobs_flag ? *jobs_flag : static_cast<size_t>(cfg.get_int("jobs", 1));
    spec.gen_mode = sampler_mode_from_string(cfg.get_string("gen_mode", "ancestral"));
    spec.gen_ddim_stepsize = static_cast<int>(cfg.get_int("gen_delta", 1));

    spec.delta_grid.clear();
    for (int64_t d : cfg.get_int_list("delta_grid", {5, 10, 20, 25}))
        spec.delta_grid.push_back(static_cast<int>(d));
    std::string tgrid = cfg.get_string("t_se_grid", "auto");
    if (tgrid != "auto")
        for (int64_t t : cfg.get_int_list("t_se_grid", {}))
            spec.t_se_grid.push_back(static_cast<int>(t));
    spec.detectors = cfg.get_string_list("detectors", {"stat"});

    spec.nn.epochs = static_cast<size_t>(cfg.get_int("nn_epochs", 20));
    spec.nn.learning_rate = cfg.get_double("nn_learning_rate", 0.001);
    spec.nn.momentum = cfg.get_double("nn_momentum", 0.9);
    spec.nn.weight_decay = cfg.get_double("nn_weight_decay", 5e-4);
    spec.nn.batch_size = static_cast<size_t>(cfg.get_int("nn_batch_size", 128));
    spec.nn.train_fraction = cfg.get_double("nn_train_fraction", 0.1);
    spec.nn.hidden = parse_widths(cfg.get_string("nn_hidden", "256,64"));
    bool compare = cfg.get_string("compare", "true") == "true";
    cfg.reject_unknown();

    require_file(spec.checkpoint, "checkpoint");
    SweepContext ctx = prepare_context(spec);
    SweepReport report = run_sweep(ctx, spec, out_dir);
    size_t failed = 0;
    for (const auto& c : report.cells) failed += c.failed;
    std::cout << report.cells.size() << " cells (" << failed << " failed) -> " << out_dir << "\n";

    if (compare) {
        bool has_stat = false;
        for (const auto& c : report.cells) has_stat |= (c.detector == "stat" && !c.failed);
        if (has_stat) {
            nlohmann::json table = compare_detectors(ctx, spec, report, out_dir);
            std::cout << "compare table at t_se=" << table.at("cell").at("t_se")
                      << ", delta=" << table.at("cell").at("delta") << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stepwise-error detection of diffusion-generated samples"};
    app.require_subcommand(1);

    // train
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "train a toy denoising diffusion model");
    train->add_option("--spec", train_args.spec_path, "key=value spec file");
    train->add_option("--toy", train_args.toy, "toy dataset: gauss_mixture|ring|bars8x8");
    train->add_option("--data", train_args.data, "tensor archive with training samples");
    train->add_option("--out", train_args.out, "checkpoint output path");
    train->add_option("--trace", train_args.trace, "loss trace CSV path");
    train->add_option("--steps", train_args.steps, "training steps");
    train->add_option("--n-data", train_args.n_data, "toy dataset size");
    train->add_option("--T", train_args.T, "diffusion steps");
    train->add_option("--beta-start", train_args.beta_start, "schedule start");
    train->add_option("--beta-end", train_args.beta_end, "schedule end");
    train->add_option("--hidden", train_args.hidden, "hidden widths, e.g. 128,128");
    train->add_option("--t-embed-dim", train_args.t_embed_dim, "timestep embedding size");
    train->add_option("--batch-size", train_args.batch_size, "batch size");
    train->add_option("--lr", train_args.lr, "learning rate");
    train->add_option("--momentum", train_args.momentum, "SGD momentum");
    train->add_option("--weight-decay", train_args.weight_decay, "L2 weight decay");
    train->add_option("--seed", train_args.seed, "master seed (fallback: SEDID_SEED)");

    // sample
    std::string sm_ckpt, sm_mode = "ancestral", sm_out;
    size_t sm_count = 1;
    int sm_delta = 1;
    std::optional<uint64_t> sm_seed;
    auto* sample = app.add_subcommand("sample", "generate samples from a checkpoint");
    sample->add_option("--ckpt", sm_ckpt, "model checkpoint")->required();
    sample->add_option("--count", sm_count, "number of samples");
    sample->add_option("--mode", sm_mode, "ancestral|ddim");
    sample->add_option("--delta", sm_delta, "ddim stepsize");
    sample->add_option("--seed", sm_seed, "master seed (fallback: SEDID_SEED)");
    sample->add_option("--out", sm_out, "output archive")->required();

    // profile
    std::string pf_ckpt, pf_real, pf_gen, pf_out;
    int pf_tse = 0, pf_delta = 1;
    auto* profile = app.add_subcommand("profile", "compute stepwise-error noise profiles");
    profile->add_option("--ckpt", pf_ckpt, "model checkpoint")->required();
    profile->add_option("--real", pf_real, "archive of real samples")->required();
    profile->add_option("--generated", pf_gen, "archive of generated samples")->required();
    profile->add_option("--t-se", pf_tse, "error calculation timestep")->required();
    profile->add_option("--delta", pf_delta, "stepsize")->required();
    profile->add_option("--out-dir", pf_out, "output directory")->required();

    // detect
    DetectArgs det;
    auto* detect = app.add_subcommand("detect", "score and calibrate a detector");
    detect->add_option("--mode", det.mode, "stat|nns|baseline")->required();
    detect->add_option("--profile-dir", det.profile_dir, "profile directory (stat/nns)");
    detect->add_option("--ckpt", det.ckpt, "model checkpoint (baseline)");
    detect->add_option("--real", det.real, "real sample archive (baseline)");
    detect->add_option("--generated", det.generated, "generated sample archive (baseline)");
    detect->add_option("--t", det.t, "baseline timestep (default T/2)");
    detect->add_option("--seed", det.seed, "master seed (fallback: SEDID_SEED)");
    detect->add_option("--out-dir", det.out_dir, "output directory")->required();
    detect->add_option("--epochs", det.nn.epochs, "nns training epochs");
    detect->add_option("--lr", det.nn.learning_rate, "nns learning rate");
    detect->add_option("--momentum", det.nn.momentum, "nns momentum");
    detect->add_option("--weight-decay", det.nn.weight_decay, "nns weight decay");
    detect->add_option("--batch-size", det.nn.batch_size, "nns batch size");
    detect->add_option("--train-fraction", det.nn.train_fraction, "nns training fraction");
    detect->add_option("--hidden", det.nn_hidden, "nns hidden widths");

    // sweep
    std::string sw_spec, sw_out;
    std::optional<uint64_t> sw_seed;
    std::optional<size_t> sw_jobs;
    auto* sweep = app.add_subcommand("sweep", "run a (t_se, delta) grid sweep");
    sweep->add_option("--spec", sw_spec, "key=value sweep spec")->required();
    sweep->add_option("--out-dir", sw_out, "output directory")->required();
    sweep->add_option("--seed", sw_seed, "master seed override");
    sweep->add_option("--jobs", sw_jobs, "parallel cell jobs");

    // report
    std::string rp_dir;
    auto* report = app.add_subcommand("report", "reassemble report files from a sweep directory");
    report->add_option("--sweep-dir", rp_dir, "sweep output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_args);
        if (sample->parsed())
            return cmd_sample(sm_ckpt, sm_count, sm_mode, sm_delta, sm_seed, sm_out);
        if (profile->parsed())
            return cmd_profile(pf_ckpt, pf_real, pf_gen, pf_tse, pf_delta, pf_out);
        if (detect->parsed()) return cmd_detect(det);
        if (sweep->parsed()) return cmd_sweep(sw_spec, sw_out, sw_seed, sw_jobs);
        if (report->parsed()) {
            require_file(rp_dir + "/cells.json", "sweep directory");
            assemble_report(rp_dir);
            std::cout << "report files written to " << rp_dir << "\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
