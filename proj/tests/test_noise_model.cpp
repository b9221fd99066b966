#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>

#include "sedid/mlp.hpp"
#include "sedid/predictor.hpp"
#include "sedid/rng.hpp"
#include "sedid/schedule.hpp"

using namespace sedid;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<uint64_t>(a[i]) != std::bit_cast<uint64_t>(b[i])) return false;
    return true;
}

double param_norm_sq(MlpPredictor& m) {
    double acc = 0.0;
    for (auto& p : m.params())
        for (double v : *p.value) acc += v * v;
    return acc;
}

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "sedid_noise_model_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("constant predictor returns its value for any (x, t)") {
    ConstantPredictor zero(0.0);
    Rng rng(1);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = gaussian(rng, {5});
        Tensor e = zero.eval(x, static_cast<int>(rng.next_below(100)));
        for (size_t i = 0; i < e.size(); ++i) CHECK(e[i] == 0.0);
    }
    ConstantPredictor c(Tensor::from_vector({1.5, -2.0}));
    Tensor e = c.eval(Tensor::from_vector({9.0, 9.0}), 3);
    CHECK(e[0] == 1.5);
    CHECK(e[1] == -2.0);
}

TEST_CASE("point-mass predictor inverts the forward sample by hand: T=1, beta=0.5") {
    NoiseSchedule s = linear_schedule(1, 0.5, 0.5);
    PointMassPredictor p(Tensor::from_vector({2.0}), s);
    double r = std::sqrt(0.5);
    Tensor x = Tensor::from_vector({r * 2.0 + r * 1.0});
    Tensor eps = p.eval(x, 1);
    CHECK(eps[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("point-mass predictor recovers the injected noise at every t") {
    NoiseSchedule s = linear_schedule(50, 1e-3, 0.3);
    Rng rng(7);
    Tensor x_star = gaussian(rng, {3});
    PointMassPredictor p(x_star, s);
    for (int trial = 0; trial < 40; ++trial) {
        int t = static_cast<int>(1 + rng.next_below(50));
        Tensor eps = gaussian(rng, {3});
        Tensor xt = forward_sample(s, x_star, t, eps);
        Tensor got = p.eval(xt, t);
        for (size_t i = 0; i < 3; ++i)
            CHECK(got[i] == doctest::Approx(eps[i]).epsilon(1e-9));
    }
}

TEST_CASE("point-mass predictor is undefined at t=0") {
    NoiseSchedule s = linear_schedule(10, 1e-4, 0.02);
    PointMassPredictor p(Tensor::from_vector({1.0}), s);
    CHECK(p.min_timestep() == 1);
    CHECK_THROWS_AS(p.eval(Tensor::from_vector({1.0}), 0), UndefinedTimestep);
}

TEST_CASE("linear predictor scales the input") {
    LinearPredictor p(0.5);
    Tensor e = p.eval(Tensor::from_vector({4.0}), 9);
    CHECK(e[0] == 2.0);
}

TEST_CASE("mlp eval is pure and shape preserving") {
    MlpConfig cfg;
    cfg.hidden = {16, 16};
    cfg.t_embed_dim = 4;
    MlpPredictor m(20, {2, 3}, cfg, 41);
    Rng rng(5);
    Tensor x = gaussian(rng, {2, 3});
    Tensor a = m.eval(x, 7);
    Tensor b = m.eval(x, 7);
    CHECK(a.shape() == x.shape());
    CHECK(bitwise_equal(a, b));
    CHECK_THROWS_AS(m.eval(x, 21), std::invalid_argument);
    CHECK_THROWS_AS(m.eval(x, -1), std::invalid_argument);
    CHECK_THROWS_AS(m.eval(gaussian(rng, {5}), 3), std::invalid_argument);
}

TEST_CASE("mlp condition projection changes the output only when provided") {
    MlpConfig cfg;
    cfg.hidden = {12};
    cfg.t_embed_dim = 4;
    cfg.cond_dim = 3;
    MlpPredictor m(10, {4}, cfg, 17);
    Rng rng(2);
    Tensor x = gaussian(rng, {4});
    Tensor cond = gaussian(rng, {3});
    Tensor without = m.eval(x, 5);
    Tensor with = m.eval(x, 5, &cond);
    bool differs = false;
    for (size_t i = 0; i < 4; ++i) differs |= (without[i] != with[i]);
    CHECK(differs);
    Tensor bad = gaussian(rng, {2});
    CHECK_THROWS_AS(m.eval(x, 5, &bad), std::invalid_argument);

    MlpConfig plain;
    plain.hidden = {8};
    MlpPredictor m2(10, {4}, plain, 17);
    CHECK_THROWS_AS(m2.eval(x, 5, &cond), std::invalid_argument);
}

TEST_CASE("grad check: backprop matches central differences on random small nets") {
    Rng rng(31);
    for (int trial = 0; trial < 6; ++trial) {
        MlpConfig cfg;
        cfg.hidden = {static_cast<size_t>(3 + rng.next_below(5))};
        if (trial % 2 == 1) cfg.hidden.push_back(static_cast<size_t>(2 + rng.next_below(4)));
        cfg.t_embed_dim = 1 + rng.next_below(4);
        cfg.cond_dim = (trial % 3 == 0) ? 2 : 0;
        int T = 8;
        MlpPredictor m(T, {3}, cfg, rng.next_u64());
        Tensor x = gaussian(rng, {3});
        Tensor eps = gaussian(rng, {3});
        Tensor cond = gaussian(rng, {2});
        int t = static_cast<int>(rng.next_below(T + 1));
        const Tensor* cp = cfg.cond_dim > 0 ? &cond : nullptr;
        double err = grad_check(m, x, t, eps, cp);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("grad check at the all-zero degenerate point") {
    MlpConfig cfg;
    cfg.hidden = {6, 4};
    cfg.t_embed_dim = 3;
    MlpPredictor m(5, {2}, cfg, 9);
    for (auto& p : m.params())
        for (auto& v : *p.value) v = 0.0;
    Tensor x({2});
    Tensor eps = Tensor::from_vector({0.3, -0.8});
    CHECK(grad_check(m, x, 2, eps) <= 1e-6);
}

TEST_CASE("repeated loss_and_grad accumulates identical gradients") {
    MlpConfig cfg;
    cfg.hidden = {8};
    cfg.t_embed_dim = 4;
    MlpPredictor m(10, {3}, cfg, 77);
    Rng rng(4);
    Tensor x = gaussian(rng, {3});
    Tensor eps = gaussian(rng, {3});

    auto params = m.params();
    zero_grads(params);
    m.loss_and_grad(x, 3, eps);
    std::vector<std::vector<double>> first;
    for (auto& p : params) first.push_back(*p.grad);
    zero_grads(params);
    m.loss_and_grad(x, 3, eps);
    for (size_t p = 0; p < params.size(); ++p)
        for (size_t i = 0; i < first[p].size(); ++i)
            CHECK(std::bit_cast<uint64_t>((*params[p].grad)[i]) ==
                  std::bit_cast<uint64_t>(first[p][i]));
}

TEST_CASE("training on a point mass drives the loss down by 10x") {
    NoiseSchedule s = linear_schedule(20, 1e-3, 0.2);
    std::vector<Tensor> data{Tensor::from_vector({0.6, -0.4})};
    TrainConfig cfg;
    cfg.steps = 5000;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.003;
    cfg.seed = 12;
    MlpConfig arch;
    arch.hidden = {32, 32};
    arch.t_embed_dim = 8;
    DdpmTrainResult res = ddpm_train(s, data, cfg, arch);
    REQUIRE(res.loss_trace.size() == cfg.steps);
    double initial = 0.0, final = 0.0;
    for (size_t i = 0; i < 100; ++i) {
        initial += res.loss_trace[i];
        final += res.loss_trace[cfg.steps - 100 + i];
    }
    CHECK(final < 0.1 * initial);
    CHECK(final < initial);  // final average below initial average
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    NoiseSchedule s = linear_schedule(10, 1e-3, 0.2);
    std::vector<Tensor> data{Tensor::from_vector({1.0})};
    TrainConfig cfg;
    cfg.steps = 20;
    cfg.batch_size = 4;
    cfg.learning_rate = 0.0;
    cfg.seed = 3;
    MlpConfig arch;
    arch.hidden = {6};
    arch.t_embed_dim = 2;
    DdpmTrainResult res = ddpm_train(s, data, cfg, arch);
    MlpPredictor fresh(10, {1}, arch, derive_seed(cfg.seed, kStreamMlpInit));
    auto pa = res.model.params();
    auto pb = fresh.params();
    for (size_t p = 0; p < pa.size(); ++p)
        CHECK(*pa[p].value == *pb[p].value);
}

TEST_CASE("training is deterministic in the seed") {
    NoiseSchedule s = linear_schedule(10, 1e-3, 0.2);
    Rng rng(8);
    std::vector<Tensor> data{gaussian(rng, {2}), gaussian(rng, {2}), gaussian(rng, {2})};
    TrainConfig cfg;
    cfg.steps = 200;
    cfg.batch_size = 8;
    cfg.seed = 555;
    MlpConfig arch;
    arch.hidden = {10};
    arch.t_embed_dim = 4;
    DdpmTrainResult a = ddpm_train(s, data, cfg, arch);
    DdpmTrainResult b = ddpm_train(s, data, cfg, arch);
    auto pa = a.model.params();
    auto pb = b.model.params();
    for (size_t p = 0; p < pa.size(); ++p) CHECK(*pa[p].value == *pb[p].value);
    CHECK(a.loss_trace == b.loss_trace);
}

TEST_CASE("divergence raises with the step index") {
    NoiseSchedule s = linear_schedule(10, 1e-3, 0.2);
    std::vector<Tensor> data{Tensor::from_vector({1.0, 1.0})};
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 4;
    cfg.learning_rate = 1e8;
    cfg.seed = 1;
    MlpConfig arch;
    arch.hidden = {8};
    arch.t_embed_dim = 2;
    CHECK_THROWS_AS(ddpm_train(s, data, cfg, arch), TrainingDiverged);
    try {
        ddpm_train(s, data, cfg, arch);
    } catch (const TrainingDiverged& e) {
        CHECK(e.step < cfg.steps);
        CHECK(std::string(e.what()).find(std::to_string(e.step)) != std::string::npos);
    }
}

TEST_CASE("weight decay alone shrinks parameter norms monotonically") {
    MlpConfig arch;
    arch.hidden = {8};
    arch.t_embed_dim = 2;
    MlpPredictor m(5, {2}, arch, 19);
    // Default optimizer settings; overdamped, so the decay cannot overshoot.
    SgdMomentum opt(0.001, 0.9, 5e-4);
    auto params = m.params();
    double prev = param_norm_sq(m);
    for (int step = 0; step < 50; ++step) {
        zero_grads(params);  // zero data gradient
        opt.step(params);
        double now = param_norm_sq(m);
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("checkpoint round trip preserves behaviour bitwise") {
    NoiseSchedule s = linear_schedule(12, 1e-3, 0.2);
    MlpConfig arch;
    arch.hidden = {9, 5};
    arch.t_embed_dim = 3;
    arch.cond_dim = 2;
    MlpPredictor m(12, {2, 2}, arch, 1234);
    std::string path = temp_path("ckpt.sedd");
    save_checkpoint(path, m, s);
    Checkpoint ck = load_checkpoint(path);
    CHECK(ck.schedule.T() == 12);
    CHECK(ck.model.T() == 12);
    CHECK(ck.model.config().hidden == arch.hidden);
    Rng rng(3);
    Tensor x = gaussian(rng, {2, 2});
    Tensor cond = gaussian(rng, {2});
    CHECK(bitwise_equal(m.eval(x, 4, &cond), ck.model.eval(x, 4, &cond)));
    CHECK(bitwise_equal(m.eval(x, 0), ck.model.eval(x, 0)));
}
