#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>

#include "sedid/sampler.hpp"

using namespace sedid;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<uint64_t>(a[i]) != std::bit_cast<uint64_t>(b[i])) return false;
    return true;
}

}  // namespace

TEST_CASE("ancestral mean recursion telescopes for the zero predictor") {
    NoiseSchedule s = linear_schedule(30, 1e-3, 0.3);
    ConstantPredictor zero(0.0);
    Tensor xT = Tensor::from_vector({0.8});
    Tensor x0 = ancestral_chain(zero, s, xT, nullptr);

    // Scalar-loop oracle: x0 = xT * prod(1/sqrt(alpha_t)) = xT / sqrt(abar_T).
    long double prod = 1.0L;
    for (int t = 1; t <= s.T(); ++t) prod *= 1.0L / std::sqrt(static_cast<long double>(s.alpha(t)));
    double want = static_cast<double>(0.8L * prod);
    CHECK(std::abs(x0[0] - want) <= 1e-12 * std::abs(want));
    CHECK(x0[0] == doctest::Approx(0.8 / std::sqrt(s.alpha_bar(s.T()))).epsilon(1e-12));
}

TEST_CASE("ancestral z=0 equals the deterministic mean recursion oracle") {
    NoiseSchedule s = linear_schedule(25, 1e-3, 0.25);
    LinearPredictor p(0.4);
    Tensor xT = Tensor::from_vector({-1.3});
    Tensor got = ancestral_chain(p, s, xT, nullptr);

    long double x = -1.3L;
    for (int t = s.T(); t >= 1; --t) {
        long double eps = 0.4L * x;
        long double coef = static_cast<long double>(s.beta(t)) /
                           std::sqrt(1.0L - static_cast<long double>(s.alpha_bar(t)));
        x = (x - coef * eps) / std::sqrt(static_cast<long double>(s.alpha(t)));
    }
    CHECK(std::abs(got[0] - static_cast<double>(x)) <= 1e-12 * std::abs(static_cast<double>(x)));
}

TEST_CASE("ancestral sampling is deterministic in the seed") {
    NoiseSchedule s = linear_schedule(20, 1e-3, 0.2);
    LinearPredictor p(0.3);
    Rng a(77), b(77), c(78);
    Tensor sa = sample_ancestral(p, s, a, {4});
    Tensor sb = sample_ancestral(p, s, b, {4});
    Tensor sc = sample_ancestral(p, s, c, {4});
    CHECK(bitwise_equal(sa, sb));
    CHECK(!bitwise_equal(sa, sc));
}

TEST_CASE("single-step ancestral chain closed form: T=1, beta=0.5, c=0.2") {
    NoiseSchedule s = linear_schedule(1, 0.5, 0.5);
    ConstantPredictor p(0.2);
    Tensor x1 = Tensor::from_vector({1.0});
    Tensor x0 = ancestral_chain(p, s, x1, nullptr);
    // (1 - sqrt(0.5)*0.2)/sqrt(0.5) = sqrt(2) - 0.2
    CHECK(x0[0] == doctest::Approx(std::sqrt(2.0) - 0.2).epsilon(1e-14));

    // The t=1 step never adds noise, so an rng-driven run agrees.
    Rng rng(5);
    Tensor x0b = ancestral_chain(p, s, x1, &rng);
    CHECK(bitwise_equal(x0, x0b));
}

TEST_CASE("beta_tilde variance changes the stochastic path only") {
    NoiseSchedule s = linear_schedule(10, 1e-2, 0.2);
    ConstantPredictor p(0.0);
    Rng a(9), b(9);
    Tensor sa = sample_ancestral(p, s, a, {3}, {false});
    Tensor sb = sample_ancestral(p, s, b, {3}, {true});
    CHECK(!bitwise_equal(sa, sb));
    Tensor xT = Tensor::from_vector({1.0});
    CHECK(bitwise_equal(ancestral_chain(p, s, xT, nullptr, {false}),
                        ancestral_chain(p, s, xT, nullptr, {true})));
}

TEST_CASE("ancestral divergence names the timestep") {
    NoiseSchedule s = linear_schedule(5, 1e-2, 0.2);
    LinearPredictor p(-1e200);  // compounds multiplicatively into overflow
    Tensor xT = Tensor::from_vector({1.0});
    CHECK_THROWS_AS(ancestral_chain(p, s, xT, nullptr), SamplerDiverged);
    try {
        ancestral_chain(p, s, xT, nullptr);
    } catch (const SamplerDiverged& e) {
        CHECK(e.t >= 1);
        CHECK(e.t <= 5);
        CHECK(std::string(e.what()).find("t=" + std::to_string(e.t)) != std::string::npos);
    }
}

TEST_CASE("ddim sampling collapses to x_star for the point-mass predictor") {
    NoiseSchedule s = linear_schedule(24, 1e-3, 0.25);
    Tensor x_star = Tensor::from_vector({0.4, -0.9});
    PointMassPredictor p(x_star, s);
    Rng rng(13);
    for (int delta : {1, 2, 4, 8, 24}) {
        Tensor xT = gaussian(rng, {2});
        Tensor x0 = ddim_chain(p, s, xT, delta);
        for (size_t i = 0; i < 2; ++i)
            CHECK(x0[i] == doctest::Approx(x_star[i]).epsilon(1e-10));
    }
}

TEST_CASE("ddim chain matches the scalar-loop oracle for a constant predictor") {
    NoiseSchedule s = linear_schedule(20, 1e-3, 0.2);
    ConstantPredictor p(0.7);
    Tensor xT = Tensor::from_vector({1.1});
    for (int delta : {1, 2, 4, 5, 10, 20}) {
        Tensor got = ddim_chain(p, s, xT, delta);
        long double x = 1.1L;
        for (int t = s.T(); t >= delta; t -= delta) {
            long double ab_t = s.alpha_bar(t);
            long double ab_d = s.alpha_bar(t - delta);
            long double f = (x - std::sqrt(1.0L - ab_t) * 0.7L) / std::sqrt(ab_t);
            x = std::sqrt(ab_d) * f + std::sqrt(1.0L - ab_d) * 0.7L;
        }
        CHECK(std::abs(got[0] - static_cast<double>(x)) <=
              1e-12 * std::max(1.0, std::abs(static_cast<double>(x))));
    }
}

TEST_CASE("ddim with delta=T equals one direct psi step") {
    NoiseSchedule s = linear_schedule(16, 1e-3, 0.2);
    LinearPredictor p(0.25);
    Tensor xT = Tensor::from_vector({0.5, 2.0});
    CHECK(bitwise_equal(ddim_chain(p, s, xT, 16), psi(p, s, xT, 16, 16)));
}

TEST_CASE("ddim is deterministic given x_T and rejects misaligned grids") {
    NoiseSchedule s = linear_schedule(12, 1e-3, 0.2);
    LinearPredictor p(0.3);
    Rng rng(21);
    Tensor xT = gaussian(rng, {3});
    CHECK(bitwise_equal(ddim_chain(p, s, xT, 3), ddim_chain(p, s, xT, 3)));
    CHECK_THROWS_AS(ddim_chain(p, s, xT, 5), std::invalid_argument);
    CHECK_THROWS_AS(ddim_chain(p, s, xT, 0), std::invalid_argument);
}

TEST_CASE("generate_set derives per-sample substreams and round-trips archives") {
    NoiseSchedule s = linear_schedule(10, 1e-3, 0.2);
    LinearPredictor p(0.2);
    SamplerConfig cfg;
    cfg.mode = SamplerMode::ancestral;
    cfg.seed = 99;
    cfg.count = 5;
    auto set1 = generate_set(p, s, cfg, {2});
    auto set2 = generate_set(p, s, cfg, {2});
    REQUIRE(set1.size() == 5);
    for (size_t i = 0; i < 5; ++i) REQUIRE(bitwise_equal(set1[i], set2[i]));
    CHECK(!bitwise_equal(set1[0], set1[1]));

    auto dir = std::filesystem::temp_directory_path() / "sedid_sampler_tests";
    std::filesystem::create_directories(dir);
    std::string path = (dir / "set.sedd").string();
    write_sample_set(path, set1, cfg, 0xDEADBEEFCAFEF00Dull);
    auto back = read_sample_set(path);
    REQUIRE(back.size() == 5);
    for (size_t i = 0; i < 5; ++i) REQUIRE(bitwise_equal(back[i], set1[i]));

    auto entries = archive_read(path);
    const Tensor& man = archive_get(entries, "manifest");
    CHECK(join_u64(man[4], man[5]) == 99);
    CHECK(join_u64(man[6], man[7]) == 0xDEADBEEFCAFEF00Dull);
}
