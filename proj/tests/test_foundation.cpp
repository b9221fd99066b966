#include <doctest.h>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "sedid/archive.hpp"
#include "sedid/rng.hpp"
#include "sedid/tensor.hpp"

using namespace sedid;

namespace {

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::bit_cast<uint64_t>(a[i]) != std::bit_cast<uint64_t>(b[i])) return false;
    return true;
}

std::string temp_path(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "sedid_foundation_tests";
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("rng stream matches the published splitmix64 vectors") {
    // Independently computed from the reference algorithm.
    const uint64_t want0[4] = {0xE220A8397B1DCDAFull, 0x6E789E6AA1B965F4ull, 0x06C45D188009454Full,
                               0xF88BB8A8724C81ECull};
    const uint64_t want1[4] = {0x910A2DEC89025CC1ull, 0xBEEB8DA1658EEC67ull, 0xF893A2EEFB32555Eull,
                               0x71C18690EE42C90Bull};
    Rng r0(0), r1(1);
    for (uint64_t w : want0) CHECK(r0.next_u64() == w);
    for (uint64_t w : want1) CHECK(r1.next_u64() == w);

    Rng r7(7);
    CHECK(r7.next_double() == doctest::Approx(0.38982974839127149).epsilon(1e-16));
    CHECK(r7.next_double() == doctest::Approx(0.016788294528156111).epsilon(1e-16));
}

TEST_CASE("equal seeds give equal streams over a million draws") {
    Rng a(123456789), b(123456789);
    for (int i = 0; i < 1000000; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("gaussian determinism and seed sensitivity") {
    Rng a(7), b(7), c(8);
    Tensor ga = gaussian(a, {4});
    Tensor gb = gaussian(b, {4});
    Tensor gc = gaussian(c, {4});
    CHECK(bitwise_equal(ga, gb));
    bool any_diff = false;
    for (size_t i = 0; i < 4; ++i) any_diff |= (ga[i] != gc[i]);
    CHECK(any_diff);
}

TEST_CASE("gaussian sample statistics, seed 7, n = 10000") {
    Rng rng(7);
    Tensor g = gaussian(rng, {10000});
    double mean = 0.0;
    for (size_t i = 0; i < g.size(); ++i) mean += g[i];
    mean /= static_cast<double>(g.size());
    double var = 0.0;
    for (size_t i = 0; i < g.size(); ++i) var += (g[i] - mean) * (g[i] - mean);
    var /= static_cast<double>(g.size());
    CHECK(mean >= -0.05);
    CHECK(mean <= 0.05);
    CHECK(var >= 0.94);
    CHECK(var <= 1.06);
    CHECK(g.all_finite());
}

TEST_CASE("gaussian rejects degenerate shapes") {
    Rng rng(1);
    CHECK_THROWS_AS(gaussian(rng, {}), std::invalid_argument);
    CHECK_THROWS_AS(gaussian(rng, {3, 0}), std::invalid_argument);
}

TEST_CASE("substream derivation is deterministic and decorrelated") {
    Rng root(42);
    Rng s0 = root.substream(0);
    Rng s0b = Rng(42).substream(0);
    Rng s1 = root.substream(1);
    CHECK(s0.next_u64() == s0b.next_u64());
    CHECK(s0.next_u64() != s1.next_u64());
    CHECK(derive_seed(42, 3, 9) == derive_seed(derive_seed(42, 3), 9));
}

TEST_CASE("l2_sq basics") {
    Tensor a = Tensor::from_vector({1, 2});
    CHECK(l2_sq(a, a) == 0.0);
    CHECK(l2_sq(a, Tensor::from_vector({0, 0})) == 5.0);
    CHECK_THROWS_AS(l2_sq(a, Tensor::from_vector({1, 2, 3})), std::invalid_argument);
}

TEST_CASE("l2_sq matches a scalar-loop recomputation on random 32-vectors") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = gaussian(rng, {32});
        Tensor b = gaussian(rng, {32});
        double expect = 0.0;
        for (size_t i = 0; i < 32; ++i) {
            double d = a[i] - b[i];
            expect += d * d;
        }
        double got = l2_sq(a, b);
        CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
        CHECK(l2_sq(a, b) == l2_sq(b, a));
    }
}

TEST_CASE("l2_sq scaling property") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        Tensor a = gaussian(rng, {16});
        Tensor b = gaussian(rng, {16});
        double c = 4.0 * rng.next_double() - 2.0;
        double lhs = l2_sq(c * a, c * b);
        double rhs = c * c * l2_sq(a, b);
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
    }
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor({0}), std::invalid_argument);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
}

TEST_CASE("archive round trip for a single [2,3] tensor is bit-exact") {
    std::string path = temp_path("single.sedd");
    Tensor t({2, 3}, {0.1, -2.5, 3e-300, 7.0, 1e300, -0.0});
    archive_write(path, {{"x", Dtype::f64, t}});
    auto entries = archive_read(path);
    REQUIRE(entries.size() == 1);
    CHECK(entries[0].name == "x");
    CHECK(bitwise_equal(entries[0].tensor, t));

    // A second write of the same entries produces identical bytes.
    std::string bytes1 = read_file_bytes(path);
    archive_write(path, {{"x", Dtype::f64, t}});
    CHECK(read_file_bytes(path) == bytes1);
}

TEST_CASE("archive round trip is bit-exact for 1000 random tensors") {
    std::string path = temp_path("many.sedd");
    Rng rng(2024);
    std::vector<ArchiveEntry> entries;
    for (int i = 0; i < 1000; ++i) {
        std::vector<size_t> shape;
        size_t ndim = 1 + rng.next_below(3);
        for (size_t d = 0; d < ndim; ++d) shape.push_back(1 + rng.next_below(5));
        entries.push_back({"t" + std::to_string(i), Dtype::f64, gaussian(rng, shape)});
    }
    archive_write(path, entries);
    auto back = archive_read(path);
    REQUIRE(back.size() == entries.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].name == entries[i].name);
        REQUIRE(bitwise_equal(back[i].tensor, entries[i].tensor));
    }
}

TEST_CASE("archive byte layout is pinned") {
    // magic, version u16, name len u16, name, dtype u8, ndim u8, dim u32,
    // payload — all little-endian.
    std::string bytes = archive_serialize({{"x", Dtype::f64, Tensor::from_vector({1.0})}});
    const unsigned char want[] = {'S', 'E', 'D', 'D', 0x01, 0x00, 0x01, 0x00, 'x',
                                  0x01, 0x01, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00,
                                  0x00, 0x00, 0x00, 0x00, 0xF0, 0x3F};
    REQUIRE(bytes.size() == sizeof(want));
    for (size_t i = 0; i < sizeof(want); ++i)
        REQUIRE(static_cast<unsigned char>(bytes[i]) == want[i]);
}

TEST_CASE("f32 entries round trip through their stored precision") {
    std::string path = temp_path("f32.sedd");
    Tensor t = Tensor::from_vector({0.25, -1.5, 3.0});  // exactly representable in f32
    archive_write(path, {{"x", Dtype::f32, t}});
    auto entries = archive_read(path);
    CHECK(entries[0].dtype == Dtype::f32);
    CHECK(bitwise_equal(entries[0].tensor, t));
}

TEST_CASE("corrupt magic is rejected with no partial result") {
    std::string path = temp_path("magic.sedd");
    archive_write(path, {{"x", Dtype::f64, Tensor::from_vector({1.0})}});
    std::string bytes = read_file_bytes(path);
    bytes[0] = 'X';
    atomic_write_bytes(path, bytes);
    CHECK_THROWS_AS(archive_read(path), FormatError);
}

TEST_CASE("duplicate entry names are rejected at write") {
    std::string path = temp_path("dup.sedd");
    std::vector<ArchiveEntry> entries{{"a", Dtype::f64, Tensor::from_vector({1.0})},
                                      {"a", Dtype::f64, Tensor::from_vector({2.0})}};
    CHECK_THROWS_AS(archive_write(path, entries), std::invalid_argument);
}

TEST_CASE("truncated archive reports the offset") {
    std::string path = temp_path("trunc.sedd");
    archive_write(path, {{"x", Dtype::f64, Tensor::from_vector({1.0, 2.0})}});
    std::string bytes = read_file_bytes(path);
    atomic_write_bytes(path, bytes.substr(0, bytes.size() - 4));
    try {
        archive_read(path);
        FAIL("expected FormatError");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
}

TEST_CASE("non-finite payloads are rejected on read") {
    std::string path = temp_path("nan.sedd");
    Tensor t = Tensor::from_vector({1.0});
    t[0] = std::numeric_limits<double>::quiet_NaN();
    atomic_write_bytes(path, archive_serialize({{"x", Dtype::f64, t}}));
    CHECK_THROWS_AS(archive_read(path), FormatError);
}
