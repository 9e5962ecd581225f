#include "doctest.h"
#include "oracles.hpp"
#include "pedseg/error.hpp"

using namespace pedseg;

TEST_CASE("single voxel with anisotropic spacing") {
    BinaryMask m({3, 3, 3}, {1, 2, 3});
    m.bits[0] = 1;
    const auto d = squared_edt(m);
    CHECK(d[m.dims.index(1, 1, 1)] == 14.0);
    CHECK(d[m.dims.index(2, 0, 0)] == 4.0);
    CHECK(d[m.dims.index(0, 0, 2)] == 36.0);
    CHECK(d[0] == 0.0);
}

TEST_CASE("all-foreground mask is zero everywhere") {
    BinaryMask m({4, 3, 2}, {0.7, 1.1, 2.0});
    std::fill(m.bits.begin(), m.bits.end(), 1);
    for (double v : squared_edt(m)) CHECK(v == 0.0);
}

TEST_CASE("empty mask raises") {
    BinaryMask m({4, 4, 4}, {1, 1, 1});
    CHECK_THROWS_AS(squared_edt(m), EmptyMaskError);
}

TEST_CASE("random masks match the brute-force oracle") {
    Rng rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const Dims d{1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(9)};
        const Vec3 s{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        auto m = oracle::random_mask(rng, d, s);
        if (m.empty()) m.bits[rng.below(m.bits.size())] = 1;
        const auto fast = squared_edt(m);
        const auto slow = oracle::squared_edt(m);
        for (std::size_t n = 0; n < fast.size(); ++n) CHECK(fast[n] == doctest::Approx(slow[n]).epsilon(1e-12));
    }
}

TEST_CASE("1D lower envelope on a strided output") {
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> f{inf, 0.0, inf, inf, 5.0, inf};
    std::vector<double> out(12, -1.0);
    std::vector<std::size_t> sites(6);
    std::vector<double> bounds(7);
    lower_envelope_1d(f.data(), out.data(), 6, 2, 1.0, sites.data(), bounds.data());
    const std::vector<double> expected{1, 0, 1, 4, 5, 6};
    for (std::size_t q = 0; q < 6; ++q) {
        CHECK(out[2 * q] == expected[q]);
        CHECK(out[2 * q + 1] == -1.0);
    }
}
