#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "pedseg/error.hpp"
#include "pedseg/labelmap.hpp"
#include "pedseg/metrics.hpp"
#include "test_util.hpp"

using namespace pedseg;

namespace {

BinaryMask cube(Dims d, std::size_t x0, std::size_t y0, std::size_t z0, std::size_t side, Vec3 s = {1, 1, 1}) {
    BinaryMask m(d, s);
    for (std::size_t k = z0; k < z0 + side; ++k)
        for (std::size_t j = y0; j < y0 + side; ++j)
            for (std::size_t i = x0; i < x0 + side; ++i) m.bits[d.index(i, j, k)] = 1;
    return m;
}

}  // namespace

TEST_CASE("dice basic cases") {
    const Dims d{6, 6, 6};
    const auto a = cube(d, 1, 1, 1, 2);
    CHECK(*dice(a, a) == 1.0);
    CHECK(*dice(a, cube(d, 4, 4, 4, 2)) == 0.0);
    CHECK(*dice(a, cube(d, 2, 1, 1, 2)) == 0.5);
    CHECK_FALSE(dice(BinaryMask(d, {1, 1, 1}), BinaryMask(d, {1, 1, 1})).has_value());
    CHECK_THROWS_AS(dice(a, BinaryMask({6, 6, 5}, {1, 1, 1})), ComparisonError);
}

TEST_CASE("surface voxel counts") {
    const Dims d{5, 5, 5};
    CHECK(surface_voxels(cube(d, 1, 1, 1, 3)).size() == 26);
    CHECK(surface_voxels(cube(d, 2, 2, 2, 1)) == std::vector<std::size_t>{d.index(2, 2, 2)});
    BinaryMask full(d, {1, 1, 1});
    std::fill(full.bits.begin(), full.bits.end(), 1);
    CHECK(surface_voxels(full).size() == 125 - 27);
}

TEST_CASE("nsd with two single voxels 10 mm apart") {
    const Dims d{12, 1, 1};
    BinaryMask a(d, {1, 1, 1}), b(d, {1, 1, 1});
    a.bits[0] = 1;
    b.bits[10] = 1;
    CHECK(*nsd(a, b, {3.0}) == 0.0);
    CHECK(*nsd(a, b, {10.0}) == 1.0);
    CHECK(*nsd(a, a, {0.5}) == 1.0);
    BinaryMask empty(d, {1, 1, 1});
    CHECK(*nsd(a, empty, {3.0}) == 0.0);
    CHECK_FALSE(nsd(empty, empty, {3.0}).has_value());
    CHECK_THROWS_AS(nsd(a, b, {0.0}), ParameterError);
}

TEST_CASE("nsd matches the all-pairs oracle on random 8^3 pairs") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const Vec3 s{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        const auto a = oracle::random_mask(rng, {8, 8, 8}, s);
        const auto b = oracle::random_mask(rng, {8, 8, 8}, s);
        for (double tau : {1.0, 2.5}) {
            const auto fast = nsd(a, b, {tau});
            const auto slow = oracle::nsd(a, b, tau);
            REQUIRE(fast.has_value() == slow.has_value());
            if (fast) CHECK(std::abs(*fast - *slow) <= 1e-12);
        }
        CHECK(dice(a, b) == oracle::dice(a, b));
    }
}

TEST_CASE("metric properties: symmetry, bounds, tau monotonicity, spacing covariance") {
    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        const Dims d{7, 6, 5};
        const Vec3 s{rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0), rng.uniform(0.5, 3.0)};
        auto a = oracle::random_mask(rng, d, s);
        auto b = oracle::random_mask(rng, d, s);
        a.bits[0] = 1;
        CHECK(dice(a, b) == dice(b, a));
        double prev = -1.0;
        for (double tau : {0.5, 1.0, 2.0, 3.0, 5.0, 9.0}) {
            const double v = *nsd(a, b, {tau});
            CHECK(v == *nsd(b, a, {tau}));
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
            CHECK(v >= prev);
            prev = v;
        }
        const double factor = 1.75;
        auto as = a, bs = b;
        for (auto* m : {&as, &bs})
            for (auto& x : m->spacing) x *= factor;
        CHECK(*nsd(as, bs, {2.0 * factor}) == doctest::Approx(*nsd(a, b, {2.0})).epsilon(1e-12));
    }
}

TEST_CASE("evaluate_case composes single-class calls") {
    Rng rng(3);
    const Grid g{{16, 16, 16}, {1.0, 1.5, 2.0}, {}};
    std::vector<std::uint16_t> p(g.dims.count()), t(g.dims.count());
    for (std::size_t n = 0; n < p.size(); ++n) {
        t[n] = static_cast<std::uint16_t>((n / 97) % 6);
        p[n] = rng.bernoulli(0.8) ? t[n] : static_cast<std::uint16_t>(rng.below(8));
    }
    const LabelVolume pred(g, p, 19), gt(g, t, 19);
    const auto results = evaluate_case(pred, gt, {2.0}, "c1");
    REQUIRE(results.size() == 19);
    for (const auto& r : results) {
        CAPTURE(r.class_id);
        const auto pm = class_mask(pred, r.class_id), gm = class_mask(gt, r.class_id);
        CHECK(r.case_id == "c1");
        CHECK(r.dsc == dice(pm, gm));
        CHECK(r.nsd == nsd(pm, gm, {2.0}));
        CHECK(r.gt_voxels == gm.count());
        CHECK(r.pred_voxels == pm.count());
    }
    CHECK_FALSE(results[18].defined());

    const auto self = evaluate_case(gt, gt, {3.0}, "c2");
    for (const auto& r : self)
        if (r.defined()) CHECK((*r.dsc == 1.0 && *r.nsd == 1.0));
}

TEST_CASE("evaluate_case rejects mismatched grids naming the case") {
    const LabelVolume a(Grid{{4, 4, 4}, {1, 1, 1}, {}}, std::vector<std::uint16_t>(64, 1), 19);
    const LabelVolume b(Grid{{4, 4, 5}, {1, 1, 1}, {}}, std::vector<std::uint16_t>(80, 1), 19);
    try {
        evaluate_case(a, b, {}, "P042");
        FAIL("expected ComparisonError");
    } catch (const ComparisonError& e) {
        CHECK(std::string(e.what()).find("P042") != std::string::npos);
    }
}

TEST_CASE("metrics CSV round trip") {
    TempDir dir("metrics_csv");
    std::vector<MetricResult> rs{{"A001", 1, 0.8347, 0.91, 120, 118}, {"A001", 2, std::nullopt, std::nullopt, 0, 0},
                                 {"P003", 1, 1.0 / 3.0, 0.0, 7, 2}};
    write_metrics_csv(dir / "m.csv", rs, [](int c) { return "c" + std::to_string(c); });
    CHECK(read_metrics_csv(dir / "m.csv") == rs);
    std::ostringstream os;
    write_metrics_csv(os, rs, [](int c) { return "c" + std::to_string(c); });
    CHECK(os.str().rfind("case_id,class_id,class_name,dsc,nsd,gt_voxels,pred_voxels,defined\n", 0) == 0);
    CHECK(os.str().find("A001,2,c2,,,0,0,0") != std::string::npos);
}
