#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "pedseg/error.hpp"
#include "pedseg/random.hpp"
#include "pedseg/resample.hpp"

using namespace pedseg;

namespace {

double affine(double x, double y, double z) { return 2.0 * x + 3.0 * y - z + 5.0; }

ScalarVolume affine_volume(Dims d) {
    std::vector<double> v(d.count());
    for (std::size_t k = 0; k < d.nz; ++k)
        for (std::size_t j = 0; j < d.ny; ++j)
            for (std::size_t i = 0; i < d.nx; ++i) v[d.index(i, j, k)] = affine(i, j, k);
    return ScalarVolume(Grid{d, {1.2, 0.9, 2.5}, {}}, v, SampleType::float64);
}

}  // namespace

TEST_CASE("grid arithmetic") {
    const Grid g{{40, 40, 40}, {2, 2, 2}, {}};
    const auto up = resampled_grid(g, ScaleFactor{1.5});
    CHECK(up.dims == Dims{60, 60, 60});
    CHECK(up.spacing[0] == doctest::Approx(2.0 / 1.5));
    const auto iso = resampled_grid(Grid{{30, 20, 10}, {1.0, 1.5, 3.0}, {}}, TargetSpacing{{1.5, 1.5, 1.5}});
    CHECK(iso.dims == Dims{20, 20, 20});
    CHECK(resampled_grid(Grid{{3, 3, 3}, {1, 1, 1}, {}}, ScaleFactor{0.01}).dims == Dims{1, 1, 1});
    CHECK_THROWS_AS(resampled_grid(g, ScaleFactor{0.0}), ParameterError);
    CHECK_THROWS_AS(resampled_grid(g, ScaleFactor{-1.5}), ParameterError);
    CHECK_THROWS_AS(resampled_grid(g, TargetSpacing{{1.5, 0.0, 1.5}}), ParameterError);
}

TEST_CASE("align-corners mapping") {
    CHECK(mapped_coordinate(0, 10, 15) == 0.0);
    CHECK(mapped_coordinate(14, 10, 15) == doctest::Approx(9.0));
    CHECK(mapped_coordinate(3, 1, 5) == 0.0);
    CHECK(mapped_coordinate(0, 7, 1) == 0.0);
}

TEST_CASE("identity and affine exactness") {
    const auto v = affine_volume({7, 6, 5});
    const auto same = resample_scalar(v, ScaleFactor{1.0});
    for (std::size_t n = 0; n < v.dims().count(); ++n) CHECK(std::abs(same[n] - v[n]) <= 1e-6);

    for (double f : {0.5, 1.5, 2.0, 0.7, 3.3}) {
        CAPTURE(f);
        const auto out = resample_scalar(v, ScaleFactor{f});
        const Dims& d = out.dims();
        for (std::size_t k = 0; k < d.nz; ++k)
            for (std::size_t j = 0; j < d.ny; ++j)
                for (std::size_t i = 0; i < d.nx; ++i) {
                    const double x = mapped_coordinate(i, 7, d.nx), y = mapped_coordinate(j, 6, d.ny),
                                 z = mapped_coordinate(k, 5, d.nz);
                    CHECK(std::abs(out.at(i, j, k) - affine(x, y, z)) <= 1e-6);
                }
    }
}

TEST_CASE("trilinear output stays within the input range") {
    Rng rng(9);
    std::vector<double> v(5 * 6 * 7);
    for (auto& x : v) x = rng.uniform(-1000, 1000);
    const ScalarVolume in(Grid{{5, 6, 7}, {1, 1, 1}, {}}, v, SampleType::float64);
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    for (double f : {0.6, 1.5, 2.2}) {
        const auto out = resample_scalar(in, ScaleFactor{f});
        for (double x : out.data()) {
            CHECK(x >= *lo - 1e-9);
            CHECK(x <= *hi + 1e-9);
        }
    }
}

TEST_CASE("nearest-neighbour labels match the per-voxel oracle") {
    Rng rng(4);
    const Dims d{9, 9, 9};
    std::vector<std::uint16_t> labels(d.count());
    for (auto& l : labels) l = static_cast<std::uint16_t>(rng.below(6));
    const LabelVolume in(Grid{d, {1, 1, 1}, {}}, labels);
    CHECK(resample_label(in, ScaleFactor{1.0}) == in);

    for (double f : {1.5, 0.5, 2.0, 1.3}) {
        const auto out = resample_label(in, ScaleFactor{f});
        const Dims& o = out.dims();
        // Oracle: the nearest input index, with exact halves resolved downward.
        auto nearest = [](std::size_t i, std::size_t n_in, std::size_t n_out) {
            const double c = mapped_coordinate(i, n_in, n_out);
            std::size_t best = 0;
            for (std::size_t q = 1; q < n_in; ++q)
                if (std::abs(c - q) < std::abs(c - best)) best = q;
            return best;
        };
        std::set<std::uint16_t> in_set(labels.begin(), labels.end()), out_set;
        for (std::size_t k = 0; k < o.nz; ++k)
            for (std::size_t j = 0; j < o.ny; ++j)
                for (std::size_t i = 0; i < o.nx; ++i) {
                    CHECK(out.at(i, j, k) == in.at(nearest(i, 9, o.nx), nearest(j, 9, o.ny), nearest(k, 9, o.nz)));
                    out_set.insert(out.at(i, j, k));
                }
        CHECK(std::includes(in_set.begin(), in_set.end(), out_set.begin(), out_set.end()));
    }
}

TEST_CASE("single-label volume stays single-label; round trip dims") {
    const LabelVolume in(Grid{{8, 6, 4}, {1, 1, 1}, {}}, std::vector<std::uint16_t>(192, 3));
    const auto out = resample_label(in, ScaleFactor{1.5});
    CHECK(std::all_of(out.labels().begin(), out.labels().end(), [](auto l) { return l == 3; }));
    const auto back = resample_label(out, ScaleFactor{1.0 / 1.5});
    CHECK(back.dims() == in.dims());
}

TEST_CASE("DA pipeline") {
    const auto img = affine_volume({10, 8, 6});
    auto threshold = [](const ScalarVolume& v) {
        std::vector<std::uint16_t> l(v.dims().count());
        for (std::size_t n = 0; n < l.size(); ++n) l[n] = v[n] > 20.0 ? 1 : 0;
        return LabelVolume(v.grid(), l, 1);
    };
    const auto direct = threshold(img);
    CHECK(da_upscale_pipeline(img, threshold, 1.0) == direct);

    const ScalarVolume flat(Grid{{6, 5, 4}, {2, 2, 2}, {}}, std::vector<double>(120, 50.0));
    const auto out = da_upscale_pipeline(flat, threshold, 1.5);
    CHECK(out.dims() == flat.dims());
    CHECK(std::all_of(out.labels().begin(), out.labels().end(), [](auto l) { return l == 1; }));

    auto wrong = [](const ScalarVolume& v) { return LabelVolume(Grid{{1, 1, 1}, v.spacing(), {}}, {0}); };
    CHECK_THROWS_AS(da_upscale_pipeline(flat, wrong, 1.5), ComparisonError);
    CHECK_THROWS_AS(da_upscale_pipeline(flat, threshold, 0.0), ParameterError);
}
