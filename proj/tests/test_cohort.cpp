#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "pedseg/cohort.hpp"
#include "pedseg/error.hpp"
#include "pedseg/random.hpp"
#include "test_util.hpp"

using namespace pedseg;

namespace {

CaseRecord record(std::string id, double age) {
    return {std::move(id), age, age >= 17.0 ? Domain::adult : Domain::pediatric, "img", "lab", Split::train};
}

Manifest small_manifest(int n_adult, int n_pediatric) {
    Manifest m;
    for (int i = 0; i < n_adult; ++i) m.cases.push_back(record("A" + std::to_string(100 + i), 20.0 + i));
    for (int i = 0; i < n_pediatric; ++i) m.cases.push_back(record("P" + std::to_string(100 + i), (i % 17) + 0.5));
    return m;
}

std::size_t count_domain(const Manifest& m, const std::vector<std::string>& ids, Domain d) {
    std::size_t n = 0;
    for (const auto& id : ids) n += m.at(id).domain == d ? 1 : 0;
    return n;
}

}  // namespace

TEST_CASE("age bins use floored years") {
    CHECK(assign_age_bin(0.0) == AgeBin::y0_3);
    CHECK(assign_age_bin(3.0) == AgeBin::y0_3);
    CHECK(assign_age_bin(3.99) == AgeBin::y0_3);
    CHECK(assign_age_bin(4.0) == AgeBin::y4_6);
    CHECK(assign_age_bin(9.5) == AgeBin::y7_9);
    CHECK(assign_age_bin(12.0) == AgeBin::y10_12);
    CHECK(assign_age_bin(16.9) == AgeBin::y13_16);
    CHECK(assign_age_bin(17.0) == AgeBin::y17_plus);
    CHECK(assign_age_bin(95.0) == AgeBin::y17_plus);
    CHECK_THROWS_AS(assign_age_bin(-0.1), DomainError);
    CHECK(bin_label(AgeBin::y10_12) == "10-12");
    CHECK(bin_label(AgeBin::y17_plus) == "17+");
    for (int y = 0; y < 100; ++y) {
        const auto [lo, hi] = bin_years(assign_age_bin(y + 0.25));
        CHECK(lo <= y);
        if (hi >= 0) CHECK(y <= hi);
    }
}

TEST_CASE("case records enforce the adult/age invariant") {
    CHECK_NOTHROW(validate(record("a", 17.0)));
    auto bad = record("b", 16.0);
    bad.domain = Domain::adult;
    CHECK_THROWS_AS(validate(bad), ManifestError);
    auto nopath = record("c", 5.0);
    nopath.image_path.clear();
    CHECK_THROWS_AS(validate(nopath), ManifestError);
}

TEST_CASE("manifest JSON round trip and lookup") {
    TempDir dir("manifest");
    auto m = small_manifest(3, 4);
    m.cases[2].split = Split::test;
    save_manifest(m, dir / "m.json");
    const auto back = load_manifest(dir / "m.json");
    CHECK(back.cases == m.cases);
    CHECK(back.base_dir == dir.path);
    CHECK(back.resolve("x/y.nii") == dir.path / "x/y.nii");
    CHECK(manifest_to_json(back) == manifest_to_json(m));
    CHECK_THROWS_AS(back.at("nope"), ManifestError);
    CHECK_THROWS_AS(manifest_from_json("{\"cases\": 3}"), ManifestError);
    CHECK_THROWS_AS(manifest_from_json("not json"), ManifestError);
}

TEST_CASE("split_balanced: exact division per bin") {
    Manifest m;
    int id = 0;
    for (double age : {1.0, 5.0, 8.0, 11.0, 14.0, 30.0})
        for (int i = 0; i < 10; ++i) m.cases.push_back(record("c" + std::to_string(id++), age));
    const auto out = split_balanced(m, {0.8, 0.1, 0.1}, 3);
    std::map<std::pair<AgeBin, Split>, int> counts;
    for (const auto& c : out.cases) ++counts[{assign_age_bin(c.age_years), c.split}];
    for (AgeBin b : kAgeBins) {
        CHECK(counts[{b, Split::train}] == 8);
        CHECK(counts[{b, Split::val}] == 1);
        CHECK(counts[{b, Split::test}] == 1);
    }
    CHECK(split_balanced(m, {0.8, 0.1, 0.1}, 3).cases == out.cases);
    CHECK_THROWS_AS(split_balanced(Manifest{}, {0.8, 0.1, 0.1}, 3), DomainError);
    CHECK_THROWS_AS(split_balanced(m, {0.8, 0.1, 0.2}, 3), ParameterError);
}

TEST_CASE("split_balanced: 1000 random ages stay within one case of target") {
    Rng rng(8);
    Manifest m;
    for (int i = 0; i < 1000; ++i) m.cases.push_back(record("r" + std::to_string(i), rng.uniform(0.0, 40.0)));
    const auto out = split_balanced(m, {0.8, 0.1, 0.1}, 99);
    std::map<AgeBin, std::array<int, 3>> counts;
    for (const auto& c : out.cases) ++counts[assign_age_bin(c.age_years)][static_cast<int>(c.split)];
    for (const auto& [bin, c] : counts) {
        const double size = c[0] + c[1] + c[2];
        CHECK(std::abs(c[0] - 0.8 * size) <= 1.0);
        CHECK(std::abs(c[1] - 0.1 * size) <= 1.0);
        CHECK(std::abs(c[2] - 0.1 * size) <= 1.0);
    }
}

TEST_CASE("baseline plans") {
    const auto m = small_manifest(6, 8);
    const auto adult = plan_baseline(BaselineKind::adult_seg, m, 3, 1);
    CHECK(adult.name == "AdultSeg");
    REQUIRE(adult.stages.size() == 1);
    CHECK(adult.stages[0].epochs.size() == 3);
    for (const auto& e : adult.stages[0].epochs) CHECK(count_domain(m, e, Domain::adult) == 6);
    const auto mix = plan_baseline(BaselineKind::mix_seg, m, 2, 1);
    CHECK(mix.stages[0].epochs[0].size() == 14);

    const auto other = plan_baseline(BaselineKind::mix_seg, m, 2, 2);
    CHECK(other.stages[0].epochs[0] != mix.stages[0].epochs[0]);
    auto a = other.stages[0].epochs[0], b = mix.stages[0].epochs[0];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);

    CHECK_THROWS_AS(plan_baseline(BaselineKind::adult_seg, small_manifest(0, 4), 2, 1), ParameterError);
    CHECK_THROWS_AS(plan_baseline(BaselineKind::pediatric_seg, m, 0, 1), ParameterError);
}

TEST_CASE("rehearsal plans") {
    const auto m = small_manifest(10, 7);
    const auto seq = plan_rehearsal(m, {0.0, 3, 4, 5, false});
    CHECK(seq.name == "Sequential");
    CHECK(seq.stages[0] == plan_baseline(BaselineKind::adult_seg, m, 3, 5).stages[0]);
    for (const auto& e : seq.stages[1].epochs) {
        CHECK(count_domain(m, e, Domain::adult) == 0);
        CHECK(count_domain(m, e, Domain::pediatric) == 7);
    }
    const auto full = plan_rehearsal(m, {1.0, 1, 4, 5, false});
    CHECK(full.name == "CL(p=1)");
    for (const auto& e : full.stages[1].epochs) CHECK(e.size() == 17);
    CHECK(rehearsal_name(0.25) == "CL(p=0.25)");

    const auto fixed = plan_rehearsal(m, {0.3, 1, 4, 5, true});
    std::set<std::string> first;
    for (const auto& id : fixed.stages[1].epochs[0])
        if (m.at(id).domain == Domain::adult) first.insert(id);
    CHECK(first.size() == 3);
    for (const auto& e : fixed.stages[1].epochs) {
        std::set<std::string> s;
        for (const auto& id : e)
            if (m.at(id).domain == Domain::adult) s.insert(id);
        CHECK(s == first);
    }
    CHECK_THROWS_AS(plan_rehearsal(m, {1.5, 1, 1, 5, false}), ParameterError);
    CHECK_THROWS_AS(plan_rehearsal(m, {-0.1, 1, 1, 5, false}), ParameterError);
}

TEST_CASE("rehearsal inclusion is binomial(n, p) per epoch") {
    Manifest m;
    for (int i = 0; i < 1000; ++i) m.cases.push_back(record("A" + std::to_string(i), 30.0));
    for (int i = 0; i < 5; ++i) m.cases.push_back(record("P" + std::to_string(i), 5.0));
    const auto plan = plan_rehearsal(m, {0.25, 1, 200, 17, false});
    double total = 0.0;
    for (const auto& e : plan.stages[1].epochs) total += static_cast<double>(count_domain(m, e, Domain::adult));
    const double mean = total / 200.0;
    const double sd_of_mean = std::sqrt(1000 * 0.25 * 0.75 / 200.0);
    CHECK(std::abs(mean - 250.0) <= 3.0 * sd_of_mean);
}

TEST_CASE("plan JSON round trip, determinism and validation") {
    TempDir dir("plan");
    const auto m = small_manifest(5, 5);
    const auto plan = plan_rehearsal(m, {0.6, 2, 3, 11, false});
    save_plan(plan, dir / "p.json");
    CHECK(load_plan(dir / "p.json") == plan);
    CHECK(plan_to_json(plan_rehearsal(m, {0.6, 2, 3, 11, false})) == plan_to_json(plan));
    CHECK_NOTHROW(validate(plan, m));
    auto broken = plan;
    broken.stages[0].epochs[0].push_back("ghost");
    CHECK_THROWS_AS(validate(broken, m), ManifestError);
}
