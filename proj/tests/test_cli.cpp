#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "pedseg/cohort.hpp"
#include "pedseg/volume_io.hpp"
#include "test_util.hpp"

using namespace pedseg;

namespace {

struct Run {
    int code = -1;
    std::string err;
};

Run run_cli(const std::string& args, const TempDir& dir) {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = std::string(PEDSEG_CLI) + " " + args + " >/dev/null 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(err_path);
    std::stringstream ss;
    ss << in.rdbuf();
    r.err = ss.str();
    return r;
}

}  // namespace

TEST_CASE("CLI exit codes") {
    TempDir dir("cli_codes");
    CHECK(run_cli("--help", dir).code == 0);
    CHECK(run_cli("phantom --help", dir).code == 0);
    CHECK(run_cli("--no-such-flag", dir).code == 2);
    CHECK(run_cli("", dir).code == 2);
    CHECK(run_cli("plan --kind nonsense --manifest x.json", dir).code == 2);
    CHECK(run_cli("--threads 0 phantom", dir).code == 2);
    CHECK(run_cli("resample --in x.nii --scale 1.5 --spacing 2", dir).code == 2);
    const auto missing = run_cli("predict --model " + (dir / "none.json").string() + " --in none.nii", dir);
    CHECK(missing.code == 1);
}

TEST_CASE("CLI pipeline: phantom, plan, train, predict, eval, report") {
    TempDir dir("cli_pipeline");
    const std::string d = dir.path.string();
    REQUIRE(run_cli("--seed 4 phantom --n-adult 4 --n-pediatric 4 --size 16 --spacing 5 --out " + d + "/c", dir).code ==
            0);
    const auto manifest = load_manifest(dir / "c/manifest.json");
    REQUIRE(manifest.cases.size() == 8);

    REQUIRE(run_cli("plan --kind cl --p 0.5 --stage1-epochs 2 --stage2-epochs 2 --manifest " + d +
                        "/c/manifest.json --out " + d + "/plan.json",
                    dir)
                .code == 0);
    CHECK(load_plan(dir / "plan.json").stages.size() == 2);

    REQUIRE(run_cli("train --voxels-per-case 64 --plan " + d + "/plan.json --manifest " + d + "/c/manifest.json --out " +
                        d + "/model",
                    dir)
                .code == 0);
    for (const char* f : {"model/stage1.json", "model/stage2.json", "model/final.json", "model/loss.csv"})
        CHECK(std::filesystem::exists(dir / f));

    std::filesystem::create_directories(dir / "pred");
    for (const auto& c : manifest.cases) {
        const std::string in = (dir.path / "c" / c.image_path).string();
        REQUIRE(run_cli("predict --model " + d + "/model/final.json --in " + in + " --out " + d + "/pred/" + c.case_id +
                            ".nii.gz",
                        dir)
                    .code == 0);
    }
    REQUIRE(run_cli("eval --split all --pred-dir " + d + "/pred --manifest " + d + "/c/manifest.json --out " + d +
                        "/metrics.csv",
                    dir)
                .code == 0);
    REQUIRE(run_cli("report --metrics " + d + "/metrics.csv --names Model --manifest " + d +
                        "/c/manifest.json --out " + d + "/table.md --per-age " + d + "/per_age.csv",
                    dir)
                .code == 0);
    CHECK(read_text_file(dir / "table.md").find("| Model |") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "per_age.csv"));

    // A prediction on the wrong grid is a runtime failure naming the case.
    const auto& victim = manifest.cases.front();
    REQUIRE(run_cli("resample --label --scale 1.5 --in " + d + "/pred/" + victim.case_id + ".nii.gz --out " + d +
                        "/pred/" + victim.case_id + ".nii.gz",
                    dir)
                .code == 0);
    const auto bad = run_cli("eval --split all --pred-dir " + d + "/pred --manifest " + d + "/c/manifest.json --out " +
                                 d + "/metrics2.csv",
                             dir);
    CHECK(bad.code == 1);
    CHECK(bad.err.find(victim.case_id) != std::string::npos);
}
