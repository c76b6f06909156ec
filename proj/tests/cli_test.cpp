#include "doctest.h"
#include "pgan/cli.hpp"
#include "pgan/training.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pgan;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "pgan_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
    auto p = dir / "input.cfg";
    std::ofstream(p) << text;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kToy =
    "dataset = toy2d\ntoy_samples = 128\nbatch_size = 16\nz_dim = 4\ntoy_hidden = 16\nseed = 3\n";

}  // namespace

TEST_CASE("usage errors") {
    auto r = run({"bogus"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.rfind("pgan: error[usage]: unknown command 'bogus'", 0) == 0);
    CHECK(r.err.find("Usage:") != std::string::npos);

    CHECK(run({}).code == kExitUsage);
    auto dir = scratch("usage");
    const auto cfg = write_config(dir, kToy + "epochs = 1\n").string();
    CHECK(run({"train", "--config", cfg}).code == kExitUsage);
    CHECK(run({"train", "--config", cfg, "--out", dir.string(), "--fast"}).code == kExitUsage);
    CHECK(run({"train", "--config", (dir / "missing.cfg").string(), "--out", dir.string()}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("config errors name the line and key") {
    auto dir = scratch("config");
    const auto cfg = write_config(dir, "dataset = toy2d\nepochs = 1\nlearning_rate = 3\n").string();
    auto r = run({"train", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("error[config]") != std::string::npos);
    CHECK(r.err.find("line 3") != std::string::npos);
    CHECK(r.err.find("learning_rate") != std::string::npos);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
}

TEST_CASE("train smoke run") {
    auto dir = scratch("train");
    const auto cfg = write_config(dir, kToy + "epochs = 1\n").string();
    auto out = dir / "out";
    auto r = run({"train", "--config", cfg, "--out", out.string()});
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(out / "runlog.ndjson"));
    CHECK(fs::exists(out / "checkpoint_epoch000.bin"));
    CHECK(fs::exists(out / "likelihood_curve.csv"));
    CHECK(fs::exists(out / "summary.txt"));
    CHECK(r.out == read_file(out / "summary.txt"));
    CHECK(r.out.find("final_real_likelihood") != std::string::npos);

    auto ins = run({"inspect-checkpoint", (out / "checkpoint_epoch000.bin").string()});
    CHECK(ins.code == kExitOk);
    CHECK(ins.out.rfind("gen.fc1.weight (4,16) min=", 0) == 0);
    CHECK(ins.out.find("gmm.means (1,1)") != std::string::npos);

    auto fig = run({"emit-figures", out.string(), "--out", (dir / "figs").string()});
    CHECK(fig.code == kExitOk);
    CHECK(read_file(dir / "figs" / "summary.txt") == read_file(out / "summary.txt"));

    CHECK(run({"inspect-checkpoint", (out / "runlog.ndjson").string()}).code == kExitError);
}

TEST_CASE("same config and seed reproduce the summary; the effective config re-runs identically") {
    auto dir = scratch("repro");
    const auto cfg = write_config(dir, kToy + "epochs = 1\n").string();
    REQUIRE(run({"train", "--config", cfg, "--out", (dir / "a").string()}).code == kExitOk);
    REQUIRE(run({"train", "--config", cfg, "--out", (dir / "b").string()}).code == kExitOk);
    CHECK(read_file(dir / "a" / "summary.txt") == read_file(dir / "b" / "summary.txt"));
    CHECK(read_file(dir / "a" / "runlog.ndjson") == read_file(dir / "b" / "runlog.ndjson"));

    REQUIRE(run({"train", "--config", (dir / "a" / "config.txt").string(), "--out", (dir / "c").string()}).code ==
            kExitOk);
    CHECK(read_file(dir / "a" / "runlog.ndjson") == read_file(dir / "c" / "runlog.ndjson"));

    REQUIRE(run({"train", "--config", cfg, "--out", (dir / "d").string(), "--seed", "4"}).code == kExitOk);
    CHECK(read_file(dir / "a" / "runlog.ndjson") != read_file(dir / "d" / "runlog.ndjson"));
    CHECK(TrainConfig::load(dir / "d" / "config.txt").seed == 4);
}

TEST_CASE("missing dataset has its own exit code") {
    auto dir = scratch("missing");
    ::setenv("PGAN_DATA_DIR", (dir / "nowhere").c_str(), 1);
    const auto cfg = write_config(dir, "dataset = mnist\ndata_path = absent-images-idx3-ubyte\nepochs = 1\n").string();
    auto r = run({"train", "--config", cfg, "--out", (dir / "out").string()});
    ::unsetenv("PGAN_DATA_DIR");
    CHECK(r.code == kExitMissingData);
    CHECK(r.err.rfind("pgan: error[missing-dataset]:", 0) == 0);
}

TEST_CASE("non-finite training aborts with its own exit code") {
    auto dir = scratch("abort");
    const auto cfg = write_config(dir, kToy + "epochs = 3\nlr = 1e300\n").string();
    auto r = run({"train", "--config", cfg, "--out", (dir / "out").string()});
    CHECK(r.code == kExitAborted);
    CHECK(r.err.rfind("pgan: error[aborted]:", 0) == 0);
    auto log = RunLog::read(dir / "out" / "runlog.ndjson");
    CHECK(log.abort_reason.has_value());
}

TEST_CASE("experiment commands write their reports") {
    auto dir = scratch("experiments");
    const auto toy = write_config(dir, kToy + "epochs = 4\nfreeze = gen:1:2\n").string();

    auto land = run({"toy-landscape", "--config", toy, "--out", (dir / "land").string()});
    REQUIRE(land.code == kExitOk);
    CHECK(land.out.find("pgan_far_region_score") != std::string::npos);
    CHECK(land.out.find("lsgan_far_region_score") != std::string::npos);
    CHECK(fs::exists(dir / "land" / "pgan" / "landscape.ppm"));
    CHECK(fs::exists(dir / "land" / "lsgan" / "landscape.csv"));
    CHECK(fs::exists(dir / "land" / "config.txt"));

    auto fr = run({"freeze-experiment", "--config", toy, "--out", (dir / "freeze").string()});
    REQUIRE(fr.code == kExitOk);
    CHECK(fr.out.find("pgan_disc_grad_ratio") != std::string::npos);
    CHECK(fs::exists(dir / "freeze" / "lsgan" / "grad_stats.csv"));

    auto fg = run({"fixed-generator", "--config", toy, "--out", (dir / "fixed").string()});
    REQUIRE(fg.code == kExitOk);
    CHECK(fg.out.find("pgan_final_real_likelihood") != std::string::npos);
    CHECK(fg.out.find("lsgan_histogram_overlap") != std::string::npos);

    auto hist = run({"histograms", "--config", toy, "--out", (dir / "hist").string()});
    REQUIRE(hist.code == kExitOk);
    CHECK(hist.out.find("epoch003_histogram_overlap") != std::string::npos);
    CHECK(fs::exists(dir / "hist" / "hist_epoch003.csv"));

    auto again = run({"toy-landscape", "--config", toy, "--out", (dir / "land2").string()});
    CHECK(again.out == land.out);
}
