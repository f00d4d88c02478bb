#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "dunet/data.hpp"
#include "dunet/train.hpp"

using namespace dunet;
namespace fs = std::filesystem;

#ifndef DUNET_CLI_PATH
#define DUNET_CLI_PATH "dunet"
#endif

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(DUNET_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc == -1) return -1;
    return WEXITSTATUS(rc);
}

std::string run_capture(const std::string& args, const fs::path& out_file) {
    const std::string cmd = std::string(DUNET_CLI_PATH) + " " + args + " >" + out_file.string() + " 2>&1";
    std::system(cmd.c_str());
    std::ifstream in(out_file);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / ("dunet_cli_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool tree_equal(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> rel_a;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) rel_a.push_back(fs::relative(e.path(), a));
    std::sort(rel_a.begin(), rel_a.end());
    for (const auto& r : rel_a) {
        if (!fs::exists(b / r)) return false;
        if (file_bytes(a / r) != file_bytes(b / r)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("cli: --help exits 0, missing subcommand exits 1") {
    CHECK(run("--help") == 0);
    CHECK(run("correct --help") == 0);
    CHECK(run("") == 1);
    CHECK(run("frobnicate") == 1);
    CHECK(run("correct --no-such-flag") == 1);
}

TEST_CASE("cli: synth is deterministic and honors count/size") {
    TempDir dir("synth");
    const std::string flags = "synth --count 5 --seed 7 --size 24x32 --illum 0.5,1.5 --out ";
    CHECK(run(flags + (dir.path / "a").string()) == 0);
    CHECK(run(flags + (dir.path / "b").string()) == 0);
    CHECK(tree_equal(dir.path / "a", dir.path / "b"));

    const auto ds = load_dataset(dir.path / "a");
    CHECK(ds.size() == 5);
    CHECK(ds[0].image.shape == Shape{3, 24, 32});
    CHECK(fs::exists(dir.path / "a" / "flat" / "sample_0004.ppm"));
}

TEST_CASE("cli: correct runs with explicit scales and fails cleanly on bad input") {
    TempDir dir("correct");
    CHECK(run("synth --count 1 --seed 3 --size 24x32 --out " + (dir.path / "ds").string()) == 0);
    const fs::path in = dir.path / "ds" / "images" / "sample_0000.ppm";
    const fs::path out = dir.path / "corrected.ppm";
    CHECK(run("correct --input " + in.string() + " --output " + out.string() +
              " --sigmas 1,2,4") == 0);
    const Tensor<float> img = load_ppm(out);
    CHECK(img.shape == Shape{3, 24, 32});

    TempDir cap("correct_msg");
    const std::string msg =
        run_capture("correct --input /nonexistent/x.ppm --output " + out.string(), cap.path / "log");
    CHECK(run("correct --input /nonexistent/x.ppm --output " + out.string()) == 2);
    CHECK(msg.find("/nonexistent/x.ppm") != std::string::npos);
}

TEST_CASE("cli: correct at desk scale stays under the stated budget") {
    TempDir dir("timing");
    CHECK(run("synth --count 1 --seed 11 --size 96x128 --out " + (dir.path / "ds").string()) == 0);
    const auto t0 = std::chrono::steady_clock::now();
    CHECK(run("correct --input " + (dir.path / "ds" / "images" / "sample_0000.ppm").string() +
              " --output " + (dir.path / "out.ppm").string() + " --sigmas 3,10,30") == 0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 5.0);
}

TEST_CASE("cli: train/eval/exceed workflow") {
    TempDir dir("flow");
    CHECK(run("synth --count 4 --seed 5 --size 16x16 --out " + (dir.path / "ds").string()) == 0);

    const std::string common = " --data " + (dir.path / "ds").string() +
                               " --epochs 2 --batch 2 --base-channels 4 --depth 2"
                               " --sigmas 0.8,1.5,2.5 --seed 1 --out ";
    CHECK(run("train --variant unet --lr 0" + common + (dir.path / "zero").string()) == 0);
    CHECK(fs::exists(dir.path / "zero" / "train.log"));
    // lr 0: the final checkpoint holds the untouched initial parameter bank
    {
        Model trained = load_checkpoint(dir.path / "zero" / "final.ckpt");
        Model fresh(trained.config(), 1);
        const auto pt = trained.parameters(), pf = fresh.parameters();
        REQUIRE(pt.size() == pf.size());
        for (std::size_t i = 0; i < pt.size(); ++i) CHECK(pt[i]->value.data == pf[i]->value.data);
    }

    CHECK(run("train --variant unet --lr 0.001" + common + (dir.path / "u").string()) == 0);
    CHECK(run("train --variant dunet --lr 0.001" + common + (dir.path / "d").string()) == 0);

    // parameter counts differ in the logs
    std::ifstream ul(dir.path / "u" / "train.log"), dl(dir.path / "d" / "train.log");
    std::string uline, dline;
    std::getline(ul, uline);
    std::getline(ul, uline); // second line carries the parameter count
    std::getline(dl, dline);
    std::getline(dl, dline);
    CHECK(uline != dline);

    const std::string eval_common = " --data " + (dir.path / "ds").string() + " --report ";
    CHECK(run("eval --model " + (dir.path / "u" / "final.ckpt").string() + eval_common +
              (dir.path / "u.rep").string()) == 0);
    CHECK(run("eval --model " + (dir.path / "u" / "final.ckpt").string() + eval_common +
              (dir.path / "u2.rep").string()) == 0);
    CHECK(file_bytes(dir.path / "u.rep") == file_bytes(dir.path / "u2.rep"));
    CHECK(run("eval --model " + (dir.path / "d" / "final.ckpt").string() + eval_common +
              (dir.path / "d.rep").string()) == 0);

    TempDir cap("exceed");
    const std::string self = run_capture("exceed --report " + (dir.path / "u.rep").string() +
                                             " --baseline " + (dir.path / "u.rep").string(),
                                         cap.path / "log");
    CHECK(self.find("0.000000") != std::string::npos);

    // mismatched id sets exit 2
    {
        std::ofstream bad(dir.path / "bad.rep");
        bad << "# dunet eval report v1\nother_id\t0.5\n";
    }
    CHECK(run("exceed --report " + (dir.path / "u.rep").string() + " --baseline " +
              (dir.path / "bad.rep").string()) == 2);
}

TEST_CASE("cli: config file mirrors flags") {
    TempDir dir("cfg");
    std::ofstream cfg(dir.path / "synth.cfg");
    cfg << "# synth settings\ncount=3\nseed=9\nsize=16x16\nout=" << (dir.path / "ds").string()
        << "\n";
    cfg.close();
    CHECK(run("synth --config " + (dir.path / "synth.cfg").string()) == 0);
    CHECK(load_dataset(dir.path / "ds").size() == 3);
}

TEST_CASE("cli: gradcheck exits 0 clean and 3 with the injected fault") {
    TempDir cap("gradcheck");
    const std::string table = run_capture("gradcheck --seeds 2", cap.path / "log");
    CHECK(table.find("dynamic-illum composite") != std::string::npos);
    CHECK(table.find("FAIL") == std::string::npos);
    CHECK(run("gradcheck --seeds 2") == 0);
    CHECK(run("gradcheck --seeds 2 --self-test") == 3);
}
