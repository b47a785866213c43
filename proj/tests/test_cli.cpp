// End-to-end tests driving the lunar-restore binary (path from the
// LUNAR_RESTORE_BIN environment variable, set by CTest).

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "lunar/checkpoint.hpp"
#include "lunar/image_io.hpp"
#include "lunar/run_record.hpp"
#include "support/fixtures.hpp"

using namespace lunar;

namespace {

std::string binary_path() {
    const char* p = std::getenv("LUNAR_RESTORE_BIN");
    if (!p) throw std::runtime_error("LUNAR_RESTORE_BIN not set");
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = binary_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct CliFixture {
    testsupport::TempDir tmp{"cli"};
    std::string mosaic_path;

    CliFixture() {
        // 256x128 fixture mosaic, 64 px/deg over lon [+2,-2], lat [+1,-1],
        // with a stripe pair at x in [70,71].
        const auto hdr = MosaicHeader::from_bounds(2.0, -2.0, 1.0, -1.0, 64.0);
        mosaic_path = tmp.file("m.pgm");
        const auto field = testsupport::crater_field(256, 128, 7);
        testsupport::write_fixture_mosaic(mosaic_path, hdr, [&](int x, int y) {
            if (x == 70 || x == 71) return 0.0;
            return field.at(x, y);
        });
        testsupport::write_clean_crops(tmp.file("clean"), 6, 32, 51);
        testsupport::write_stripe_templates(tmp.file("stripes.json"));
    }
};

TEST(Cli, CropCenterAndResize) {
    CliFixture fx;
    const auto out = fx.tmp.file("crop.png");
    ASSERT_EQ(run_cli("crop --mosaic " + fx.mosaic_path + " --lon 0 --lat 0 --size-px 64 --out " + out), 0);
    const auto img = read_png(out);
    EXPECT_EQ(img.w, 64);
    EXPECT_EQ(img.h, 64);
    EXPECT_TRUE(std::filesystem::exists(out + ".run.json"));

    const auto resized = fx.tmp.file("crop32.png");
    ASSERT_EQ(run_cli("crop --mosaic " + fx.mosaic_path +
                      " --lon 0 --lat 0 --size-px 48 --resize 32 --out " + resized),
              0);
    const auto small = read_png(resized);
    EXPECT_EQ(small.w, 32);
    EXPECT_EQ(small.h, 32);
}

TEST(Cli, CropOutOfBoundsExitsTwoNamingAxis) {
    CliFixture fx;
    const std::string cmd = binary_path() + " crop --mosaic " + fx.mosaic_path +
                            " --lon 200 --lat 0 --size-px 32 --out " + fx.tmp.file("x.png") + " 2>" +
                            fx.tmp.file("err.txt") + " >/dev/null";
    const int status = std::system(cmd.c_str());
    ASSERT_TRUE(WIFEXITED(status));
    EXPECT_EQ(WEXITSTATUS(status), 2);
    std::ifstream ef(fx.tmp.file("err.txt"));
    std::string err((std::istreambuf_iterator<char>(ef)), std::istreambuf_iterator<char>());
    EXPECT_NE(err.find("longitude"), std::string::npos);
}

TEST(Cli, MissingMosaicExitsOne) {
    CliFixture fx;
    EXPECT_EQ(run_cli("crop --mosaic " + fx.tmp.file("nope.pgm") + " --lon 0 --lat 0 --size-px 8 --out " +
                      fx.tmp.file("x.png")),
              1);
}

TEST(Cli, BadFlagExitsTwo) {
    EXPECT_EQ(run_cli("crop --definitely-not-a-flag"), 2);
    EXPECT_EQ(run_cli("no-such-subcommand"), 2);
}

TEST(Cli, DetectWritesTemplate) {
    CliFixture fx;
    // Make a striped crop from the mosaic region containing the stripes.
    const auto crop = fx.tmp.file("striped.png");
    ASSERT_EQ(run_cli("crop --mosaic " + fx.mosaic_path + " --lon 0.9 --lat 0 --size-px 64 --out " + crop), 0);
    const auto tpl_out = fx.tmp.file("tpl.json");
    ASSERT_EQ(run_cli("detect --in " + crop + " --template-out " + tpl_out), 0);
    const auto tpl = load_template(tpl_out);
    ASSERT_EQ(tpl.runs.size(), 1u);
    EXPECT_EQ(tpl.runs[0].width_px, 2);
}

TEST(Cli, DetectOnCleanImageExitsTwo) {
    CliFixture fx;
    const auto clean = fx.tmp.file("clean/clean_000.png");
    EXPECT_EQ(run_cli("detect --in " + clean + " --template-out " + fx.tmp.file("t.json")), 2);
}

TEST(Cli, SynthDeterministicTrees) {
    CliFixture fx;
    const std::string args = "synth --clean-dir " + fx.tmp.file("clean") + " --templates " +
                             fx.tmp.file("stripes.json") +
                             " --n-train 4 --n-val 2 --n-test 2 --seed 11 --crop-size 16 --max-coverage 0.1";
    ASSERT_EQ(run_cli(args + " --out-dir " + fx.tmp.file("dsA")), 0);
    ASSERT_EQ(run_cli(args + " --out-dir " + fx.tmp.file("dsB")), 0);
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("dsA") + "/run_record.json"));
    // Run records embed the differing out_dir paths; everything else must be
    // byte-identical.
    std::filesystem::remove(fx.tmp.file("dsA") + "/run_record.json");
    std::filesystem::remove(fx.tmp.file("dsB") + "/run_record.json");
    EXPECT_EQ(hash_tree(fx.tmp.file("dsA")), hash_tree(fx.tmp.file("dsB")));
}

TEST(Cli, TrainEvalRestoreWorkflow) {
    CliFixture fx;
    // synth
    ASSERT_EQ(run_cli("synth --clean-dir " + fx.tmp.file("clean") + " --templates " + fx.tmp.file("stripes.json") +
                      " --n-train 8 --n-val 0 --n-test 4 --seed 3 --crop-size 16 --max-coverage 0.1 --out-dir " +
                      fx.tmp.file("ds")),
              0);
    const auto manifest = fx.tmp.file("ds/manifest.json");

    // train (tiny probe run)
    ASSERT_EQ(run_cli("train --manifest " + manifest + " --out-dir " + fx.tmp.file("run") +
                      " --depth 1 --base-channels 2 --epochs 2 --batch-size 4 --seed 5"),
              0);
    const auto ckpt = fx.tmp.file("run/checkpoint_final.ckpt");
    ASSERT_TRUE(std::filesystem::exists(ckpt));
    ASSERT_TRUE(std::filesystem::exists(fx.tmp.file("run/loss_history.csv")));

    // eval with the trained checkpoint + triptychs
    ASSERT_EQ(run_cli("eval --manifest " + manifest + " --ckpt " + ckpt + " --split test --report " +
                      fx.tmp.file("report.json") + " --report-csv " + fx.tmp.file("report.csv") +
                      " --triptych-dir " + fx.tmp.file("trip")),
              0);
    std::ifstream rf(fx.tmp.file("report.json"));
    nlohmann::json rep;
    rf >> rep;
    EXPECT_EQ(rep.at("records").size(), 4u);
    // Test split ids start after the 8 train samples.
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("trip/triptych_000008.png")));

    // eval with the identity stub
    ASSERT_EQ(run_cli("eval --manifest " + manifest + " --stub-identity --split test --report " +
                      fx.tmp.file("stub.json")),
              0);
    std::ifstream sf(fx.tmp.file("stub.json"));
    nlohmann::json stub;
    sf >> stub;
    for (const auto& r : stub.at("records"))
        EXPECT_EQ(r.at("psnr_restored_db"), r.at("psnr_corrupted_db"));

    // restore a region around the stripes
    ASSERT_EQ(run_cli("restore --mosaic " + fx.mosaic_path + " --rect 1.5 0.8 0.5 -0.8 --ckpt " + ckpt +
                      " --out " + fx.tmp.file("region.png")),
              0);
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("region.png")));
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("region.png.json")));
    std::ifstream scf(fx.tmp.file("region.png.json"));
    nlohmann::json sidecar;
    scf >> sidecar;
    EXPECT_TRUE(sidecar.at("restored").get<bool>());
}

// Non-finite loss must surface as exit code 3: resume from a checkpoint
// poisoned with NaN weights.
TEST(Cli, NonFiniteLossExitsThree) {
    CliFixture fx;
    ASSERT_EQ(run_cli("synth --clean-dir " + fx.tmp.file("clean") + " --templates " + fx.tmp.file("stripes.json") +
                      " --n-train 2 --n-val 0 --n-test 0 --seed 4 --crop-size 16 --max-coverage 0.1 --out-dir " +
                      fx.tmp.file("ds3")),
              0);
    const auto manifest = fx.tmp.file("ds3/manifest.json");
    ASSERT_EQ(run_cli("train --manifest " + manifest + " --out-dir " + fx.tmp.file("run3") +
                      " --depth 1 --base-channels 2 --epochs 1 --batch-size 2"),
              0);
    auto ckpt = load_checkpoint(fx.tmp.file("run3/checkpoint_final.ckpt"));
    ckpt.epoch = 0;
    for (auto& v : ckpt.params.at("head.w").data) v = std::numeric_limits<double>::quiet_NaN();
    save_checkpoint(ckpt, fx.tmp.file("poisoned.ckpt"));

    EXPECT_EQ(run_cli("train --manifest " + manifest + " --out-dir " + fx.tmp.file("run3b") +
                      " --depth 1 --base-channels 2 --epochs 1 --batch-size 2 --resume " +
                      fx.tmp.file("poisoned.ckpt")),
              3);
}

// Subcommands must write only inside their --out/--out-dir target (plus the
// run record beside it): run from a scratch cwd and check it stays empty.
TEST(Cli, NoWritesOutsideOutputTarget) {
    CliFixture fx;
    const auto scratch = fx.tmp.file("scratch_cwd");
    std::filesystem::create_directories(scratch);
    const std::string cmd = "cd " + scratch + " && " + binary_path() + " crop --mosaic " + fx.mosaic_path +
                            " --lon 0 --lat 0 --size-px 32 --out " + fx.tmp.file("outside.png") +
                            " >/dev/null 2>&1";
    ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    EXPECT_TRUE(std::filesystem::is_empty(scratch));
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("outside.png")));
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("outside.png.run.json")));
}

// Replay: rebuild a dataset from nothing but its run-record and compare trees.
TEST(Cli, SynthReplayFromRunRecord) {
    CliFixture fx;
    ASSERT_EQ(run_cli("synth --clean-dir " + fx.tmp.file("clean") + " --templates " + fx.tmp.file("stripes.json") +
                      " --n-train 3 --n-val 1 --n-test 1 --seed 21 --crop-size 16 --max-coverage 0.1 --out-dir " +
                      fx.tmp.file("orig")),
              0);
    const auto rec = load_run_record(fx.tmp.file("orig/run_record.json"));
    const auto& a = rec.at("args");
    const std::string replay_cmd =
        "synth --clean-dir " + a.at("clean_dir").get<std::string>() + " --templates " +
        a.at("templates").get<std::string>() + " --n-train " + std::to_string(a.at("n_train").get<std::int64_t>()) +
        " --n-val " + std::to_string(a.at("n_val").get<std::int64_t>()) + " --n-test " +
        std::to_string(a.at("n_test").get<std::int64_t>()) + " --seed " +
        std::to_string(a.at("seed").get<std::uint64_t>()) + " --crop-size " +
        std::to_string(a.at("crop_size").get<int>()) + " --max-coverage " +
        std::to_string(a.at("max_coverage").get<double>()) + " --out-dir " + fx.tmp.file("replayed");
    ASSERT_EQ(run_cli(replay_cmd), 0);

    // Identical trees modulo the run records themselves (which embed out_dir).
    std::filesystem::remove(fx.tmp.file("orig/run_record.json"));
    std::filesystem::remove(fx.tmp.file("replayed/run_record.json"));
    EXPECT_EQ(hash_tree(fx.tmp.file("orig")), hash_tree(fx.tmp.file("replayed")));
}

TEST(Cli, ConfigFileMirrorsFlags) {
    CliFixture fx;
    // Same synth via config file; flags should be optional.
    std::ofstream cf(fx.tmp.file("synth.toml"));
    cf << "[synth]\n"
       << "clean-dir = \"" << fx.tmp.file("clean") << "\"\n"
       << "templates = \"" << fx.tmp.file("stripes.json") << "\"\n"
       << "n-train = 2\nn-val = 0\nn-test = 0\nseed = 9\ncrop-size = 16\nmax-coverage = 0.1\n"
       << "out-dir = \"" << fx.tmp.file("from_config") << "\"\n";
    cf.close();
    ASSERT_EQ(run_cli("synth --config " + fx.tmp.file("synth.toml")), 0);
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("from_config/manifest.json")));

    // Flag overrides file: different out-dir.
    ASSERT_EQ(run_cli("synth --config " + fx.tmp.file("synth.toml") + " --out-dir " + fx.tmp.file("override")), 0);
    EXPECT_TRUE(std::filesystem::exists(fx.tmp.file("override/manifest.json")));
}

}  // namespace
