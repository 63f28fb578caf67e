#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "wavetomo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace wavetomo;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(WAVETOMO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("wavetomo_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, SubcommandChainSucceeds) {
  const auto d = temp_dir("chain");
  ASSERT_EQ(run("phantom --kind breast --n 40 --dx 1e-3 --body-radius 0.012 --lesions 1 --seed 3 --out " + q(d / "ph")), 0);
  ASSERT_TRUE(fs::exists(d / "ph" / "speed.wtm"));
  ASSERT_EQ(run("simulate --speed " + q(d / "ph" / "speed.wtm") + " --freqs 200000 --elements 16 --out " + q(d / "sim")), 0);
  ASSERT_EQ(run("fwi --data " + q(d / "sim" / "measurements.wtm") + " --n 40 --dx 1e-3 --out " + q(d / "fwi")), 0);
  EXPECT_TRUE(fs::exists(d / "fwi" / "fwi_model.wtm"));
  ASSERT_EQ(run("toft --speed " + q(d / "ph" / "speed.wtm") + " --elements 16 --out " + q(d / "toft")), 0);
  EXPECT_TRUE(fs::exists(d / "toft" / "traveltimes.wtm"));
  ASSERT_EQ(run("toft --times " + q(d / "toft" / "traveltimes.wtm") + " --like " + q(d / "ph" / "speed.wtm") +
                " --out " + q(d / "toft2")),
            0);
  EXPECT_TRUE(io::read_bytes(d / "toft" / "toft_model.wtm") == io::read_bytes(d / "toft2" / "toft_model.wtm"));
  ASSERT_EQ(run("das --speed " + q(d / "ph" / "speed.wtm") + " --elements 16 --stride 2 --f0 5e5 --rate 4e6 --out " +
                q(d / "das")),
            0);
  EXPECT_TRUE(fs::exists(d / "das" / "das_image.wtm"));
  ASSERT_EQ(run("metrics --truth " + q(d / "ph" / "speed.wtm") + " --pred " + q(d / "fwi" / "fwi_model.wtm") +
                " --metric ssim --out " + q(d / "m")),
            0);
  const auto m = nlohmann::json::parse(io::read_bytes(d / "m" / "metrics.json"));
  EXPECT_EQ(m["metric"], "ssim");
  EXPECT_EQ(m["count"], 1);
  ASSERT_EQ(run("metrics --truth " + q(d / "sim" / "measurements.wtm") + " --pred " + q(d / "sim" / "measurements.wtm") +
                " --metric rrmse --out " + q(d / "m2")),
            0);
  const auto m2 = nlohmann::json::parse(io::read_bytes(d / "m2" / "metrics.json"));
  EXPECT_EQ(m2["count"], 16);
  EXPECT_EQ(m2["mean"], 0.0);
  ASSERT_EQ(run("stack --slices " + q(d / "ph" / "speed.wtm") + " " + q(d / "fwi" / "fwi_model.wtm") +
                " --spacing 2e-3 --out " + q(d / "vol")),
            0);
  EXPECT_EQ(read_volume(d / "vol" / "volume.wtm").slices.size(), 2u);
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto d = temp_dir("errors");
  EXPECT_EQ(run("no-such-command"), 2);
  EXPECT_EQ(run("fwi --data " + q(d / "missing.wtm")), 2);
  EXPECT_EQ(run("phantom --kind torso"), 2);
  EXPECT_EQ(run("phantom --kind arm --n 32 --dx 1e-3 --body-radius 0.02 --out " + q(d / "ph")), 2);
  io::write_bytes(d / "bad.json", R"({"grid": {"n": 32}, "surprise": 1})");
  EXPECT_EQ(run("run --config " + q(d / "bad.json") + " --out " + q(d / "run")), 2);
  EXPECT_FALSE(fs::exists(d / "run"));
}

TEST(Cli, RunDivergenceExitsThree) {
  const auto d = temp_dir("diverge");
  io::write_bytes(d / "cfg.json", R"({
    "grid": {"n": 32, "dx": 1e-3}, "phantom": {"kind": "disc", "body_radius": 0.008},
    "geometry": {"elements": 8}, "frequencies_hz": [300000], "solver": {"pad": 8, "n_max": 2}})");
  EXPECT_EQ(run("run --config " + q(d / "cfg.json") + " --out " + q(d / "out")), 3);
}

TEST(Cli, RunSeedAndWorkerFlagsAreDeterministic) {
  const auto d = temp_dir("flags");
  io::write_bytes(d / "cfg.json", R"({
    "grid": {"n": 32, "dx": 1e-3}, "phantom": {"kind": "breast", "body_radius": 0.011, "lesion_count": 1},
    "geometry": {"elements": 8}, "frequencies_hz": [250000], "solver": {"pad": 8},
    "fwi": {"iterations_per_stage": 1}})");
  ASSERT_EQ(run("run --config " + q(d / "cfg.json") + " --seed 9 --workers 1 --out " + q(d / "a")), 0);
  ASSERT_EQ(run("run --config " + q(d / "cfg.json") + " --seed 9 --workers 8 --out " + q(d / "b")), 0);
  EXPECT_EQ(io::read_bytes(d / "a" / "provenance.json"), io::read_bytes(d / "b" / "provenance.json"));
  EXPECT_TRUE(io::read_bytes(d / "a" / "fwi_model.wtm") == io::read_bytes(d / "b" / "fwi_model.wtm"));
  const auto prov = nlohmann::json::parse(io::read_bytes(d / "a" / "provenance.json"));
  EXPECT_EQ(prov["seeds"]["run"], 9);
}
