#include <gtest/gtest.h>

#include <filesystem>

#include "wavetomo/pipeline.hpp"

using namespace wavetomo;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("wavetomo_pipe_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json minimal_config() {
  return nlohmann::json::parse(R"({
    "grid": {"n": 32, "dx": 1e-3},
    "phantom": {"kind": "disc", "body_radius": 0.008},
    "geometry": {"elements": 16},
    "frequencies_hz": [200000, 300000],
    "solver": {"pad": 8, "tol": 1e-6},
    "fwi": {"iterations_per_stage": 2, "blur_sigma": 1.0},
    "toft": {"enabled": true, "iterations": 2},
    "das": {"enabled": true, "center_frequency_hz": 500000, "sample_rate_hz": 4000000},
    "seed": 5
  })");
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = io::read_bytes(e.path());
  return out;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  fs::create_directories(dir);
  const auto p = dir / "run.json";
  io::write_bytes(p, j.dump());
  return p;
}

}  // namespace

TEST(RunConfig, DefaultsAndRoundTrip) {
  const RunConfig c = run_config_from_json(minimal_config());
  EXPECT_EQ(c.n, 32u);
  EXPECT_EQ(c.phantom.kind, OrganKind::disc);
  EXPECT_EQ(c.phantom_seed(), 5u);
  EXPECT_EQ(c.fwi.march.frequencies.size(), 2u);
  EXPECT_EQ(c.fwi.solver.pad, 8u);
  EXPECT_TRUE(c.toft.enabled);
  const RunConfig again = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(again), to_json(c));
  EXPECT_FALSE(to_json(c).contains("workers"));
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
  for (const char* path : {"/colour", "/grid/nz", "/phantom/shape", "/geometry/pitch", "/solver/omega",
                           "/fwi/momentum", "/fwi/line_search/wolfe", "/toft/eikonal/order", "/das/window",
                           "/metrics/psnr"}) {
    auto j = minimal_config();
    auto ptr = nlohmann::json::json_pointer(path);
    if (!j.contains(ptr.parent_pointer())) j[ptr.parent_pointer()] = nlohmann::json::object();
    j[ptr] = 1;
    EXPECT_THROW(run_config_from_json(j), StructuralError) << path;
  }
}

TEST(RunConfig, RejectsBadValues) {
  const std::vector<std::pair<const char*, nlohmann::json>> bad{
      {"/frequencies_hz", nlohmann::json::array({3e5, 2e5})},
      {"/frequencies_hz", nlohmann::json::array()},
      {"/grid/dx", -1.0},
      {"/grid/n", "large"},
      {"/fwi/frequencies_hz", nlohmann::json::array({4e5})},
      {"/fwi/rounds", 0},
      {"/solver/tol", 2.0},
      {"/geometry/stencil", "cubic"},
      {"/das/sample_rate_hz", 1e5},
      {"/workers", 0}};
  for (const auto& [path, value] : bad) {
    auto j = minimal_config();
    j[nlohmann::json::json_pointer(path)] = value;
    EXPECT_THROW(run_config_from_json(j), StructuralError) << path;
  }
}

TEST(Pipeline, MinimalRunProducesAllArtifacts) {
  const auto out = temp_dir("minimal");
  const PipelineResult r = run_pipeline(run_config_from_json(minimal_config()), out);
  ASSERT_EQ(r.exit_code, kExitOk) << r.message;
  for (const char* f : {"phantom_labels.wtm", "true_speed.wtm", "measurements.wtm", "fwi_model.wtm", "fwi_report.json",
                        "traveltimes.wtm", "toft_model.wtm", "toft_report.json", "traces.wtm", "das_image.wtm",
                        "metrics.json", "provenance.json"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  const auto metrics = nlohmann::json::parse(io::read_bytes(out / "metrics.json"));
  ASSERT_TRUE(metrics.contains("fwi_ssim"));
  EXPECT_GT(metrics["fwi_ssim"].get<double>(), ssim(io::read_real_field(out / "true_speed.wtm"),
                                                    RealField(Grid2D::centered(32, 32, 1e-3), 1500.0)));
  const auto prov = nlohmann::json::parse(io::read_bytes(out / "provenance.json"));
  EXPECT_EQ(prov["version"], kToolkitVersion);
  EXPECT_EQ(prov["seeds"]["run"], 5);
  EXPECT_EQ(prov["config_sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(prov["artifacts"]["fwi_model.wtm"], sha256_file(out / "fwi_model.wtm"));
  // The recorded configuration reproduces the run.
  EXPECT_EQ(to_json(run_config_from_json(prov["config"])), prov["config"]);
  // Every WTM1 artifact re-encodes to identical bytes.
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().extension() == ".wtm") {
      EXPECT_EQ(io::encode(io::read(e.path())), io::read_bytes(e.path())) << e.path();
    }
}

TEST(Pipeline, RerunAndWorkerCountGiveIdenticalTrees) {
  const auto cfg = run_config_from_json(minimal_config());
  const auto a = temp_dir("rep_a"), b = temp_dir("rep_b"), c = temp_dir("rep_c");
  ASSERT_EQ(run_pipeline(cfg, a).exit_code, kExitOk);
  ASSERT_EQ(run_pipeline(cfg, b).exit_code, kExitOk);
  RunConfig wide = cfg;
  wide.workers = 8;
  ASSERT_EQ(run_pipeline(wide, c).exit_code, kExitOk);
  const auto ta = tree(a);
  EXPECT_EQ(ta, tree(b));
  EXPECT_EQ(ta, tree(c));
}

TEST(Pipeline, ConfigErrorsExitTwoWithoutArtifacts) {
  const auto dir = temp_dir("bad");
  fs::create_directories(dir);
  io::write_bytes(dir / "broken.json", "{\"grid\": ");
  const auto out1 = dir / "out1";
  EXPECT_EQ(run_pipeline_file(dir / "broken.json", out1).exit_code, kExitConfig);
  EXPECT_FALSE(fs::exists(out1));

  auto j = minimal_config();
  j["phantom"]["body_radius"] = 0.05;  // larger than the grid
  const auto out2 = dir / "out2";
  EXPECT_EQ(run_pipeline_file(write_config(dir / "c2", j), out2).exit_code, kExitConfig);
  EXPECT_FALSE(fs::exists(out2));

  j = minimal_config();
  j["unknown"] = true;
  const auto out3 = dir / "out3";
  EXPECT_EQ(run_pipeline_file(write_config(dir / "c3", j), out3).exit_code, kExitConfig);
  EXPECT_FALSE(fs::exists(out3));
}

TEST(Pipeline, SolverDivergenceExitsThree) {
  auto j = minimal_config();
  j["solver"]["n_max"] = 2;
  const auto out = temp_dir("diverge");
  const PipelineResult r = run_pipeline_file(write_config(temp_dir("diverge_cfg"), j), out);
  EXPECT_EQ(r.exit_code, kExitDiverged);
  EXPECT_NE(r.message.find("diverged"), std::string::npos) << r.message;
  EXPECT_TRUE(fs::exists(out / "provenance.json"));
}

TEST(Pipeline, SeedOverrideChangesPhantomSeed) {
  auto j = minimal_config();
  j["phantom"] = {{"kind", "breast"}, {"body_radius", 0.011}, {"lesion_count", 1}};
  j["fwi"]["enabled"] = false;
  j["toft"]["enabled"] = false;
  j["das"]["enabled"] = false;
  const auto dir = temp_dir("seed");
  const auto cfgp = write_config(dir, j);
  ASSERT_EQ(run_pipeline_file(cfgp, dir / "s1", 1u).exit_code, kExitOk);
  ASSERT_EQ(run_pipeline_file(cfgp, dir / "s2", 2u).exit_code, kExitOk);
  EXPECT_NE(io::read_bytes(dir / "s1" / "true_speed.wtm"), io::read_bytes(dir / "s2" / "true_speed.wtm"));
  const auto prov = nlohmann::json::parse(io::read_bytes(dir / "s2" / "provenance.json"));
  EXPECT_EQ(prov["seeds"]["phantom"], 2);
}

TEST(Stack, SingleSliceVolume) {
  const auto dir = temp_dir("stack1");
  fs::create_directories(dir);
  RealField s(Grid2D(12, 10, 1e-3), 1500.0);
  io::write_field(dir / "a.wtm", s);
  stack_slices({dir / "a.wtm"}, 2e-3, dir / "v.wtm");
  const auto v = read_volume(dir / "v.wtm");
  ASSERT_EQ(v.slices.size(), 1u);
  EXPECT_EQ(v.spacing, 2e-3);
  EXPECT_EQ(io::read(dir / "v.wtm").dims, (std::vector<std::uint64_t>{1, 10, 12}));
}

TEST(Stack, IdenticalSlicesAreConstantAlongStack) {
  const auto dir = temp_dir("stack11");
  fs::create_directories(dir);
  RealField s(Grid2D(9, 9, 1e-3));
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = 1400.0 + static_cast<double>(i);
  io::write_field(dir / "s.wtm", s);
  const auto v = stack_slices(std::vector<fs::path>(11, dir / "s.wtm"), 5e-3, dir / "v.wtm");
  const auto back = read_volume(dir / "v.wtm");
  ASSERT_EQ(back.slices.size(), 11u);
  for (const auto& sl : back.slices)
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(sl[i], back.slices[0][i]);
}

TEST(Stack, DistinctSlicesRoundTripExactly) {
  const auto dir = temp_dir("stack3");
  fs::create_directories(dir);
  std::vector<fs::path> files;
  for (int k = 0; k < 3; ++k) {
    RealField s(Grid2D(10, 8, 5e-4, -1e-3, 2e-3));
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = 1450.123 + 7.5 * k + 0.37 * static_cast<double>(i);
    files.push_back(dir / ("s" + std::to_string(k) + ".wtm"));
    io::write_field(files.back(), s);
  }
  stack_slices(files, 1e-3, dir / "v.wtm");
  const auto v = read_volume(dir / "v.wtm");
  for (int k = 0; k < 3; ++k) {
    const auto in = io::read_real_field(files[static_cast<std::size_t>(k)]);
    EXPECT_TRUE(v.slices[static_cast<std::size_t>(k)].grid() == in.grid());
    for (std::size_t i = 0; i < in.size(); ++i) EXPECT_EQ(v.slices[static_cast<std::size_t>(k)][i], in[i]);
  }
}

TEST(Stack, RejectsMismatchedGridsAndEmptyInput) {
  const auto dir = temp_dir("stackbad");
  fs::create_directories(dir);
  io::write_field(dir / "a.wtm", RealField(Grid2D(10, 10, 1e-3)));
  io::write_field(dir / "b.wtm", RealField(Grid2D(11, 10, 1e-3)));
  EXPECT_THROW(stack_slices({dir / "a.wtm", dir / "b.wtm"}, 1e-3, dir / "v.wtm"), StructuralError);
  EXPECT_THROW(stack_slices({}, 1e-3, dir / "v.wtm"), StructuralError);
}
