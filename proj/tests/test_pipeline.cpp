#include <fstream>
#include <iterator>
#include <sstream>

#include <gtest/gtest.h>

#include "atlas/pipeline.hpp"
#include "support.hpp"

using namespace atlas;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "atlas-test-pipeline" / name;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json tiny_model() {
  const VitConfig c = atlas::testing::tiny_config();
  return {{"weights_seed", 3},
          {"config",
           {{"image_size", c.image_size}, {"channels", c.channels},     {"patch_size", c.patch_size},
            {"n_patches", c.n_patches},   {"d_model", c.d_model},       {"n_heads", c.n_heads},
            {"head_dim", c.head_dim},     {"mlp_hidden", c.mlp_hidden}, {"n_layers", c.n_layers},
            {"embed_dim", c.embed_dim}}}};
}

json base_config(const std::string& experiment, const fs::path& out) {
  return {{"experiment", experiment},
          {"seed", 5},
          {"model", tiny_model()},
          {"output_dir", out.string()},
          {"inputs", {{{"pattern", "stripes"}, {"seed", 1}}, {{"pattern", "disks"}, {"seed", 2}}}}};
}

} // namespace

TEST(PipelineConfig, DefaultsAndEcho) {
  const PipelineConfig c = PipelineConfig::from_json(json::object());
  EXPECT_EQ(c.experiment, Experiment::Spectrum);
  EXPECT_EQ(c.vit, VitConfig::reference());
  EXPECT_EQ(c.match.cos_tol, 0.99);
  const json echo = c.to_json();
  EXPECT_EQ(PipelineConfig::from_json(echo).to_json(), echo);
}

TEST(PipelineConfig, NullDisablesOptionalFields) {
  const PipelineConfig c = PipelineConfig::from_json({{"match", {{"cos_tol", nullptr}, {"loss_tol", 0.5}}}});
  EXPECT_FALSE(c.match.cos_tol);
  EXPECT_EQ(c.match.loss_tol, 0.5);
}

TEST(PipelineConfig, RejectsBadInput) {
  EXPECT_THROW(PipelineConfig::from_json({{"bogus", 1}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"match", {{"lr", 0.1}}}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"seed", "seven"}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"seed", -1}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"experiment", "dance"}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"inputs", {{{"pattern", "stripes"}, {"path", "a.ppm"}}}}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"inputs", {{{"pattern", "zigzag"}}}}}), ConfigError);
  EXPECT_THROW(PipelineConfig::from_json({{"walk", {{"mode", "sideways"}}}}), ConfigError);
}

TEST(PipelineConfig, RelativePathsResolveAgainstBase) {
  const PipelineConfig c =
      PipelineConfig::from_json({{"inputs", {{{"path", "img.ppm"}}}}, {"model", {{"weights_file", "/abs/w.evit"}}}},
                                "/data/run");
  EXPECT_EQ(*c.inputs[0].path, fs::path("/data/run/img.ppm"));
  EXPECT_EQ(*c.weights_file, fs::path("/abs/w.evit"));
}

TEST(PipelineConfig, ValidateInputCounts) {
  PipelineConfig c = PipelineConfig::from_json(base_config("spectrum", "unused"));
  EXPECT_THROW(c.validate(), ConfigError);
  c.experiment = Experiment::Match;
  EXPECT_NO_THROW(c.validate());
  c.experiment = Experiment::Classify;
  EXPECT_NO_THROW(c.validate());
  c.inputs[0].target = "stripes";
  EXPECT_THROW(c.validate(), ConfigError);
  c.inputs[0].target = "triangles";
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Pipeline, SpectrumReport) {
  const fs::path out = scratch("spectrum");
  json j = base_config("spectrum", out);
  j["model"] = {{"weights_seed", 7}};
  j["inputs"].erase(1);
  run_pipeline(PipelineConfig::from_json(j));
  const json report = json::parse(slurp(out / "svd-report.json"));
  EXPECT_EQ(report["sigma"].size(), 16u);
  EXPECT_EQ(report["effective_rank"], 16);
  EXPECT_EQ(report["sigma_max"], report["sigma"][0]);
  EXPECT_EQ(report["anchor_checksum"].get<std::string>().size(), 64u);
  const json manifest = json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(manifest["experiment"], "spectrum");
  EXPECT_EQ(manifest["artifacts"].size(), 2u);
  for (const auto& a : manifest["artifacts"]) EXPECT_EQ(a["sha256"].get<std::string>().size(), 64u);
}

TEST(Pipeline, EveryExperimentIsDeterministic) {
  for (const std::string e : {"ldlc", "match", "interpolate", "walk", "classify"}) {
    json j = base_config(e, "");
    if (e == "ldlc" || e == "walk") j["inputs"].erase(1);
    j["ldlc"] = {{"random", 5}, {"null", 5}, {"optimized", 3}, {"singular", 2}};
    j["walk"] = {{"n_steps", 4}, {"step_len", 0.2}};
    j["interpolate"] = {{"steps", 4}, {"frames", true}};
    j["match"] = {{"max_iters", 30}};
    std::vector<std::vector<fs::path>> files;
    std::vector<fs::path> dirs = {scratch(e + "-a"), scratch(e + "-b")};
    for (const auto& dir : dirs) {
      j["output_dir"] = dir.string();
      files.push_back(run_pipeline(PipelineConfig::from_json(j)).artifacts);
    }
    ASSERT_EQ(files[0], files[1]) << e;
    ASSERT_FALSE(files[0].empty()) << e;
    for (const auto& f : files[0]) EXPECT_EQ(slurp(dirs[0] / f), slurp(dirs[1] / f)) << e << " " << f;
    const json m0 = json::parse(slurp(dirs[0] / "manifest.json"));
    const json m1 = json::parse(slurp(dirs[1] / "manifest.json"));
    EXPECT_EQ(m0["artifacts"], m1["artifacts"]) << e;
  }
}

TEST(Pipeline, MissingInputFileIsValidationError) {
  const fs::path out = scratch("missing");
  json j = base_config("match", out);
  j["inputs"][1] = {{"path", "/nonexistent/img.ppm"}};
  std::ostringstream err;
  EXPECT_EQ(run_pipeline_guarded(PipelineConfig::from_json(j), err), kExitValidation);
  const json e = json::parse(slurp(out / "error.json"));
  EXPECT_EQ(e["exit_code"], 2);
  EXPECT_EQ(e["error"], "config");
  EXPECT_FALSE(fs::exists(out / "manifest.json"));
}

TEST(Pipeline, UnwritableOutputIsIoError) {
  const fs::path blocker = scratch("blocker");
  std::ofstream(blocker) << "not a directory";
  json j = base_config("match", blocker / "sub");
  std::ostringstream err;
  EXPECT_EQ(run_pipeline_guarded(PipelineConfig::from_json(j), err), kExitIo);
  EXPECT_EQ(json::parse(err.str())["error"], "io");
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), kExitValidation);
  EXPECT_EQ(exit_code_for(ParseError("x", 3)), kExitValidation);
  EXPECT_EQ(exit_code_for(DimensionError("x")), kExitValidation);
  EXPECT_EQ(exit_code_for(NumericError("x", 1.0)), kExitDivergence);
  EXPECT_EQ(exit_code_for(DivergenceError("x", {})), kExitDivergence);
  EXPECT_EQ(exit_code_for(DegenerateError("x")), kExitDivergence);
  EXPECT_EQ(exit_code_for(IoError("x")), kExitIo);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitFailure);
  EXPECT_EQ(error_json(ParseError("bad", 17))["offset"], 17);
}

TEST(Pipeline, MalformedConfigFileReportsOffset) {
  const fs::path p = scratch("bad.json");
  std::ofstream(p) << "{\"seed\": 7,,}";
  try {
    read_json_file(p);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
  EXPECT_THROW(read_json_file(scratch("absent.json")), ConfigError);
}
