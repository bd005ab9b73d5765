#ifndef ATLAS_PIPELINE_HPP
#define ATLAS_PIPELINE_HPP

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atlas/classify.hpp"
#include "atlas/images.hpp"
#include "atlas/lipschitz.hpp"
#include "atlas/matcher.hpp"
#include "atlas/paths.hpp"
#include "atlas/vit.hpp"

namespace atlas {

enum class Experiment { Spectrum, Ldlc, Match, Interpolate, Walk, Classify };
std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);

/// An image file, or a generated pattern image when `path` is empty.
struct InputSpec {
  std::optional<std::filesystem::path> path;
  PatternClass pattern = PatternClass::Stripes;
  std::uint64_t seed = 0;
  std::string label;   ///< defaults to the pattern name for generated images
  std::string target;  ///< classify only: label to match toward
};

struct LdlcParams {
  double epsilon = kDefaultLdlcEpsilon;
  int grid = kDefaultLdlcGrid;
  int singular = 5;
  int random = 200;
  int null = 200;
  int optimized = 200;
  int optimized_iters = 20;
  double optimized_lr = 0.05;
  std::uint64_t optimized_seed_base = 1000;
  std::optional<Eigen::Index> rank_cut;
};

struct InterpolateParams {
  int steps = 20;
  bool frames = false;
  bool match_first = true;  ///< endpoint B is the matched input rather than inputs[1]
};

struct WalkParams {
  double step_len = 0.5;
  int n_steps = 50;
  std::optional<double> drift_cap;  ///< default 0.01 * sigma_max at x0
  std::optional<Eigen::Index> rank_cut;
  WalkMode mode = WalkMode::Random;
};

struct AnchorSpec {
  std::string label;
  std::vector<InputSpec> inputs;
};

struct ClassifyParams {
  std::vector<AnchorSpec> anchors;  ///< default: one generated exemplar (seed 0) per pattern
  double temperature = kSoftmaxTemperature;
};

struct PipelineConfig {
  Experiment experiment = Experiment::Spectrum;
  std::uint64_t seed = 7;
  VitConfig vit;
  std::uint64_t weights_seed = 7;
  std::optional<std::filesystem::path> weights_file;
  std::vector<InputSpec> inputs;
  std::filesystem::path output_dir = "out";
  bool save_ppm = true;

  LdlcParams ldlc;
  MatchConfig match;
  InterpolateParams interpolate;
  WalkParams walk;
  ClassifyParams classify;

  /// Relative input and weight paths are resolved against `base_dir`.
  /// Unknown keys and wrong types are ConfigErrors.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  /// Structural checks that need no file access.
  void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

struct RunResult {
  std::vector<std::filesystem::path> artifacts;  ///< relative to output_dir, sorted
  double wall_seconds = 0.0;
};

/// Loads every referenced file before any computation, runs the experiment,
/// and writes its outputs plus manifest.json into cfg.output_dir.
RunResult run_pipeline(const PipelineConfig& cfg);

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitIo = 4;

int exit_code_for(const std::exception& e);
nlohmann::json error_json(const std::exception& e);

/// run_pipeline with errors mapped to exit codes; on failure the error JSON
/// goes to `err` and, when the output directory is writable, error.json.
int run_pipeline_guarded(const PipelineConfig& cfg, std::ostream& err);

} // namespace atlas

#endif // ATLAS_PIPELINE_HPP
