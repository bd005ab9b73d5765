#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "atlas/pipeline.hpp"

namespace {

template <typename T>
void set_if(nlohmann::json& j, const char* block, const char* key, const std::optional<T>& v) {
  if (v) j[block][key] = *v;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Empirical embedding-space analysis of a toy vision transformer"};
  std::string experiment;
  std::string config_path;
  std::optional<std::uint64_t> seed, weights_seed;
  std::optional<std::string> out_dir, weights_file, walk_mode;
  std::optional<double> lr, loss_tol, cos_tol, budget, epsilon, step_len, drift_cap, temperature;
  std::optional<int> max_iters, record_every, grid, steps, n_steps;
  bool no_cos_tol = false, frames = false, no_ppm = false;

  app.add_option("experiment", experiment, "spectrum | ldlc | match | interpolate | walk | classify")->required();
  app.add_option("--config", config_path, "JSON pipeline config")->required();
  app.add_option("--seed", seed, "experiment seed (directions, walks)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--weights-seed", weights_seed, "seed for generated weights");
  app.add_option("--weights-file", weights_file, "EVIT weights file");
  app.add_option("--lr", lr, "match learning rate");
  app.add_option("--max-iters", max_iters, "match iteration cap");
  app.add_option("--loss-tol", loss_tol, "stop when 0.5|f(x)-t|^2 <= value");
  app.add_option("--cos-tol", cos_tol, "stop when cos(f(x), t) >= value");
  app.add_flag("--no-cos-tol", no_cos_tol, "disable the cosine stopping rule");
  app.add_option("--budget", budget, "max mean |x - x0| per pixel");
  app.add_option("--record-every", record_every, "trace recording stride");
  app.add_option("--epsilon", epsilon, "ldlc half-width");
  app.add_option("--grid", grid, "ldlc grid points (odd)");
  app.add_option("--steps", steps, "interpolation segments");
  app.add_flag("--frames", frames, "dump interpolation frames as PPM");
  app.add_option("--step-len", step_len, "null-walk step length");
  app.add_option("--n-steps", n_steps, "null-walk step count");
  app.add_option("--drift-cap", drift_cap, "null-walk drift before correction");
  app.add_option("--walk-mode", walk_mode, "random | straight");
  app.add_option("--temperature", temperature, "classification softmax temperature");
  app.add_flag("--no-ppm", no_ppm, "skip PPM image outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return atlas::kExitValidation;
  }

  atlas::PipelineConfig cfg;
  try {
    nlohmann::json j = atlas::read_json_file(config_path);
    if (!j.is_object()) throw atlas::ConfigError("config must be a JSON object");
    j["experiment"] = experiment;
    if (seed) j["seed"] = *seed;
    if (out_dir) j["output_dir"] = *out_dir;
    if (no_ppm) j["save_ppm"] = false;
    if (weights_file) {
      j["model"]["weights_file"] = *weights_file;
      if (j["model"].contains("config")) j["model"].erase("config");
    }
    set_if(j, "model", "weights_seed", weights_seed);
    set_if(j, "match", "learning_rate", lr);
    set_if(j, "match", "max_iters", max_iters);
    set_if(j, "match", "loss_tol", loss_tol);
    set_if(j, "match", "cos_tol", cos_tol);
    if (no_cos_tol) j["match"]["cos_tol"] = nullptr;
    set_if(j, "match", "perturb_budget", budget);
    set_if(j, "match", "record_every", record_every);
    set_if(j, "ldlc", "epsilon", epsilon);
    set_if(j, "ldlc", "grid", grid);
    set_if(j, "interpolate", "steps", steps);
    if (frames) j["interpolate"]["frames"] = true;
    set_if(j, "walk", "step_len", step_len);
    set_if(j, "walk", "n_steps", n_steps);
    set_if(j, "walk", "drift_cap", drift_cap);
    set_if(j, "walk", "mode", walk_mode);
    set_if(j, "classify", "temperature", temperature);
    cfg = atlas::PipelineConfig::from_json(j, std::filesystem::path(config_path).parent_path());
    // --weights-file is relative to the working directory, not the config.
    if (weights_file) cfg.weights_file = *weights_file;
  } catch (const std::exception& e) {
    std::cerr << atlas::error_json(e).dump() << '\n';
    return atlas::exit_code_for(e);
  }
  return atlas::run_pipeline_guarded(cfg, std::cerr);
}
