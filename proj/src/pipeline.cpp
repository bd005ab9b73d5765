#include "atlas/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "atlas/checksum.hpp"
#include "atlas/metrics.hpp"
#include "atlas/parallel.hpp"
#include "atlas/spectral.hpp"

namespace atlas {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kLdlcStream = 1;
constexpr std::uint64_t kWalkStream = 2;

// ---------------------------------------------------------------- parsing

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; });
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_u64(const json& obj, const char* key, std::uint64_t& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!ok) throw ConfigError(std::string(key) + " must be a non-negative integer");
  out = v.get<std::uint64_t>();
}

void read_u32(const json& obj, const char* key, std::uint32_t& out) {
  std::uint64_t v = out;
  read_u64(obj, key, v);
  if (v > 0xFFFFFFFFu) throw ConfigError(std::string(key) + " is out of range");
  out = std::uint32_t(v);
}

/// Absent keeps the default, null disables.
template <typename T>
void read_optional(const json& obj, const char* key, std::optional<T>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
  } else {
    out = obj.at(key).get<T>();
  }
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

fs::path resolve_path(const std::string& p, const fs::path& base) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

InputSpec parse_input(const json& j, const fs::path& base, const std::string& where) {
  check_keys(j, {"path", "pattern", "seed", "label", "target"}, where);
  InputSpec s;
  if (j.contains("path") == j.contains("pattern")) throw ConfigError(where + " needs exactly one of path or pattern");
  if (j.contains("path")) {
    s.path = resolve_path(j.at("path").get<std::string>(), base);
  } else {
    s.pattern = pattern_from_string(j.at("pattern").get<std::string>());
    s.label = to_string(s.pattern);
  }
  read_u64(j, "seed", s.seed);
  read(j, "label", s.label);
  read(j, "target", s.target);
  return s;
}

json input_json(const InputSpec& s) {
  json j;
  if (s.path) {
    j["path"] = s.path->string();
  } else {
    j["pattern"] = to_string(s.pattern);
    j["seed"] = s.seed;
  }
  if (!s.label.empty()) j["label"] = s.label;
  if (!s.target.empty()) j["target"] = s.target;
  return j;
}

WalkMode walk_mode_from_string(const std::string& s) {
  if (s == "random") return WalkMode::Random;
  if (s == "straight") return WalkMode::Straight;
  throw ConfigError("unknown walk mode '" + s + "'");
}

std::string to_string(WalkMode m) { return m == WalkMode::Random ? "random" : "straight"; }

std::vector<AnchorSpec> effective_anchors(const ClassifyParams& p) {
  if (!p.anchors.empty()) return p.anchors;
  std::vector<AnchorSpec> out;
  for (PatternClass c : {PatternClass::Stripes, PatternClass::Checkers, PatternClass::Disks}) {
    InputSpec s;
    s.pattern = c;
    s.label = to_string(c);
    out.push_back({to_string(c), {s}});
  }
  return out;
}

std::string target_label(const InputSpec& original, const std::vector<std::string>& labels) {
  if (!original.target.empty()) return original.target;
  const auto it = std::find(labels.begin(), labels.end(), original.label);
  const std::size_t i = std::size_t(it - labels.begin());
  return labels[(i + 1) % labels.size()];
}

// ---------------------------------------------------------------- outputs

class OutputDir {
public:
  explicit OutputDir(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw IoError("cannot create output directory " + root_.string() + ": " + ec.message());
  }

  void text(const fs::path& name, const std::string& content) {
    const fs::path path = root_ / name;
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out) throw IoError("cannot write " + path.string());
    record(name);
  }

  void json_file(const fs::path& name, const json& j) { text(name, j.dump(2) + "\n"); }

  template <typename Writer>
  void csv(const fs::path& name, Writer&& write) {
    std::ostringstream s;
    write(s);
    text(name, s.str());
  }

  void image(const fs::path& name, const Vector& x, const VitConfig& config) {
    const Tensor t = input_to_image(x, config);
    std::ostringstream s;
    if (name.extension() == ".ppm") {
      write_ppm(s, t);
    } else {
      write_emat(s, t);
    }
    text(name, s.str());
  }

  void adopt(const fs::path& name) { record(name); }

  const fs::path& root() const { return root_; }
  std::vector<fs::path> artifacts() const {
    std::vector<fs::path> out = files_;
    std::sort(out.begin(), out.end());
    return out;
  }

private:
  void record(const fs::path& name) {
    if (std::find(files_.begin(), files_.end(), name) == files_.end()) files_.push_back(name);
  }

  fs::path root_;
  std::vector<fs::path> files_;
};

// ---------------------------------------------------------------- loading

Vector load_input(const InputSpec& s, const VitConfig& config) {
  if (!s.path) return synthetic_image(s.pattern, s.seed, config);
  if (!fs::exists(*s.path)) throw ConfigError("input file does not exist: " + s.path->string());
  return image_to_input(load_image(*s.path), config);
}

struct Loaded {
  std::unique_ptr<VitModel> model;
  std::vector<Vector> inputs;
  std::vector<std::vector<LabeledInput>> anchor_inputs;
};

Loaded load_all(const PipelineConfig& cfg) {
  Loaded l;
  if (cfg.weights_file) {
    if (!fs::exists(*cfg.weights_file)) throw ConfigError("weights file does not exist: " + cfg.weights_file->string());
    auto [config, weights] = load_evit(*cfg.weights_file);
    l.model = std::make_unique<VitModel>(config, std::move(weights));
  } else {
    Rng rng(cfg.weights_seed);
    l.model = std::make_unique<VitModel>(cfg.vit, init_weights(cfg.vit, rng));
  }
  const VitConfig& vc = l.model->config();
  for (const auto& s : cfg.inputs) l.inputs.push_back(load_input(s, vc));
  if (cfg.experiment == Experiment::Classify) {
    for (const auto& a : effective_anchors(cfg.classify)) {
      std::vector<LabeledInput> group;
      for (const auto& s : a.inputs) group.push_back({a.label, load_input(s, vc)});
      l.anchor_inputs.push_back(std::move(group));
    }
  }
  return l;
}

// ---------------------------------------------------------------- experiments

void run_spectrum(const PipelineConfig&, const Loaded& l, OutputDir& out) {
  const Vector& x0 = l.inputs[0];
  const Matrix j = jacobian_at(*l.model, x0);
  const JacobianSvd svd = svd_analysis(j, x0);
  const SvdResiduals res = svd_residuals(j, svd);
  json report;
  report["sigma"] = std::vector<double>(svd.s.data(), svd.s.data() + svd.s.size());
  report["effective_rank"] = svd.effective_rank();
  report["sigma_max"] = svd.sigma_max;
  report["anchor_checksum"] = sha256_hex(x0);
  report["residuals"] = {{"reconstruction", res.reconstruction},
                         {"u_orthogonality", res.u_orthogonality},
                         {"v_orthogonality", res.v_orthogonality},
                         {"descending", res.descending}};
  out.json_file("svd-report.json", report);
  out.csv("svd-spectrum.csv", [&](std::ostream& s) {
    s << "index,sigma\n";
    for (Eigen::Index i = 0; i < svd.s.size(); ++i) s << i << ',' << format_double(svd.s[i]) << '\n';
  });
}

void run_ldlc(const PipelineConfig& cfg, const Loaded& l, OutputDir& out) {
  const LdlcParams& p = cfg.ldlc;
  const Vector& x0 = l.inputs[0];
  const VitConfig& vc = l.model->config();
  const JacobianSvd svd = svd_analysis(jacobian_at(*l.model, x0), x0);
  Rng rng(cfg.seed, kLdlcStream);
  DirectionSuite suite = direction_suite(svd, rng, {p.singular, p.random, p.null}, p.rank_cut);

  if (p.optimized > 0) {
    std::vector<Vector> targets(std::size_t(p.optimized));
    parallel_for(targets.size(), [&](std::size_t i) {
      targets[i] = (*l.model)(synthetic_image(PatternClass(i % 3), p.optimized_seed_base + i, vc));
    });
    MatchConfig mc;
    mc.learning_rate = p.optimized_lr;
    mc.max_iters = p.optimized_iters;
    mc.cos_tol = std::nullopt;
    mc.loss_tol = 0.0;
    const auto opt = optimized_directions(*l.model, x0, targets, mc);
    suite.directions.insert(suite.directions.end(), opt.begin(), opt.end());
  }

  const auto dists = ldlc_distribution(*l.model, x0, suite.directions, p.epsilon, p.grid);
  out.csv("ldlc-report.csv", [&](std::ostream& s) { write_ldlc_report_csv(s, dists); });
  out.csv("ldlc-hist.csv", [&](std::ostream& s) { write_ldlc_hist_csv(s, dists); });
  json summary;
  summary["epsilon"] = p.epsilon;
  summary["grid"] = p.grid;
  summary["sigma"] = std::vector<double>(svd.s.data(), svd.s.data() + svd.s.size());
  summary["null_skipped"] = suite.skipped;
  summary["families"] = json::array();
  for (const auto& d : dists) {
    summary["families"].push_back({{"family", to_string(d.family)},
                                   {"count", d.estimates.size()},
                                   {"min", d.summary.min},
                                   {"median", d.summary.median},
                                   {"max", d.summary.max},
                                   {"mean", d.summary.mean}});
  }
  out.json_file("ldlc-summary.json", summary);
}

MatchResult run_match_to(const PipelineConfig& cfg, const Model& model, const Vector& x0, const Vector& target,
                         OutputDir& out, const fs::path& trace_name) {
  try {
    MatchResult r = match_embedding(model, x0, target, cfg.match);
    out.csv(trace_name, [&](std::ostream& s) { write_match_trace_csv(s, r.trace); });
    return r;
  } catch (const DivergenceError& e) {
    out.csv(trace_name, [&](std::ostream& s) { write_match_trace_csv(s, e.trace()); });
    throw;
  }
}

json match_json(const MatchResult& r, const Vector& x0) {
  const PerturbationReport pr = perturbation_report(x0, r.x_star);
  const MatchStep& last = r.trace.steps.back();
  return {{"converged", r.trace.converged},
          {"reason", to_string(r.trace.reason)},
          {"iterations", r.trace.iterations},
          {"clamp_events", r.trace.clamp_events},
          {"final_loss", last.loss},
          {"final_cosine", last.cosine},
          {"mean_abs_delta", pr.mean_abs},
          {"max_abs_delta", pr.max_abs},
          {"linf", pr.linf}};
}

void run_match(const PipelineConfig& cfg, const Loaded& l, OutputDir& out) {
  const Vector& x0 = l.inputs[0];
  const VitConfig& vc = l.model->config();
  const MatchResult r = run_match_to(cfg, *l.model, x0, (*l.model)(l.inputs[1]), out, "match-trace.csv");
  out.image("x_star.emat", r.x_star, vc);
  if (cfg.save_ppm) {
    out.image("x_star.ppm", r.x_star, vc);
    out.image("diff.ppm", perturbation_report(x0, r.x_star).diff_image, vc);
  }
  json report = match_json(r, x0);
  report["source_checksum"] = sha256_hex(x0);
  report["target_checksum"] = sha256_hex(l.inputs[1]);
  out.json_file("match-report.json", report);
}

void run_interpolate(const PipelineConfig& cfg, const Loaded& l, OutputDir& out) {
  const InterpolateParams& p = cfg.interpolate;
  const Vector& xa = l.inputs[0];
  Vector xb = l.inputs[1];
  json report;
  if (p.match_first) {
    const MatchResult r = run_match_to(cfg, *l.model, xa, (*l.model)(l.inputs[1]), out, "match-trace.csv");
    xb = r.x_star;
    report["match"] = match_json(r, xa);
  }
  const PathTrace trace = interpolate_trace(*l.model, xa, xb, p.steps);
  out.csv("path-trace.csv", [&](std::ostream& s) { write_path_csv(s, trace); });
  std::vector<double> ts, cs;
  for (const auto& pt : trace.points) {
    ts.push_back(pt.t);
    cs.push_back(pt.cos_to_b);
  }
  report["steps"] = p.steps;
  report["cos_to_b_r_squared"] = linear_fit_r_squared(ts, cs);
  out.json_file("interpolate-report.json", report);
  if (p.frames) {
    for (const auto& f : write_path_frames(out.root() / "frames", xa, xb, p.steps, l.model->config())) {
      out.adopt(fs::relative(f, out.root()));
    }
  }
}

void run_walk(const PipelineConfig& cfg, const Loaded& l, OutputDir& out) {
  const WalkParams& p = cfg.walk;
  const Vector& x0 = l.inputs[0];
  const JacobianSvd svd = svd_analysis(jacobian_at(*l.model, x0), x0);
  const double cap = p.drift_cap.value_or(0.01 * svd.sigma_max);
  Rng rng(cfg.seed, kWalkStream);
  const WalkTrace trace = null_walk(*l.model, x0, p.step_len, p.n_steps, p.rank_cut, rng, cap, p.mode);
  out.csv("walk-trace.csv", [&](std::ostream& s) { write_walk_csv(s, trace); });
  const WalkPoint& last = trace.points.back();
  out.image("walk-final.emat", last.x, l.model->config());
  if (cfg.save_ppm) out.image("walk-final.ppm", last.x, l.model->config());
  int clamped = 0;
  for (const auto& pt : trace.points) clamped += pt.clamped ? 1 : 0;
  out.json_file("walk-report.json", {{"sigma_max", svd.sigma_max},
                                     {"drift_cap", cap},
                                     {"input_disp", last.input_disp},
                                     {"embed_drift", last.embed_drift},
                                     {"reprojections", trace.reprojections},
                                     {"resamples", trace.resamples},
                                     {"clamped_steps", clamped}});
}

void run_classify(const PipelineConfig& cfg, const Loaded& l, OutputDir& out) {
  const auto specs = effective_anchors(cfg.classify);
  std::vector<std::string> labels;
  std::vector<LabeledInput> anchor_inputs;
  for (std::size_t a = 0; a < specs.size(); ++a) {
    labels.push_back(specs[a].label);
    anchor_inputs.insert(anchor_inputs.end(), l.anchor_inputs[a].begin(), l.anchor_inputs[a].end());
  }
  const AnchorSet anchors = build_anchor_set(*l.model, labels, anchor_inputs);
  const double temp = cfg.classify.temperature;

  struct Row {
    std::size_t input;
    std::string role, expected;
    Vector embedding;
    Classification c;
  };
  std::vector<MatchResult> matches(l.inputs.size());
  for (std::size_t i = 0; i < l.inputs.size(); ++i) {
    const std::string target = target_label(cfg.inputs[i], labels);
    const auto row = std::find(labels.begin(), labels.end(), target) - labels.begin();
    matches[i] = run_match_to(cfg, *l.model, l.inputs[i], anchors.anchors.row(row).transpose(), out,
                              "match-trace-" + std::to_string(i) + ".csv");
  }
  std::vector<Row> rows;
  for (std::size_t i = 0; i < l.inputs.size(); ++i) {
    const Vector fo = (*l.model)(l.inputs[i]);
    const Vector fm = (*l.model)(matches[i].x_star);
    rows.push_back({i, "original", cfg.inputs[i].label, fo, nearest_anchor_classify(fo, anchors, temp)});
    rows.push_back({i, "matched", target_label(cfg.inputs[i], labels), fm, nearest_anchor_classify(fm, anchors, temp)});
    out.image("matched-" + std::to_string(i) + ".emat", matches[i].x_star, l.model->config());
  }

  out.csv("classify-scores.csv", [&](std::ostream& s) {
    s << "input,role,expected,predicted";
    for (const auto& lab : labels) s << ",cos_" << lab;
    for (const auto& lab : labels) s << ",softmax_" << lab;
    s << '\n';
    for (const auto& r : rows) {
      s << r.input << ',' << r.role << ',' << r.expected << ',' << r.c.label;
      for (Eigen::Index k = 0; k < r.c.scores.size(); ++k) s << ',' << format_double(r.c.scores[k]);
      for (Eigen::Index k = 0; k < r.c.softmax_scores.size(); ++k) s << ',' << format_double(r.c.softmax_scores[k]);
      s << '\n';
    }
  });
  out.csv("embeddings.csv", [&](std::ostream& s) {
    s << "kind,index,label";
    for (Eigen::Index k = 0; k < anchors.anchors.cols(); ++k) s << ",e" << k;
    s << '\n';
    auto emit = [&](const std::string& kind, std::size_t index, const std::string& label, const Vector& e) {
      s << kind << ',' << index << ',' << label;
      for (Eigen::Index k = 0; k < e.size(); ++k) s << ',' << format_double(e[k]);
      s << '\n';
    };
    for (std::size_t a = 0; a < labels.size(); ++a) emit("anchor", a, labels[a], anchors.anchors.row(Eigen::Index(a)).transpose());
    for (const auto& r : rows) emit(r.role, r.input, r.expected, r.embedding);
  });

  int as_expected = 0;
  json flips = json::array();
  for (std::size_t i = 0; i < l.inputs.size(); ++i) {
    const Row& o = rows[2 * i];
    const Row& m = rows[2 * i + 1];
    as_expected += (o.c.label == o.expected) + (m.c.label == m.expected);
    json f = match_json(matches[i], l.inputs[i]);
    f["input"] = i;
    f["label"] = o.expected;
    f["predicted_original"] = o.c.label;
    f["target"] = m.expected;
    f["predicted_matched"] = m.c.label;
    flips.push_back(f);
  }
  out.json_file("classify-report.json", {{"temperature", temp},
                                         {"labels", labels},
                                         {"anchor_provenance", anchors.provenance},
                                         {"as_expected", as_expected},
                                         {"total", rows.size()},
                                         {"flips", flips}});
}

} // namespace

// ---------------------------------------------------------------- public

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Spectrum: return "spectrum";
    case Experiment::Ldlc: return "ldlc";
    case Experiment::Match: return "match";
    case Experiment::Interpolate: return "interpolate";
    case Experiment::Walk: return "walk";
    case Experiment::Classify: return "classify";
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& name) {
  for (Experiment e : {Experiment::Spectrum, Experiment::Ldlc, Experiment::Match, Experiment::Interpolate,
                       Experiment::Walk, Experiment::Classify}) {
    if (to_string(e) == name) return e;
  }
  throw ConfigError("unknown experiment '" + name + "'");
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base) {
  PipelineConfig c;
  try {
    check_keys(j, {"experiment", "seed", "model", "inputs", "output_dir", "save_ppm", "ldlc", "match", "interpolate",
                   "walk", "classify"},
               "config");
    if (j.contains("experiment")) c.experiment = experiment_from_string(j.at("experiment").get<std::string>());
    read_u64(j, "seed", c.seed);
    read(j, "save_ppm", c.save_ppm);
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (j.contains("model")) {
      const json& m = j.at("model");
      check_keys(m, {"config", "weights_seed", "weights_file"}, "model");
      read_u64(m, "weights_seed", c.weights_seed);
      if (m.contains("weights_file")) c.weights_file = resolve_path(m.at("weights_file").get<std::string>(), base);
      if (m.contains("config")) {
        if (c.weights_file) throw ConfigError("model.config and model.weights_file are mutually exclusive");
        const json& v = m.at("config");
        check_keys(v, {"image_size", "channels", "patch_size", "n_patches", "d_model", "n_heads", "head_dim",
                       "mlp_hidden", "n_layers", "embed_dim"},
                   "model.config");
        read_u32(v, "image_size", c.vit.image_size);
        read_u32(v, "channels", c.vit.channels);
        read_u32(v, "patch_size", c.vit.patch_size);
        read_u32(v, "n_patches", c.vit.n_patches);
        read_u32(v, "d_model", c.vit.d_model);
        read_u32(v, "n_heads", c.vit.n_heads);
        read_u32(v, "head_dim", c.vit.head_dim);
        read_u32(v, "mlp_hidden", c.vit.mlp_hidden);
        read_u32(v, "n_layers", c.vit.n_layers);
        read_u32(v, "embed_dim", c.vit.embed_dim);
      }
    }

    if (j.contains("inputs")) {
      const json& in = j.at("inputs");
      if (!in.is_array()) throw ConfigError("inputs must be an array");
      for (std::size_t i = 0; i < in.size(); ++i) {
        c.inputs.push_back(parse_input(in[i], base, "inputs[" + std::to_string(i) + "]"));
      }
    }

    if (j.contains("ldlc")) {
      const json& p = j.at("ldlc");
      check_keys(p, {"epsilon", "grid", "singular", "random", "null", "optimized", "optimized_iters", "optimized_lr",
                     "optimized_seed_base", "rank_cut"},
                 "ldlc");
      read(p, "epsilon", c.ldlc.epsilon);
      read(p, "grid", c.ldlc.grid);
      read(p, "singular", c.ldlc.singular);
      read(p, "random", c.ldlc.random);
      read(p, "null", c.ldlc.null);
      read(p, "optimized", c.ldlc.optimized);
      read(p, "optimized_iters", c.ldlc.optimized_iters);
      read(p, "optimized_lr", c.ldlc.optimized_lr);
      read_u64(p, "optimized_seed_base", c.ldlc.optimized_seed_base);
      read_optional(p, "rank_cut", c.ldlc.rank_cut);
    }

    if (j.contains("match")) {
      const json& p = j.at("match");
      check_keys(p, {"learning_rate", "max_iters", "loss_tol", "cos_tol", "perturb_budget", "record_every"}, "match");
      read(p, "learning_rate", c.match.learning_rate);
      read(p, "max_iters", c.match.max_iters);
      read_optional(p, "loss_tol", c.match.loss_tol);
      read_optional(p, "cos_tol", c.match.cos_tol);
      read_optional(p, "perturb_budget", c.match.perturb_budget);
      read(p, "record_every", c.match.record_every);
    }

    if (j.contains("interpolate")) {
      const json& p = j.at("interpolate");
      check_keys(p, {"steps", "frames", "match_first"}, "interpolate");
      read(p, "steps", c.interpolate.steps);
      read(p, "frames", c.interpolate.frames);
      read(p, "match_first", c.interpolate.match_first);
    }

    if (j.contains("walk")) {
      const json& p = j.at("walk");
      check_keys(p, {"step_len", "n_steps", "drift_cap", "rank_cut", "mode"}, "walk");
      read(p, "step_len", c.walk.step_len);
      read(p, "n_steps", c.walk.n_steps);
      read_optional(p, "drift_cap", c.walk.drift_cap);
      read_optional(p, "rank_cut", c.walk.rank_cut);
      if (p.contains("mode")) c.walk.mode = walk_mode_from_string(p.at("mode").get<std::string>());
    }

    if (j.contains("classify")) {
      const json& p = j.at("classify");
      check_keys(p, {"anchors", "temperature"}, "classify");
      read(p, "temperature", c.classify.temperature);
      if (p.contains("anchors")) {
        const json& anchors = p.at("anchors");
        if (!anchors.is_array()) throw ConfigError("classify.anchors must be an array");
        for (std::size_t a = 0; a < anchors.size(); ++a) {
          const std::string where = "classify.anchors[" + std::to_string(a) + "]";
          check_keys(anchors[a], {"label", "inputs"}, where);
          AnchorSpec spec;
          spec.label = anchors[a].at("label").get<std::string>();
          const json& in = anchors[a].at("inputs");
          if (!in.is_array()) throw ConfigError(where + ".inputs must be an array");
          for (std::size_t i = 0; i < in.size(); ++i) {
            InputSpec s = parse_input(in[i], base, where + ".inputs[" + std::to_string(i) + "]");
            s.label = spec.label;
            spec.inputs.push_back(s);
          }
          c.classify.anchors.push_back(std::move(spec));
        }
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

json PipelineConfig::to_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["save_ppm"] = save_ppm;
  json model;
  if (weights_file) {
    model["weights_file"] = weights_file->string();
  } else {
    model["weights_seed"] = weights_seed;
    model["config"] = {{"image_size", vit.image_size}, {"channels", vit.channels},   {"patch_size", vit.patch_size},
                       {"n_patches", vit.n_patches},   {"d_model", vit.d_model},     {"n_heads", vit.n_heads},
                       {"head_dim", vit.head_dim},     {"mlp_hidden", vit.mlp_hidden}, {"n_layers", vit.n_layers},
                       {"embed_dim", vit.embed_dim}};
  }
  j["model"] = model;
  j["inputs"] = json::array();
  for (const auto& s : inputs) j["inputs"].push_back(input_json(s));
  j["ldlc"] = {{"epsilon", ldlc.epsilon},
               {"grid", ldlc.grid},
               {"singular", ldlc.singular},
               {"random", ldlc.random},
               {"null", ldlc.null},
               {"optimized", ldlc.optimized},
               {"optimized_iters", ldlc.optimized_iters},
               {"optimized_lr", ldlc.optimized_lr},
               {"optimized_seed_base", ldlc.optimized_seed_base},
               {"rank_cut", optional_json(ldlc.rank_cut)}};
  j["match"] = {{"learning_rate", match.learning_rate},
                {"max_iters", match.max_iters},
                {"loss_tol", optional_json(match.loss_tol)},
                {"cos_tol", optional_json(match.cos_tol)},
                {"perturb_budget", optional_json(match.perturb_budget)},
                {"record_every", match.record_every}};
  j["interpolate"] = {{"steps", interpolate.steps},
                      {"frames", interpolate.frames},
                      {"match_first", interpolate.match_first}};
  j["walk"] = {{"step_len", walk.step_len},
               {"n_steps", walk.n_steps},
               {"drift_cap", optional_json(walk.drift_cap)},
               {"rank_cut", optional_json(walk.rank_cut)},
               {"mode", to_string(walk.mode)}};
  json anchors = json::array();
  for (const auto& a : classify.anchors) {
    json in = json::array();
    for (const auto& s : a.inputs) {
      json e = input_json(s);
      e.erase("label");
      in.push_back(e);
    }
    anchors.push_back({{"label", a.label}, {"inputs", in}});
  }
  j["classify"] = {{"anchors", anchors}, {"temperature", classify.temperature}};
  return j;
}

void PipelineConfig::validate() const {
  if (!weights_file) vit.validate();
  const std::size_t n = inputs.size();
  switch (experiment) {
    case Experiment::Spectrum:
    case Experiment::Ldlc:
    case Experiment::Walk:
      if (n != 1) throw ConfigError(to_string(experiment) + " takes exactly one input");
      break;
    case Experiment::Match:
    case Experiment::Interpolate:
      if (n != 2) throw ConfigError(to_string(experiment) + " takes exactly two inputs (source, target)");
      break;
    case Experiment::Classify:
      if (n < 1) throw ConfigError("classify needs at least one input");
      break;
  }
  match.validate();
  if (!(ldlc.epsilon > 0.0)) throw ConfigError("ldlc.epsilon must be positive");
  if (ldlc.grid < 3 || ldlc.grid % 2 == 0) throw ConfigError("ldlc.grid must be odd and at least 3");
  if (ldlc.singular < 0 || ldlc.random < 0 || ldlc.null < 0 || ldlc.optimized < 0) {
    throw ConfigError("ldlc direction counts must be non-negative");
  }
  if (ldlc.optimized_iters < 1) throw ConfigError("ldlc.optimized_iters must be at least 1");
  if (!(ldlc.optimized_lr > 0.0)) throw ConfigError("ldlc.optimized_lr must be positive");
  if (ldlc.rank_cut && *ldlc.rank_cut < 0) throw ConfigError("ldlc.rank_cut must be non-negative");
  if (interpolate.steps < 2) throw ConfigError("interpolate.steps must be at least 2");
  if (!(walk.step_len > 0.0)) throw ConfigError("walk.step_len must be positive");
  if (walk.n_steps < 0) throw ConfigError("walk.n_steps must be non-negative");
  if (walk.drift_cap && !(*walk.drift_cap > 0.0)) throw ConfigError("walk.drift_cap must be positive");
  if (walk.rank_cut && *walk.rank_cut < 0) throw ConfigError("walk.rank_cut must be non-negative");

  if (experiment == Experiment::Classify) {
    if (!(classify.temperature > 0.0)) throw ConfigError("classify.temperature must be positive");
    const auto anchors = effective_anchors(classify);
    std::vector<std::string> labels;
    for (const auto& a : anchors) {
      if (a.label.empty()) throw ConfigError("anchor labels must be non-empty");
      if (std::find(labels.begin(), labels.end(), a.label) != labels.end()) {
        throw ConfigError("duplicate anchor label '" + a.label + "'");
      }
      if (a.inputs.empty()) throw ConfigError("anchor '" + a.label + "' has no inputs");
      labels.push_back(a.label);
    }
    if (labels.size() < 2) throw ConfigError("classify needs at least two anchor labels");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const InputSpec& s = inputs[i];
      const std::string where = "inputs[" + std::to_string(i) + "]";
      if (std::find(labels.begin(), labels.end(), s.label) == labels.end()) {
        throw ConfigError(where + " label '" + s.label + "' is not an anchor label");
      }
      const std::string t = target_label(s, labels);
      if (std::find(labels.begin(), labels.end(), t) == labels.end()) {
        throw ConfigError(where + " target '" + t + "' is not an anchor label");
      }
      if (t == s.label) throw ConfigError(where + " target equals its own label");
    }
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), e.byte);
  }
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  return PipelineConfig::from_json(read_json_file(path), path.parent_path());
}

RunResult run_pipeline(const PipelineConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const Loaded loaded = load_all(cfg);
  OutputDir out(cfg.output_dir);

  switch (cfg.experiment) {
    case Experiment::Spectrum: run_spectrum(cfg, loaded, out); break;
    case Experiment::Ldlc: run_ldlc(cfg, loaded, out); break;
    case Experiment::Match: run_match(cfg, loaded, out); break;
    case Experiment::Interpolate: run_interpolate(cfg, loaded, out); break;
    case Experiment::Walk: run_walk(cfg, loaded, out); break;
    case Experiment::Classify: run_classify(cfg, loaded, out); break;
  }

  RunResult result;
  result.artifacts = out.artifacts();
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  json manifest;
  manifest["tool"] = "embedding-atlas";
  manifest["experiment"] = to_string(cfg.experiment);
  manifest["seeds"] = {{"seed", cfg.seed}, {"weights_seed", cfg.weights_seed}};
  manifest["config"] = cfg.to_json();
  manifest["threads"] = thread_count();
  if (cfg.experiment == Experiment::Classify) manifest["softmax_temperature"] = cfg.classify.temperature;
  manifest["inputs"] = json::array();
  for (const auto& x : loaded.inputs) manifest["inputs"].push_back(sha256_hex(x));
  manifest["artifacts"] = json::array();
  for (const auto& a : result.artifacts) {
    manifest["artifacts"].push_back({{"file", a.generic_string()}, {"sha256", sha256_file(out.root() / a)}});
  }
  manifest["wall_time_s"] = result.wall_seconds;
  out.json_file("manifest.json", manifest);
  return result;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const PreconditionError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const CapabilityError*>(&e)) {
    return kExitValidation;
  }
  if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const DegenerateError*>(&e)) return kExitDivergence;
  return kExitFailure;
}

json error_json(const std::exception& e) {
  std::string kind = "error";
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) kind = "io";
  else if (dynamic_cast<const ParseError*>(&e)) kind = "parse";
  else if (dynamic_cast<const ConfigError*>(&e)) kind = "config";
  else if (dynamic_cast<const PreconditionError*>(&e)) kind = "precondition";
  else if (dynamic_cast<const DimensionError*>(&e)) kind = "dimension";
  else if (dynamic_cast<const CapabilityError*>(&e)) kind = "capability";
  else if (dynamic_cast<const DivergenceError*>(&e)) kind = "divergence";
  else if (dynamic_cast<const NumericError*>(&e)) kind = "numeric";
  else if (dynamic_cast<const DegenerateError*>(&e)) kind = "degenerate";
  json j = {{"error", kind}, {"message", e.what()}, {"exit_code", exit_code_for(e)}};
  if (const auto* p = dynamic_cast<const ParseError*>(&e)) j["offset"] = p->offset();
  if (const auto* n = dynamic_cast<const NumericError*>(&e)) j["residual"] = n->residual();
  return j;
}

int run_pipeline_guarded(const PipelineConfig& cfg, std::ostream& err) {
  try {
    run_pipeline(cfg);
    return kExitOk;
  } catch (const std::exception& e) {
    const json j = error_json(e);
    err << j.dump() << '\n';
    std::error_code ec;
    fs::create_directories(cfg.output_dir, ec);
    if (!ec) {
      std::ofstream out(cfg.output_dir / "error.json", std::ios::binary);
      out << j.dump(2) << '\n';
    }
    return exit_code_for(e);
  }
}

} // namespace atlas
