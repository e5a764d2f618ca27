/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/harness.hpp"

#include "json.hpp"

#include "wc4dvar/assimilation.hpp"
#include "wc4dvar/selection.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace wc4dvar {

using nlohmann::json;

namespace {

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i) {
    buf[i] = digits[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
    }
  }
}

double get_number(const json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) throw ConfigError(std::string("config: '") + key + "' must be a number");
  return obj[key].get<double>();
}

Index get_index(const json& obj, const char* key, Index fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_integer()) {
    throw ConfigError(std::string("config: '") + key + "' must be an integer");
  }
  return obj[key].get<Index>();
}

Formulation formulation_from_string(const std::string& name) {
  if (name == "preconditioned") return Formulation::preconditioned;
  if (name == "unpreconditioned") return Formulation::unpreconditioned;
  if (name == "saddle_point_one") return Formulation::saddle_point_one;
  if (name == "saddle_point_two") return Formulation::saddle_point_two;
  throw ConfigError("config: unknown formulation '" + name + "'");
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

std::string format_fixed(double value, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& hash) { text_ = "# config_hash " + hash + "\n"; }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

std::string svg_histogram(const std::vector<double>& values,
                          const std::vector<std::pair<std::string, double>>& markers, Index bins,
                          const std::string& title, const std::string& hash) {
  const double width = 720.0, height = 420.0, left = 60.0, right = 20.0, top = 40.0, bottom = 50.0;
  double lo = values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
  double hi = values.empty() ? 1.0 : *std::max_element(values.begin(), values.end());
  for (const auto& m : markers) {
    lo = std::min(lo, m.second);
    hi = std::max(hi, m.second);
  }
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::vector<Index> counts(static_cast<std::size_t>(bins), 0);
  for (double v : values) {
    Index b = static_cast<Index>(static_cast<double>(bins) * (v - lo) / (hi - lo));
    b = std::clamp<Index>(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const Index max_count = values.empty() ? 1 : *std::max_element(counts.begin(), counts.end());

  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto x_of = [&](double v) { return left + plot_w * (v - lo) / (hi - lo); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + format_fixed(width, 0) +
       "\" height=\"" + format_fixed(height, 0) + "\">\n";
  s += "<desc>config_hash " + hash + "</desc>\n";
  s += "<text x=\"" + format_fixed(left, 1) + "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">" +
       title + "</text>\n";
  s += "<rect x=\"" + format_fixed(left, 1) + "\" y=\"" + format_fixed(top, 1) + "\" width=\"" +
       format_fixed(plot_w, 1) + "\" height=\"" + format_fixed(plot_h, 1) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (Index b = 0; b < bins; ++b) {
    const double c = static_cast<double>(counts[static_cast<std::size_t>(b)]);
    if (c == 0.0) continue;
    const double bar_h = plot_h * c / static_cast<double>(max_count);
    const double x = left + plot_w * static_cast<double>(b) / static_cast<double>(bins);
    s += "<rect x=\"" + format_fixed(x, 2) + "\" y=\"" + format_fixed(top + plot_h - bar_h, 2) +
         "\" width=\"" + format_fixed(plot_w / static_cast<double>(bins), 2) + "\" height=\"" +
         format_fixed(bar_h, 2) + "\" fill=\"#7a9cc6\" stroke=\"none\"/>\n";
  }
  int label_row = 0;
  for (const auto& m : markers) {
    const double x = x_of(m.second);
    s += "<line x1=\"" + format_fixed(x, 2) + "\" y1=\"" + format_fixed(top, 1) + "\" x2=\"" +
         format_fixed(x, 2) + "\" y2=\"" + format_fixed(top + plot_h, 1) +
         "\" stroke=\"#b03030\" stroke-dasharray=\"4 3\"/>\n";
    s += "<text x=\"" + format_fixed(x + 3.0, 2) + "\" y=\"" +
         format_fixed(top + 14.0 + 14.0 * label_row, 1) +
         "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#b03030\">" + m.first + "</text>\n";
    ++label_row;
  }
  s += "<text x=\"" + format_fixed(left, 1) + "\" y=\"" + format_fixed(height - 16.0, 1) +
       "\" font-family=\"sans-serif\" font-size=\"12\">" + format_double(lo) + "</text>\n";
  s += "<text x=\"" + format_fixed(left + plot_w - 60.0, 1) + "\" y=\"" +
       format_fixed(height - 16.0, 1) + "\" font-family=\"sans-serif\" font-size=\"12\">" +
       format_double(hi) + "</text>\n";
  s += "</svg>\n";
  return s;
}

json environment_stamp() {
  json env;
  env["compiler"] = std::string(__VERSION__);
  env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                 "." + std::to_string(EIGEN_MINOR_VERSION);
#ifdef NDEBUG
  env["build"] = "release";
#else
  env["build"] = "debug";
#endif
  return env;
}

json result_skeleton(const std::string& command, const ExperimentConfig& config) {
  json doc;
  doc["schema_version"] = 1;
  doc["command"] = command;
  doc["config_hash"] = config.hash;
  doc["config"] = json::parse(config.canonical_text);
  doc["environment"] = environment_stamp();
  return doc;
}

ResultRecord finalize_result(json doc, const ExperimentConfig& config,
                             const std::filesystem::path& out_dir) {
  ResultRecord record;
  record.config_hash = config.hash;
  record.json_text = doc.dump(2) + "\n";
  write_file(out_dir / "result.json", record.json_text);
  return record;
}

json design_to_json(const SensorDesign& design) {
  json arr = json::array();
  for (Index i : design.indices()) arr.push_back(i);
  return arr;
}

std::string indices_to_string(const SensorDesign& design) {
  std::string s;
  for (Index i : design.indices()) {
    if (!s.empty()) s += ' ';
    s += std::to_string(i);
  }
  return s;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

ExperimentConfig parse_config_text(const std::string& text,
                                   std::optional<std::uint64_t> seed_override,
                                   std::optional<std::string> scale_override) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: document must be a JSON object");
  check_keys(doc,
             {"schema_version", "seed", "scale", "model", "estimate_eig", "place_sensors",
              "assimilate", "gap_study"},
             "the top level");
  if (get_index(doc, "schema_version", -1) != 1) {
    throw ConfigError("config: schema_version must be present and equal to 1");
  }
  if (!doc.contains("seed") || !doc["seed"].is_number_unsigned()) {
    throw ConfigError("config: an explicit unsigned 'seed' is required");
  }

  ExperimentConfig config;
  config.seed = seed_override ? *seed_override : doc["seed"].get<std::uint64_t>();
  config.scale = scale_override ? *scale_override : doc.value("scale", std::string("desk"));
  if (config.scale != "desk" && config.scale != "paper") {
    throw ConfigError("config: scale must be 'desk' or 'paper'");
  }

  if (!doc.contains("model") || !doc["model"].is_object()) {
    throw ConfigError("config: a 'model' object is required");
  }
  const json& model = doc["model"];
  if (!model.contains("kind") || !model["kind"].is_string()) {
    throw ConfigError("config: model.kind is required");
  }
  config.model_kind = model["kind"].get<std::string>();
  if (config.model_kind == "heat1d") {
    check_keys(model,
               {"kind", "n_cells", "n_windows", "steps_per_window", "final_time", "epsilon",
                "prior_gamma", "prior_delta", "n_sensors", "sensor_lo", "sensor_hi",
                "n_error_samples", "noise_fraction", "noise_std_override"},
               "model (heat1d)");
    HeatModelConfig base =
        config.scale == "paper" ? HeatModelConfig::paper() : HeatModelConfig::desk();
    base.n_cells = get_index(model, "n_cells", base.n_cells);
    base.n_windows = get_index(model, "n_windows", base.n_windows);
    base.steps_per_window = get_index(model, "steps_per_window", base.steps_per_window);
    base.final_time = get_number(model, "final_time", base.final_time);
    base.epsilon = get_number(model, "epsilon", base.epsilon);
    base.prior_gamma = get_number(model, "prior_gamma", base.prior_gamma);
    base.prior_delta = get_number(model, "prior_delta", base.prior_delta);
    base.n_sensors = get_index(model, "n_sensors", base.n_sensors);
    base.sensor_lo = get_number(model, "sensor_lo", base.sensor_lo);
    base.sensor_hi = get_number(model, "sensor_hi", base.sensor_hi);
    base.n_error_samples = get_index(model, "n_error_samples", base.n_error_samples);
    base.noise_fraction = get_number(model, "noise_fraction", base.noise_fraction);
    if (model.contains("noise_std_override")) {
      base.noise_std_override = get_number(model, "noise_std_override", 0.0);
    }
    config.heat = base;
  } else if (config.model_kind == "ad2d") {
    check_keys(model,
               {"kind", "grid_n", "n_windows", "steps_per_window", "final_time", "prior_gamma",
                "prior_delta", "error_alpha", "sensor_grid_n", "sensor_margin", "noise_fraction",
                "noise_std_override"},
               "model (ad2d)");
    ADModelConfig base = config.scale == "paper" ? ADModelConfig::paper() : ADModelConfig::desk();
    base.grid_n = get_index(model, "grid_n", base.grid_n);
    base.n_windows = get_index(model, "n_windows", base.n_windows);
    base.steps_per_window = get_index(model, "steps_per_window", base.steps_per_window);
    base.final_time = get_number(model, "final_time", base.final_time);
    base.prior_gamma = get_number(model, "prior_gamma", base.prior_gamma);
    base.prior_delta = get_number(model, "prior_delta", base.prior_delta);
    base.error_alpha = get_number(model, "error_alpha", base.error_alpha);
    base.sensor_grid_n = get_index(model, "sensor_grid_n", base.sensor_grid_n);
    base.sensor_margin = get_number(model, "sensor_margin", base.sensor_margin);
    base.noise_fraction = get_number(model, "noise_fraction", base.noise_fraction);
    if (model.contains("noise_std_override")) {
      base.noise_std_override = get_number(model, "noise_std_override", 0.0);
    }
    config.ad = base;
  } else {
    throw ConfigError("config: model.kind must be 'heat1d' or 'ad2d'");
  }

  if (doc.contains("estimate_eig")) {
    const json& s = doc["estimate_eig"];
    check_keys(s,
               {"formulations", "sample_sizes", "trials", "lanczos_tol", "lanczos_max_iterations",
                "densify_limit"},
               "estimate_eig");
    if (s.contains("formulations")) {
      config.estimate_eig.formulations.clear();
      for (const auto& f : s["formulations"]) {
        config.estimate_eig.formulations.push_back(formulation_from_string(f.get<std::string>()));
      }
    }
    if (s.contains("sample_sizes")) {
      config.estimate_eig.sample_sizes.clear();
      for (const auto& n : s["sample_sizes"]) {
        config.estimate_eig.sample_sizes.push_back(n.get<Index>());
      }
    }
    config.estimate_eig.trials = get_index(s, "trials", config.estimate_eig.trials);
    config.estimate_eig.lanczos_tol = get_number(s, "lanczos_tol", config.estimate_eig.lanczos_tol);
    config.estimate_eig.lanczos_max_iterations =
        get_index(s, "lanczos_max_iterations", config.estimate_eig.lanczos_max_iterations);
    config.estimate_eig.densify_limit = get_index(s, "densify_limit", config.estimate_eig.densify_limit);
  }

  if (doc.contains("place_sensors")) {
    const json& s = doc["place_sensors"];
    check_keys(s,
               {"k", "methods", "random_designs", "exhaustive_budget", "oversampling", "svd_rank",
                "histogram_bins"},
               "place_sensors");
    config.place_sensors.k = get_index(s, "k", config.place_sensors.k);
    if (s.contains("methods")) {
      config.place_sensors.methods.clear();
      for (const auto& m : s["methods"]) {
        const std::string name = m.get<std::string>();
        if (name != "gks" && name != "raf" && name != "greedy" && name != "exhaustive") {
          throw ConfigError("config: unknown selection method '" + name + "'");
        }
        config.place_sensors.methods.push_back(name);
      }
    }
    config.place_sensors.random_designs =
        get_index(s, "random_designs", config.place_sensors.random_designs);
    if (s.contains("exhaustive_budget")) {
      config.place_sensors.exhaustive_budget = s["exhaustive_budget"].get<std::uint64_t>();
    }
    config.place_sensors.oversampling = get_index(s, "oversampling", config.place_sensors.oversampling);
    config.place_sensors.svd_rank = get_index(s, "svd_rank", config.place_sensors.svd_rank);
    config.place_sensors.histogram_bins =
        get_index(s, "histogram_bins", config.place_sensors.histogram_bins);
  }

  if (doc.contains("assimilate")) {
    const json& s = doc["assimilate"];
    check_keys(s, {"tol", "max_iterations"}, "assimilate");
    config.assimilate.tol = get_number(s, "tol", config.assimilate.tol);
    config.assimilate.max_iterations = get_index(s, "max_iterations", config.assimilate.max_iterations);
  }

  if (doc.contains("gap_study")) {
    const json& s = doc["gap_study"];
    check_keys(s, {"alphas", "k", "oversampling"}, "gap_study");
    if (s.contains("alphas")) {
      config.gap_study.alphas.clear();
      for (const auto& a : s["alphas"]) config.gap_study.alphas.push_back(a.get<double>());
    }
    config.gap_study.k = get_index(s, "k", config.gap_study.k);
    config.gap_study.oversampling = get_index(s, "oversampling", config.gap_study.oversampling);
  }

  json canonical = doc;
  canonical["seed"] = config.seed;
  canonical["scale"] = config.scale;
  config.canonical_text = canonical.dump(2) + "\n";
  config.hash = fnv1a_hex(config.canonical_text);
  return config;
}

ExperimentConfig load_config_file(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> seed_override,
                                  std::optional<std::string> scale_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), seed_override, scale_override);
}

ModelProblem build_model_problem(const ExperimentConfig& config) {
  if (config.model_kind == "heat1d") {
    return export_heat_problem(config.heat, derive_seed(config.seed, "model"));
  }
  return export_ad_problem(config.ad);
}

std::string load_result_checked(const std::filesystem::path& result_json,
                                const std::string& expected_hash) {
  std::ifstream in(result_json, std::ios::binary);
  if (!in) throw ConfigError("result: cannot read " + result_json.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const json doc = json::parse(buf.str());
  if (doc.value("config_hash", std::string()) != expected_hash) {
    throw ConfigError("result: config hash mismatch, refusing to reuse " + result_json.string());
  }
  return buf.str();
}

ResultRecord cmd_estimate_eig(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const ModelProblem mp = build_model_problem(config);
  const DAProblem& problem = mp.problem;
  const SensorDesign full = SensorDesign::full(problem.dims.n_sensors);
  const EstimateEigSettings& s = config.estimate_eig;

  json doc = result_skeleton("estimate-eig", config);
  json formulations = json::array();
  CsvWriter csv(config.hash);
  csv.row({"formulation", "matrix_size", "method", "n_samples", "trial", "estimate",
           "rel_error_vs_exact", "lanczos_iterations", "sample_std_dev"});

  double precond_slq = 0.0, precond_xn = 0.0;
  bool have_precond_pair = false;

  for (Formulation f : s.formulations) {
    const CriterionOperator op = build_criterion_operator(problem, full, f);
    json jf;
    jf["formulation"] = to_string(f);
    jf["matrix_size"] = op.op.rows();

    bool have_exact = false;
    double exact_raw = 0.0;
    try {
      exact_raw = criterion_exact(op, s.densify_limit).value;
      have_exact = true;
      jf["exact_raw"] = exact_raw;
      CriterionValue cv;
      cv.value = exact_raw;
      cv.formulation = f;
      cv.constant = op.constant;
      cv.design = full;
      jf["exact_reconciled"] = reconciled_value(cv, problem);
    } catch (const BudgetError&) {
      jf["exact_raw"] = nullptr;
      jf["note"] = "exact reference unavailable at this scale";
    }

    double iter_accum = 0.0;
    Index iter_runs = 0;
    json estimates = json::array();
    for (Index n : s.sample_sizes) {
      std::vector<double> slq_errs, xn_errs;
      for (Index trial = 0; trial < s.trials; ++trial) {
        const std::string tag = std::string("estimate-eig/slq/") + to_string(f) + "/" +
                                std::to_string(n) + "/" + std::to_string(trial);
        const TraceEstimate est = slq_trace(op.op, op.function, n, derive_seed(config.seed, tag),
                                            s.lanczos_tol, s.lanczos_max_iterations);
        iter_accum += est.mean_lanczos_iterations;
        ++iter_runs;
        const double rel = have_exact ? std::abs(est.value - exact_raw) / std::abs(exact_raw) : -1.0;
        if (have_exact) slq_errs.push_back(rel);
        json je;
        je["method"] = "slq";
        je["n_samples"] = n;
        je["trial"] = trial;
        je["estimate"] = est.value;
        if (have_exact) je["rel_error"] = rel;
        je["lanczos_iterations"] = est.mean_lanczos_iterations;
        je["std_dev"] = est.sample_std_dev;
        estimates.push_back(je);
        csv.row({to_string(f), std::to_string(op.op.rows()), "slq", std::to_string(n),
                 std::to_string(trial), format_double(est.value),
                 have_exact ? format_double(rel) : "", format_double(est.mean_lanczos_iterations),
                 format_double(est.sample_std_dev)});
        if (f == Formulation::preconditioned && n == s.sample_sizes.back() && trial == 0) {
          precond_slq = est.value;
        }
        if (f == Formulation::preconditioned) {
          const std::string xtag = std::string("estimate-eig/xnystrace/") + std::to_string(n) + "/" +
                                   std::to_string(trial);
          const TraceEstimate xn =
              xnystrace_logdet(op.op, std::max<Index>(n, 2), derive_seed(config.seed, xtag),
                               s.lanczos_tol, s.lanczos_max_iterations);
          const double xrel =
              have_exact ? std::abs(xn.value - exact_raw) / std::abs(exact_raw) : -1.0;
          if (have_exact) xn_errs.push_back(xrel);
          json jx;
          jx["method"] = "xnystrace";
          jx["n_samples"] = n;
          jx["trial"] = trial;
          jx["estimate"] = xn.value;
          if (have_exact) jx["rel_error"] = xrel;
          jx["lanczos_iterations"] = xn.mean_lanczos_iterations;
          jx["std_dev"] = xn.sample_std_dev;
          estimates.push_back(jx);
          csv.row({to_string(f), std::to_string(op.op.rows()), "xnystrace", std::to_string(n),
                   std::to_string(trial), format_double(xn.value),
                   have_exact ? format_double(xrel) : "", format_double(xn.mean_lanczos_iterations),
                   format_double(xn.sample_std_dev)});
          if (n == s.sample_sizes.back() && trial == 0) {
            precond_xn = xn.value;
            have_precond_pair = true;
          }
        }
      }
    }
    jf["estimates"] = estimates;
    jf["mean_lanczos_iterations"] = iter_runs > 0 ? iter_accum / static_cast<double>(iter_runs) : 0.0;
    formulations.push_back(jf);
  }

  doc["results"]["formulations"] = formulations;
  if (have_precond_pair) {
    const double denom = std::max(std::abs(precond_slq), std::abs(precond_xn));
    if (denom > 0.0 && std::abs(precond_slq - precond_xn) / denom > 0.01) {
      doc["results"]["estimator_discrepancy_note"] =
          "slq and xnystrace means differ by more than 1%; both are reported unadjudicated";
    }
  }

  write_file(out_dir / "table_estimate_eig.csv", csv.text());
  return finalize_result(std::move(doc), config, out_dir);
}

ResultRecord cmd_place_sensors(const ExperimentConfig& config,
                               const std::filesystem::path& out_dir) {
  const ModelProblem mp = build_model_problem(config);
  const DAProblem& problem = mp.problem;
  const PlaceSensorsSettings& s = config.place_sensors;
  const Index n_s = problem.dims.n_sensors;
  require_dim(s.k >= 1 && s.k <= n_s, "place-sensors: k out of range");

  const BlockColumnMatrix a = criterion_matrix(problem);
  const GramEvaluator gram(a);
  const DesignEvaluator evaluate = [&gram](const SensorDesign& d) { return gram(d); };

  json doc = result_skeleton("place-sensors", config);
  json methods = json::array();
  std::vector<std::pair<std::string, double>> markers;

  CsvWriter csv(config.hash);
  csv.row({"method", "criterion", "percentile_vs_random", "indices"});

  const RandomDesignSample random_sample = random_design_sample(
      n_s, s.k, s.random_designs, derive_seed(config.seed, "place-sensors/random"), evaluate);

  for (const std::string& name : s.methods) {
    json jm;
    jm["method"] = name;
    try {
      DesignSearchResult r;
      if (name == "gks") {
        GksOptions opts;
        opts.svd_rank = s.svd_rank;
        opts.seed = derive_seed(config.seed, "place-sensors/gks");
        r = gks_select(a, s.k, opts);
      } else if (name == "raf") {
        RafOptions opts;
        opts.oversampling = s.oversampling;
        opts.seed = derive_seed(config.seed, "place-sensors/raf");
        r = raf_select(problem, s.k, opts);
        jm["sketch_transpose_applications"] = r.sketch_transpose_applications;
      } else if (name == "greedy") {
        r = greedy_select(n_s, s.k, evaluate);
        json gains = json::array();
        for (double g : r.greedy_gains) gains.push_back(g);
        jm["gains"] = gains;
      } else {
        r = exhaustive_select(n_s, s.k, evaluate, s.exhaustive_budget);
      }
      const double percentile = random_sample.percentile(r.criterion);
      jm["criterion"] = r.criterion;
      jm["criterion_recomputed"] = evaluate(r.design);
      jm["percentile_vs_random"] = percentile;
      jm["indices"] = design_to_json(r.design);
      if (r.bound) {
        jm["bound"] = {{"lower", r.bound->lower},
                       {"upper", r.bound->upper},
                       {"zeta", std::isfinite(r.bound->zeta) ? json(r.bound->zeta) : json(nullptr)}};
      }
      if (r.rank_deficient) jm["rank_deficient"] = true;
      if (!r.warning.empty()) jm["warning"] = r.warning;
      markers.emplace_back(name, r.criterion);
      csv.row({name, format_double(r.criterion), format_double(percentile),
               indices_to_string(r.design)});
    } catch (const BudgetError& e) {
      jm["refused"] = true;
      jm["reason"] = e.what();
      csv.row({name, "", "", "refused"});
    }
    methods.push_back(jm);
  }

  doc["results"]["methods"] = methods;
  doc["results"]["random_designs"] = {
      {"count", static_cast<Index>(random_sample.values.size())},
      {"min", *std::min_element(random_sample.values.begin(), random_sample.values.end())},
      {"max", *std::max_element(random_sample.values.begin(), random_sample.values.end())},
  };

  CsvWriter hist_csv(config.hash);
  hist_csv.row({"value"});
  for (double v : random_sample.values) hist_csv.row({format_double(v)});

  write_file(out_dir / "table_designs.csv", csv.text());
  write_file(out_dir / "table_random_designs.csv", hist_csv.text());
  write_file(out_dir / "hist_criterion.svg",
             svg_histogram(random_sample.values, markers, s.histogram_bins,
                           "criterion over random designs (k=" + std::to_string(s.k) + ")",
                           config.hash));
  return finalize_result(std::move(doc), config, out_dir);
}

ResultRecord cmd_assimilate(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  const ModelProblem mp = build_model_problem(config);
  const DAProblem& problem = mp.problem;
  const AssimilateSettings& s = config.assimilate;

  const Vector data =
      simulate_observations(mp.reference_evolution, mp.truth_initial, problem.observation,
                            mp.noise_std, derive_seed(config.seed, "assimilate/observations"));

  json doc = result_skeleton("assimilate", config);
  CsvWriter csv(config.hash);
  csv.row({"preconditioning", "iterations", "converged", "final_relative_residual",
           "initial_state_rel_error", "cost"});

  const Index d = problem.dims.state_dim;
  const double truth_norm = mp.truth_initial.norm();
  const double background_error =
      (problem.background_mean - mp.truth_initial).norm() / truth_norm;

  json solves = json::array();
  for (const auto& [name, prec] :
       {std::pair<std::string, Preconditioning>{"none", Preconditioning::none},
        std::pair<std::string, Preconditioning>{"forecast_prior", Preconditioning::forecast_prior}}) {
    const PosteriorResult r = map_solve(problem, data, prec, s.tol, s.max_iterations);
    const double recon_error = (r.map_estimate.head(d) - mp.truth_initial).norm() / truth_norm;
    const double cost = wc_cost(problem, r.map_estimate, data);
    json jr;
    jr["preconditioning"] = name;
    jr["iterations"] = r.iterations;
    jr["converged"] = r.converged;
    jr["final_relative_residual"] = r.final_relative_residual;
    jr["initial_state_rel_error"] = recon_error;
    jr["cost"] = cost;
    solves.push_back(jr);
    csv.row({name, std::to_string(r.iterations), r.converged ? "1" : "0",
             format_double(r.final_relative_residual), format_double(recon_error),
             format_double(cost)});
  }
  doc["results"]["solves"] = solves;
  doc["results"]["background_rel_error"] = background_error;

  write_file(out_dir / "table_assimilate.csv", csv.text());
  return finalize_result(std::move(doc), config, out_dir);
}

ResultRecord cmd_gap_study(const ExperimentConfig& config, const std::filesystem::path& out_dir) {
  if (config.model_kind != "ad2d") {
    throw ConfigError("gap-study: requires the ad2d model (its error scale is the alpha knob)");
  }
  const GapStudySettings& s = config.gap_study;

  json doc = result_skeleton("gap-study", config);
  CsvWriter csv(config.hash);
  csv.row({"alpha", "wc_criterion", "sc_on_wc_design", "gap", "gap_upper_bound", "indices"});

  json rows = json::array();
  std::optional<GramEvaluator> sc_gram;
  std::optional<double> sc_reference;
  json sc_ref_json;

  for (double alpha : s.alphas) {
    ADModelConfig mc = config.ad;
    mc.error_alpha = alpha;
    const ModelProblem mp = export_ad_problem(mc);

    if (!sc_gram) {
      // The exact-dynamics criterion does not involve the model-error scale;
      // compute the reference design once.
      const BlockColumnMatrix sc_matrix = sc_criterion_matrix(mp.problem);
      sc_gram.emplace(sc_matrix);
      GksOptions opts;
      opts.seed = derive_seed(config.seed, "gap-study/sc-reference");
      const DesignSearchResult sc_ref = gks_select(sc_matrix, s.k, opts);
      sc_reference = sc_ref.criterion;
      sc_ref_json = {{"criterion", sc_ref.criterion}, {"indices", design_to_json(sc_ref.design)}};
    }

    RafOptions opts;
    opts.oversampling = s.oversampling;
    opts.seed = derive_seed(config.seed, "gap-study/raf/" + format_double(alpha));
    opts.compute_bound = false;
    const DesignSearchResult wc = raf_select(mp.problem, s.k, opts);
    const double sc_on_wc = (*sc_gram)(wc.design);
    const GapBound bound = wc_sc_gap_bound(mp.problem, wc.design);

    json jr;
    jr["alpha"] = alpha;
    jr["wc_criterion"] = wc.criterion;
    jr["sc_on_wc_design"] = sc_on_wc;
    jr["gap"] = bound.gap;
    jr["gap_upper_bound"] = bound.upper;
    jr["indices"] = design_to_json(wc.design);
    rows.push_back(jr);
    csv.row({format_double(alpha), format_double(wc.criterion), format_double(sc_on_wc),
             format_double(bound.gap), format_double(bound.upper), indices_to_string(wc.design)});
  }

  doc["results"]["alphas"] = rows;
  doc["results"]["sc_reference"] = sc_ref_json;
  write_file(out_dir / "table_gap_study.csv", csv.text());
  return finalize_result(std::move(doc), config, out_dir);
}

int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed_override,
                std::optional<std::string> scale_override) {
  ExperimentConfig config;
  try {
    config = load_config_file(config_path, seed_override, scale_override);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory " << out_dir << "\n";
    return 2;
  }

  const auto start = std::chrono::steady_clock::now();
  try {
    ResultRecord record;
    if (command == "estimate-eig") {
      record = cmd_estimate_eig(config, out_dir);
    } else if (command == "place-sensors") {
      record = cmd_place_sensors(config, out_dir);
    } else if (command == "assimilate") {
      record = cmd_assimilate(config, out_dir);
    } else if (command == "gap-study") {
      record = cmd_gap_study(config, out_dir);
    } else {
      std::cerr << "error: unknown command '" << command << "'\n";
      return 2;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    // Wall time lives in a sidecar so result.json stays bitwise reproducible.
    json timing;
    timing["command"] = command;
    timing["config_hash"] = record.config_hash;
    timing["seconds"] = seconds;
    write_file(out_dir / "timings.json", timing.dump(2) + "\n");
    std::cout << command << ": ok (config " << record.config_hash << ", "
              << format_fixed(seconds, 2) << "s)\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const BudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace wc4dvar
