/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wc4dvar/criteria.hpp"
#include "wc4dvar/models.hpp"

namespace wc4dvar {

struct EstimateEigSettings {
  std::vector<Formulation> formulations = {
      Formulation::preconditioned, Formulation::unpreconditioned, Formulation::saddle_point_one,
      Formulation::saddle_point_two};
  std::vector<Index> sample_sizes = {8};
  Index trials = 1;
  double lanczos_tol = 1e-10;
  Index lanczos_max_iterations = 2000;
  Index densify_limit = 4000;
};

struct PlaceSensorsSettings {
  Index k = 5;
  std::vector<std::string> methods = {"gks", "raf", "greedy"};
  Index random_designs = 2000;
  std::uint64_t exhaustive_budget = 200000;
  Index oversampling = 20;
  Index svd_rank = 0;
  Index histogram_bins = 40;
};

struct AssimilateSettings {
  double tol = 1e-8;
  Index max_iterations = 0;  // 0: solver default
};

struct GapStudySettings {
  std::vector<double> alphas = {0.05, 0.03, 0.02, 0.01};
  Index k = 10;
  Index oversampling = 20;
};

/// Parsed and validated experiment configuration. `canonical_text` is the
/// effective document (seed/scale overrides applied, keys sorted) whose hash
/// stamps every output file.
struct ExperimentConfig {
  std::string canonical_text;
  std::string hash;
  std::uint64_t seed = 0;
  std::string scale = "desk";
  std::string model_kind = "heat1d";
  HeatModelConfig heat;
  ADModelConfig ad;
  EstimateEigSettings estimate_eig;
  PlaceSensorsSettings place_sensors;
  AssimilateSettings assimilate;
  GapStudySettings gap_study;
};

ExperimentConfig parse_config_text(const std::string& text,
                                   std::optional<std::uint64_t> seed_override = {},
                                   std::optional<std::string> scale_override = {});
ExperimentConfig load_config_file(const std::filesystem::path& path,
                                  std::optional<std::uint64_t> seed_override = {},
                                  std::optional<std::string> scale_override = {});

/// Builds the configured model problem (reference dynamics included).
ModelProblem build_model_problem(const ExperimentConfig& config);

struct ResultRecord {
  std::string json_text;  // canonical result document
  std::string config_hash;
};

/// Reads a result document and rejects it unless its embedded hash matches.
std::string load_result_checked(const std::filesystem::path& result_json,
                                const std::string& expected_hash);

ResultRecord cmd_estimate_eig(const ExperimentConfig& config, const std::filesystem::path& out_dir);
ResultRecord cmd_place_sensors(const ExperimentConfig& config, const std::filesystem::path& out_dir);
ResultRecord cmd_assimilate(const ExperimentConfig& config, const std::filesystem::path& out_dir);
ResultRecord cmd_gap_study(const ExperimentConfig& config, const std::filesystem::path& out_dir);

/// CLI entry: parses the config, dispatches, maps failures to exit codes
/// (0 ok, 2 invalid config, 3 numerical failure, 4 budget refusal).
int run_command(const std::string& command, const std::filesystem::path& config_path,
                const std::filesystem::path& out_dir,
                std::optional<std::uint64_t> seed_override = {},
                std::optional<std::string> scale_override = {});

/// Locale-independent shortest round-trip formatting.
std::string format_double(double value);

}  // namespace wc4dvar
