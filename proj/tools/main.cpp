/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "CLI11.hpp"

#include "wc4dvar/harness.hpp"

#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"wc4dvar: sensor placement and information-gain tools for weak-constraint 4D-Var"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> scale;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment configuration (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "override the configured seed");
    cmd->add_option("--scale", scale, "override the configured scale (desk|paper)")
        ->check(CLI::IsMember({"desk", "paper"}));
  };

  add_common(app.add_subcommand("estimate-eig",
                                "evaluate the design criterion exactly and by randomized estimators"));
  add_common(app.add_subcommand("place-sensors",
                                "run the sensor selection methods against random designs"));
  add_common(app.add_subcommand("assimilate",
                                "simulate data and solve for the trajectory MAP estimate"));
  add_common(app.add_subcommand("gap-study",
                                "track the exact-dynamics criterion on designs picked under model error"));

  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  return wc4dvar::run_command(command, config_path, out_dir, seed, scale);
}
