#include <iostream>

#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace otassign::cli;

  CLI::App app{"Optimal-transport label assignment engine"};
  app.require_subcommand(1);

  AssignArgs assign_args;
  auto* assign = app.add_subcommand("assign", "Assign labels for one scene file");
  assign->add_option("--scene", assign_args.scene, "Scene JSON")->required();
  assign->add_option("--config", assign_args.config, "Engine config (key=value)");
  assign->add_option("--out", assign_args.out, "Output JSON (default stdout)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run the multi-stage simulator over seeds");
  simulate->add_option("--config", sim_args.config, "Engine config (key=value)");
  simulate->add_option("--seeds", sim_args.seeds, "Number of seeds (overrides simulate.seeds)");
  simulate->add_option("--report", sim_args.report, "Report path prefix; writes .csv and .json")
      ->required();
  simulate->add_flag("--timing", sim_args.timing, "Include wall-time columns");

  CompareArgs cmp_args;
  auto* compare = app.add_subcommand("compare", "Compare Hungarian, Sinkhorn and the exact oracle");
  compare->add_option("--scene", cmp_args.scene, "Scene JSON")->required();
  compare->add_option("--config", cmp_args.config, "Engine config (key=value)");

  DpgDemoArgs dpg_args;
  auto* dpg_demo = app.add_subcommand("dpg-demo", "Generate dynamic proposals for a random pyramid");
  dpg_demo->add_option("--config", dpg_args.config, "Engine config (key=value)");
  dpg_demo->add_option("--params", dpg_args.params, "Parameter JSON");
  dpg_demo->add_option("--seed", dpg_args.seed, "Seed for random parameters and pyramid");
  dpg_demo->add_option("--tau", dpg_args.tau, "Softmax temperature (overrides dpg.tau)");
  dpg_demo->add_option("--out", dpg_args.out, "Output JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  if (*assign) return cmd_assign(assign_args, std::cout, std::cerr);
  if (*simulate) return cmd_simulate(sim_args, std::cout, std::cerr);
  if (*compare) return cmd_compare(cmp_args, std::cout, std::cerr);
  if (*dpg_demo) return cmd_dpg_demo(dpg_args, std::cout, std::cerr);
  return kInputError;
}
