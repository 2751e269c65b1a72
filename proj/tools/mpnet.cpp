// mpnet: config-driven training and evaluation for the VGG19 / multipath
// VGG19 family. Subcommands: run, inspect, compare, export-weights,
// import-check. Exit codes: 2 config error, 3 data error, 4 numeric failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mpnet/harness.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::string> out_override;
};

mpnet::config::ExperimentConfig load_config(const CommonArgs& args) {
  mpnet::config::ExperimentConfig cfg = mpnet::config::load(args.config_path);
  if (args.seed_override) {
    cfg.seed = *args.seed_override;
    cfg.augment.master_seed = *args.seed_override;
  }
  if (args.out_override) cfg.output_dir = *args.out_override;
  return cfg;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool config_required = true) {
  auto* opt = cmd->add_option("--config", args.config_path, "experiment config JSON");
  if (config_required) opt->required();
  cmd->add_option("--seed", [&args](const std::vector<std::string>& vals) {
    args.seed_override = std::stoull(vals.at(0));
    return true;
  }, "override the config seed");
  cmd->add_option("--out", [&args](const std::vector<std::string>& vals) {
    args.out_override = vals.at(0);
    return true;
  }, "override the output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multipath VGG19 training and evaluation engine"};
  app.require_subcommand(1);

  CommonArgs run_args, inspect_args, export_args, import_args;
  std::string export_path, import_weights_path, import_policy = "partial";

  CLI::App* run_cmd = app.add_subcommand("run", "run k-fold cross-validation and write reports");
  add_common(run_cmd, run_args);

  CLI::App* inspect_cmd = app.add_subcommand("inspect", "print the architecture/shape table");
  add_common(inspect_cmd, inspect_args);

  CLI::App* compare_cmd = app.add_subcommand("compare", "compare two run reports (or the bundled tables)");
  std::string report_a, report_b;
  bool paper_a = false, paper_b = false;
  std::string compare_out;
  compare_cmd->add_option("report_a", report_a, "first report.json");
  compare_cmd->add_option("report_b", report_b, "second report.json");
  compare_cmd->add_flag("--paper-mvgg19", paper_a, "use the bundled multipath results as side A");
  compare_cmd->add_flag("--paper-vgg19", paper_b, "use the bundled sequential results as side B");
  compare_cmd->add_option("--out", compare_out, "directory for compare.json and compare.svg");

  CLI::App* export_cmd = app.add_subcommand("export-weights", "build the configured model and export NTF weights");
  add_common(export_cmd, export_args);
  export_cmd->add_option("--weights-out", export_path, "output .ntf path")->required();

  CLI::App* import_cmd = app.add_subcommand("import-check", "validate an NTF weights file against the configured model");
  add_common(import_cmd, import_args);
  import_cmd->add_option("--weights", import_weights_path, "weights .ntf path")->required();
  import_cmd->add_option("--policy", import_policy, "strict|partial (default partial)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return mpnet::harness::cmd_run(load_config(run_args), std::cout);
    if (inspect_cmd->parsed()) return mpnet::harness::cmd_inspect(load_config(inspect_args), std::cout);
    if (compare_cmd->parsed()) {
      mpnet::metrics::MetricTable a, b;
      if (paper_a) a = mpnet::metrics::paper_mvgg19_table();
      else if (!report_a.empty()) a = mpnet::harness::table_from_path(report_a);
      else throw mpnet::ConfigError("compare: provide report_a or --paper-mvgg19");
      if (paper_b) b = mpnet::metrics::paper_vgg19_table();
      else if (!report_b.empty()) b = mpnet::harness::table_from_path(report_b);
      else throw mpnet::ConfigError("compare: provide report_b or --paper-vgg19");
      std::optional<std::filesystem::path> out_dir;
      if (!compare_out.empty()) out_dir = compare_out;
      return mpnet::harness::cmd_compare(a, b, out_dir, std::cout);
    }
    if (export_cmd->parsed())
      return mpnet::harness::cmd_export_weights(load_config(export_args), export_path, std::cout);
    if (import_cmd->parsed())
      return mpnet::harness::cmd_import_check(load_config(import_args), import_weights_path,
                                              import_policy, std::cout);
  } catch (const mpnet::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const mpnet::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const mpnet::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const mpnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
