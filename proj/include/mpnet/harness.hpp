#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <json.hpp>

#include "mpnet/config.hpp"
#include "mpnet/data.hpp"
#include "mpnet/fixtures.hpp"
#include "mpnet/graph.hpp"
#include "mpnet/metrics.hpp"
#include "mpnet/ntf.hpp"
#include "mpnet/paper_tables.hpp"
#include "mpnet/report.hpp"
#include "mpnet/svg.hpp"
#include "mpnet/train.hpp"

// Library-level implementations of the CLI commands, exercised directly by
// the test suite; the binary in tools/ is a thin argument-parsing shell.
namespace mpnet::harness {

// ---- weight import/export over NTF ----

inline std::map<std::string, Tensor> snapshot_weights(const model::ParamStore& params) {
  std::map<std::string, Tensor> out;
  for (const auto& [name, var] : params.all()) out.emplace(name, var.value);
  for (const auto& [layer, running] : params.bn_all()) {
    out.emplace(layer + "/running_mean", running.mean);
    out.emplace(layer + "/running_var", running.var);
  }
  return out;
}

inline void export_weights(const model::ParamStore& params, const std::filesystem::path& path) {
  ntf::write_file(path, snapshot_weights(params));
}

enum class ImportPolicy { Strict, Partial };

inline ImportPolicy import_policy_from_string(const std::string& s) {
  if (s == "strict") return ImportPolicy::Strict;
  if (s == "partial") return ImportPolicy::Partial;
  throw ConfigError("unknown weights_policy: " + s);
}

// Sets every tensor named in the file; each must exist in the store with a
// matching shape. Strict additionally demands the file covers the whole
// store (partial permits loading a backbone subset).
inline std::size_t import_weights(const std::filesystem::path& path, model::ParamStore& params,
                                  ImportPolicy policy) {
  const auto tensors = ntf::read_file(path);
  std::size_t applied = 0;
  auto assign = [&](Tensor& dst, const Tensor& src, const std::string& name) {
    if (!dst.same_shape(src))
      throw DataError("weights " + path.string() + ": tensor " + name + " has shape " +
                      src.shape().str() + " but the model expects " + dst.shape().str());
    dst = src;
    ++applied;
  };
  for (const auto& [name, tensor] : tensors) {
    if (params.contains(name)) {
      assign(params.at(name).value, tensor, name);
      params.at(name).zero_grad();
      continue;
    }
    if (name.ends_with("/running_mean") || name.ends_with("/running_var")) {
      const bool is_mean = name.ends_with("/running_mean");
      const std::string layer = name.substr(0, name.rfind('/'));
      model::BatchNormRunning& running = params.bn(layer);  // throws when unknown
      assign(is_mean ? running.mean : running.var, tensor, name);
      continue;
    }
    throw DataError("weights " + path.string() + ": tensor " + name + " does not exist in the model");
  }
  if (policy == ImportPolicy::Strict) {
    const auto expected = snapshot_weights(params);
    for (const auto& [name, tensor] : expected)
      if (!tensors.count(name))
        throw DataError("weights " + path.string() + ": strict import but tensor " + name +
                        " is missing from the file");
  }
  return applied;
}

// ---- shared orchestration ----

inline data::DatasetIndex load_configured_dataset(const config::ExperimentConfig& cfg) {
  data::DatasetIndex ds;
  if (fixtures::is_builtin(cfg.dataset)) {
    ds = fixtures::builtin(cfg.dataset, cfg.dataset_samples,
                           static_cast<std::size_t>(cfg.arch.input_side), cfg.channels,
                           derive_seed(cfg.seed, hash_str("dataset")));
  } else {
    ds = data::load_dataset(cfg.dataset, static_cast<std::size_t>(cfg.arch.input_side), cfg.channels);
  }
  if (cfg.expected_classes && ds.class_count() != *cfg.expected_classes)
    throw DataError("dataset " + cfg.dataset + " has " + std::to_string(ds.class_count()) +
                    " classes, expected " + std::to_string(*cfg.expected_classes));
  return ds;
}

inline model::Model build_configured_model(const config::ExperimentConfig& cfg, int class_count,
                                           std::uint64_t init_seed) {
  model::Model m = cfg.model == "vgg19" ? model::build_vgg19(cfg.arch, class_count)
                                        : model::build_mvgg19(cfg.arch, class_count);
  model::initialize(m.params, init_seed);
  if (cfg.weights_in)
    import_weights(*cfg.weights_in, m.params, import_policy_from_string(cfg.weights_policy));
  model::apply_freeze_policy(m.params, cfg.freeze());
  return m;
}

inline std::string timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Full experiment: dataset, fold plan, k-fold cross-validation, artifacts.
inline metrics::RunReport run_experiment(const config::ExperimentConfig& cfg) {
  data::DatasetIndex ds = load_configured_dataset(cfg);
  data::FoldPlan plan = data::stratified_kfold(ds, cfg.folds, derive_seed(cfg.seed, hash_str("folds")));

  train::TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.freeze = cfg.freeze();
  tc.inner_val_fraction = cfg.inner_val_fraction;
  tc.master_seed = cfg.seed;

  auto builder = [&](std::uint64_t fold_seed) { return build_configured_model(cfg, ds.class_count(), fold_seed); };
  metrics::RunReport report = train::cross_validate(builder, ds, plan, cfg.augment, tc);
  report.dataset = fixtures::is_builtin(cfg.dataset)
                       ? cfg.dataset
                       : std::filesystem::path(cfg.dataset).filename().string();
  report.model = cfg.model;
  report.config_json = cfg.to_json().dump();
  return report;
}

inline int cmd_run(const config::ExperimentConfig& cfg, std::ostream& out) {
  metrics::RunReport rep = run_experiment(cfg);
  report::write_run_outputs(cfg.output_dir, rep, timestamp_now());
  out << "dataset " << rep.dataset << ", model " << rep.model << ", " << rep.folds.size() << " folds\n";
  auto show = [&](const char* name, const std::optional<double>& v) {
    out << "  " << name << ": ";
    if (v) out << *v * 100.0 << "%";
    else out << "-";
    out << "\n";
  };
  show("accuracy", rep.aggregate.accuracy);
  show("precision", rep.aggregate.precision);
  show("recall", rep.aggregate.recall);
  show("f1", rep.aggregate.f1);
  show("auc", rep.aggregate.auc);
  out << "report written to " << (std::filesystem::path(cfg.output_dir) / "report.json").string() << "\n";
  return 0;
}

inline int cmd_inspect(const config::ExperimentConfig& cfg, std::ostream& out) {
  int class_count = 2;
  if (cfg.expected_classes) {
    class_count = *cfg.expected_classes;
  } else if (fixtures::is_builtin(cfg.dataset)) {
    class_count = cfg.dataset == "synthetic-multi" ? 4 : 2;
  } else if (std::filesystem::exists(cfg.dataset)) {
    class_count = load_configured_dataset(cfg).class_count();
  }
  model::Model m = cfg.model == "vgg19" ? model::build_vgg19(cfg.arch, class_count)
                                        : model::build_mvgg19(cfg.arch, class_count);
  model::initialize(m.params, cfg.seed);
  model::apply_freeze_policy(m.params, cfg.freeze());
  out << model::summary(m.spec, m.params, static_cast<std::size_t>(cfg.arch.input_side));
  return 0;
}

// ---- compare ----

struct CompareInputs {
  metrics::MetricTable a, b;
};

inline metrics::MetricTable table_from_path(const std::filesystem::path& path) {
  return metrics::table_from_report(report::load(path));
}

inline int cmd_compare(const metrics::MetricTable& a, const metrics::MetricTable& b,
                       const std::optional<std::filesystem::path>& out_dir, std::ostream& out) {
  metrics::CompareResult result = metrics::compare_reports(a, b);
  out << "accuracy deltas (" << a.label << " - " << b.label << "), percentage points:\n";
  nlohmann::json j;
  j["a"] = a.label;
  j["b"] = b.label;
  j["deltas_pp"] = nlohmann::json::object();
  std::vector<std::string> names;
  std::vector<double> va, vb;
  for (const auto& [dataset, delta] : result.accuracy_delta_pp) {
    out << "  " << dataset << ": " << (delta >= 0 ? "+" : "") << delta << "\n";
    j["deltas_pp"][dataset] = delta;
    names.push_back(dataset);
    va.push_back(*a.find(dataset)->accuracy);
    vb.push_back(*b.find(dataset)->accuracy);
  }
  out << "mean: " << (result.mean_accuracy_delta_pp >= 0 ? "+" : "") << result.mean_accuracy_delta_pp
      << "\n";
  j["mean_delta_pp"] = result.mean_accuracy_delta_pp;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    report::detail::write_text_atomic(*out_dir / "compare.json", j.dump(2) + "\n");
    report::detail::write_text_atomic(
        *out_dir / "compare.svg",
        svg::grouped_bars("overall accuracy: " + a.label + " vs " + b.label, "accuracy (%)", names,
                          {a.label, va}, {b.label, vb}));
  }
  return 0;
}

inline int cmd_export_weights(const config::ExperimentConfig& cfg,
                              const std::filesystem::path& out_path, std::ostream& out) {
  int class_count = cfg.expected_classes.value_or(fixtures::is_builtin(cfg.dataset)
                                                      ? (cfg.dataset == "synthetic-multi" ? 4 : 2)
                                                      : load_configured_dataset(cfg).class_count());
  model::Model m = build_configured_model(cfg, class_count, cfg.seed);
  export_weights(m.params, out_path);
  out << "wrote " << snapshot_weights(m.params).size() << " tensors to " << out_path.string() << "\n";
  return 0;
}

inline int cmd_import_check(const config::ExperimentConfig& cfg,
                            const std::filesystem::path& weights, const std::string& policy,
                            std::ostream& out) {
  int class_count = cfg.expected_classes.value_or(fixtures::is_builtin(cfg.dataset)
                                                      ? (cfg.dataset == "synthetic-multi" ? 4 : 2)
                                                      : load_configured_dataset(cfg).class_count());
  model::Model m = cfg.model == "vgg19" ? model::build_vgg19(cfg.arch, class_count)
                                        : model::build_mvgg19(cfg.arch, class_count);
  model::initialize(m.params, cfg.seed);
  const std::size_t applied = import_weights(weights, m.params, import_policy_from_string(policy));
  out << "ok: " << applied << " tensors from " << weights.string() << " fit " << cfg.model << "\n";
  return 0;
}

}  // namespace mpnet::harness
