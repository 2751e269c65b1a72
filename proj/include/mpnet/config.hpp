#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "mpnet/data.hpp"
#include "mpnet/error.hpp"
#include "mpnet/fixtures.hpp"
#include "mpnet/graph.hpp"
#include "mpnet/train.hpp"

// Flat JSON experiment configuration. The seed is mandatory: runs never fall
// back to wall-clock entropy.
namespace mpnet::config {

struct ExperimentConfig {
  std::string model = "mvgg19";          // vgg19 | mvgg19
  std::string scale = "mini";            // full | mini | custom
  model::ArchScale arch;                 // resolved scale
  std::string dataset = "synthetic-stripes";
  std::size_t dataset_samples = 2000;    // builtin fixtures only
  std::optional<int> expected_classes;
  int folds = 10;
  int epochs = 15;
  int batch_size = 32;
  data::AugmentConfig augment;
  std::string freeze_policy = "backbone";
  float inner_val_fraction = 0.1f;
  std::optional<std::string> weights_in;
  std::string weights_policy = "partial";  // strict | partial
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int channels = 3;

  model::FreezePolicy freeze() const { return model::freeze_policy_from_string(freeze_policy); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["model"] = model;
    j["scale"] = scale;
    if (scale == "custom") {
      j["channels_per_block"] = arch.channels_per_block;
      j["convs_per_block"] = arch.convs_per_block;
      j["head_width"] = arch.head_width;
    }
    j["input_side"] = arch.input_side;
    j["channels"] = channels;
    j["dataset"] = dataset;
    if (fixtures::is_builtin(dataset)) j["dataset_samples"] = dataset_samples;
    if (expected_classes) j["expected_classes"] = *expected_classes;
    j["folds"] = folds;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["noise_sigma"] = augment.noise_sigma;
    j["rotation_max_deg"] = augment.rotation_max_deg;
    j["h_flip"] = augment.h_flip;
    j["v_flip"] = augment.v_flip;
    j["shift_max_frac"] = augment.shift_max_frac;
    j["fill_value"] = augment.fill_value;
    j["freeze_policy"] = freeze_policy;
    j["inner_val_fraction"] = inner_val_fraction;
    if (weights_in) {
      j["weights_in"] = *weights_in;
      j["weights_policy"] = weights_policy;
    }
    j["seed"] = seed;
    j["output_dir"] = output_dir;
    return j;
  }
};

namespace detail {

template <typename T>
T field(const nlohmann::json& j, const std::string& name, const T& fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + name + "' has the wrong type");
  }
}

template <typename T>
T required(const nlohmann::json& j, const std::string& name) {
  if (!j.contains(name)) throw ConfigError("config field '" + name + "' is required");
  try {
    return j.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + name + "' has the wrong type");
  }
}

}  // namespace detail

inline ExperimentConfig parse(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.model = detail::field<std::string>(j, "model", cfg.model);
  if (cfg.model != "vgg19" && cfg.model != "mvgg19")
    throw ConfigError("config field 'model' must be vgg19 or mvgg19, got " + cfg.model);

  cfg.scale = detail::field<std::string>(j, "scale", cfg.scale);
  if (cfg.scale == "full") {
    cfg.arch = model::full_scale();
  } else if (cfg.scale == "mini") {
    cfg.arch = model::mini_scale();
  } else if (cfg.scale == "custom") {
    cfg.arch.channels_per_block = detail::required<std::array<int, 5>>(j, "channels_per_block");
    cfg.arch.convs_per_block = detail::required<std::array<int, 5>>(j, "convs_per_block");
    cfg.arch.head_width = detail::required<int>(j, "head_width");
  } else {
    throw ConfigError("config field 'scale' must be full, mini or custom, got " + cfg.scale);
  }
  cfg.arch.input_side = detail::field<int>(j, "input_side", cfg.arch.input_side);
  if (cfg.arch.input_side < 1) throw ConfigError("config field 'input_side' must be positive");
  cfg.channels = detail::field<int>(j, "channels", cfg.channels);
  if (cfg.channels != 1 && cfg.channels != 3)
    throw ConfigError("config field 'channels' must be 1 or 3");
  cfg.arch.channels_in = cfg.channels;

  cfg.dataset = detail::field<std::string>(j, "dataset", cfg.dataset);
  cfg.dataset_samples = detail::field<std::size_t>(j, "dataset_samples", cfg.dataset_samples);
  if (!fixtures::is_builtin(cfg.dataset) && !std::filesystem::exists(cfg.dataset))
    throw ConfigError("config field 'dataset' names a missing path: " + cfg.dataset);
  if (j.contains("expected_classes")) cfg.expected_classes = detail::required<int>(j, "expected_classes");

  cfg.folds = detail::field<int>(j, "folds", cfg.folds);
  if (cfg.folds < 2) throw ConfigError("config field 'folds' must be >= 2, got " + std::to_string(cfg.folds));
  cfg.epochs = detail::field<int>(j, "epochs", cfg.epochs);
  if (cfg.epochs < 1) throw ConfigError("config field 'epochs' must be >= 1");
  cfg.batch_size = detail::field<int>(j, "batch_size", cfg.batch_size);
  if (cfg.batch_size < 1) throw ConfigError("config field 'batch_size' must be >= 1");

  cfg.augment.noise_sigma = detail::field<float>(j, "noise_sigma", cfg.augment.noise_sigma);
  if (cfg.augment.noise_sigma < 0) throw ConfigError("config field 'noise_sigma' must be >= 0");
  cfg.augment.rotation_max_deg = detail::field<float>(j, "rotation_max_deg", cfg.augment.rotation_max_deg);
  if (cfg.augment.rotation_max_deg < 0) throw ConfigError("config field 'rotation_max_deg' must be >= 0");
  cfg.augment.h_flip = detail::field<bool>(j, "h_flip", cfg.augment.h_flip);
  cfg.augment.v_flip = detail::field<bool>(j, "v_flip", cfg.augment.v_flip);
  cfg.augment.shift_max_frac = detail::field<float>(j, "shift_max_frac", cfg.augment.shift_max_frac);
  if (cfg.augment.shift_max_frac < 0 || cfg.augment.shift_max_frac >= 1)
    throw ConfigError("config field 'shift_max_frac' must be in [0,1)");
  cfg.augment.fill_value = detail::field<float>(j, "fill_value", cfg.augment.fill_value);

  cfg.freeze_policy = detail::field<std::string>(j, "freeze_policy", cfg.freeze_policy);
  model::freeze_policy_from_string(cfg.freeze_policy);  // validates
  cfg.inner_val_fraction = detail::field<float>(j, "inner_val_fraction", cfg.inner_val_fraction);
  if (cfg.inner_val_fraction < 0 || cfg.inner_val_fraction > 0.5f)
    throw ConfigError("config field 'inner_val_fraction' must be in [0, 0.5]");

  if (j.contains("weights_in")) {
    cfg.weights_in = detail::required<std::string>(j, "weights_in");
    if (!std::filesystem::exists(*cfg.weights_in))
      throw ConfigError("config field 'weights_in' names a missing path: " + *cfg.weights_in);
    cfg.weights_policy = detail::field<std::string>(j, "weights_policy", cfg.weights_policy);
    if (cfg.weights_policy != "strict" && cfg.weights_policy != "partial")
      throw ConfigError("config field 'weights_policy' must be strict or partial");
  }

  cfg.seed = detail::required<std::uint64_t>(j, "seed");
  cfg.output_dir = detail::field<std::string>(j, "output_dir", cfg.output_dir);
  cfg.augment.master_seed = cfg.seed;
  return cfg;
}

inline ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return parse(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace mpnet::config
