#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "mpnet/data.hpp"
#include "mpnet/ntf.hpp"
#include "mpnet/rng.hpp"
#include "mpnet/tensor.hpp"

// Deterministic synthetic datasets for desk-scale experiments:
// "synthetic-stripes" is a two-class oriented-bars task (horizontal vs
// vertical, separable by construction); "synthetic-multi" extends it to four
// orientations. Both generate entirely from the seed.
namespace mpnet::fixtures {

namespace detail {

// Sinusoidal bar pattern along the given orientation plus Gaussian noise.
inline Tensor oriented_pattern(std::size_t side, int channels, double angle_deg, Rng& rng) {
  const double rad = angle_deg * 3.14159265358979323846 / 180.0;
  const double ux = std::cos(rad), uy = std::sin(rad);
  const double period = 4.0 + rng.uniform() * 6.0;  // bars 4..10 px wide
  const double phase = rng.uniform() * period;
  const double two_pi = 2.0 * 3.14159265358979323846;
  Tensor img(Shape{side, side, static_cast<std::size_t>(channels)});
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      const double coord = static_cast<double>(x) * ux + static_cast<double>(y) * uy;
      const double bar = 0.5 + 0.35 * std::sin(two_pi * (coord + phase) / period);
      for (int ch = 0; ch < channels; ++ch) {
        const float noisy = static_cast<float>(bar) + 0.08f * rng.normal();
        img[(y * side + x) * static_cast<std::size_t>(channels) + static_cast<std::size_t>(ch)] =
            std::clamp(noisy, 0.0f, 1.0f);
      }
    }
  }
  return img;
}

inline data::DatasetIndex oriented_dataset(const std::string& name,
                                           const std::vector<std::pair<std::string, double>>& classes,
                                           std::size_t sample_count, std::size_t side,
                                           int channels, std::uint64_t seed) {
  data::DatasetIndex ds;
  ds.source = name;
  ds.target_side = side;
  ds.channels = channels;
  for (const auto& [cls, angle] : classes) ds.classes.push_back(cls);
  for (std::size_t i = 0; i < sample_count; ++i) {
    const std::size_t label = i % classes.size();
    Rng rng(derive_seed(seed, hash_str(name), static_cast<std::uint64_t>(i)));
    ds.samples.push_back(
        {{}, oriented_pattern(side, channels, classes[label].second, rng), static_cast<int>(label)});
  }
  return ds;
}

}  // namespace detail

// Two-class horizontal vs vertical bars. Class names sort lexicographically
// as declared: horizontal < vertical.
inline data::DatasetIndex synthetic_stripes(std::size_t sample_count, std::size_t side,
                                            int channels, std::uint64_t seed) {
  return detail::oriented_dataset(
      "synthetic-stripes", {{"horizontal", 90.0}, {"vertical", 0.0}}, sample_count, side,
      channels, seed);
}

// Four-orientation variant: 0, 45, 90, 135 degrees.
inline data::DatasetIndex synthetic_multi(std::size_t sample_count, std::size_t side,
                                          int channels, std::uint64_t seed) {
  return detail::oriented_dataset(
      "synthetic-multi",
      {{"deg000", 0.0}, {"deg045", 45.0}, {"deg090", 90.0}, {"deg135", 135.0}}, sample_count,
      side, channels, seed);
}

inline bool is_builtin(const std::string& name) {
  return name == "synthetic-stripes" || name == "synthetic-multi";
}

inline data::DatasetIndex builtin(const std::string& name, std::size_t sample_count,
                                  std::size_t side, int channels, std::uint64_t seed) {
  if (name == "synthetic-stripes") return synthetic_stripes(sample_count, side, channels, seed);
  if (name == "synthetic-multi") return synthetic_multi(sample_count, side, channels, seed);
  throw ConfigError("unknown builtin dataset: " + name);
}

// Serializes an in-memory dataset as an NTF raw-tensor fixture (samples
// "s<idx>" plus a "labels" tensor).
inline void dataset_to_ntf(const data::DatasetIndex& ds, const std::filesystem::path& path) {
  std::map<std::string, Tensor> tensors;
  Tensor labels(Shape{ds.size()});
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels[i] = static_cast<float>(ds.samples[i].label);
    tensors.emplace("s" + std::to_string(i), ds.get(i));
  }
  tensors.emplace("labels", std::move(labels));
  ntf::write_file(path, tensors);
}

}  // namespace mpnet::fixtures
