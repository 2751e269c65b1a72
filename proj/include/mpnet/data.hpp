#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpnet/error.hpp"
#include "mpnet/image.hpp"
#include "mpnet/ntf.hpp"
#include "mpnet/rng.hpp"
#include "mpnet/tensor.hpp"

// Dataset loading (class-per-directory image trees and NTF raw-tensor
// fixtures), the four training-time augmentations, stratified k-fold
// splitting and per-epoch batch assembly. Everything is driven by derived
// seeds so a full epoch of augmented batches is reproducible regardless of
// worker scheduling.
namespace mpnet::data {

struct DatasetIndex {
  struct Sample {
    std::filesystem::path path;  // empty when the tensor is held in memory
    Tensor tensor;
    int label = 0;
  };

  std::vector<std::string> classes;  // lexicographic by name
  std::vector<Sample> samples;
  std::string source;
  std::size_t target_side = 0;
  int channels = 3;

  std::size_t size() const { return samples.size(); }
  int class_count() const { return static_cast<int>(classes.size()); }
  int label(std::size_t i) const { return samples[i].label; }

  // Decoded, converted and resized sample image.
  Tensor get(std::size_t i) const {
    const Sample& s = samples[i];
    if (s.path.empty()) return s.tensor;
    return image::load_image(s.path, target_side, channels);
  }

  std::vector<std::size_t> per_class_counts() const {
    std::vector<std::size_t> counts(classes.size(), 0);
    for (const Sample& s : samples) ++counts[static_cast<std::size_t>(s.label)];
    return counts;
  }
};

// Loads root/<class_name>/<image files>. Images decode lazily; the index
// stores paths. Class order is lexicographic for determinism.
inline DatasetIndex load_image_tree(const std::filesystem::path& root, std::size_t target_side,
                                    int channels) {
  if (!std::filesystem::is_directory(root))
    throw DataError("dataset root " + root.string() + " is not a directory");
  std::vector<std::string> class_names;
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  std::sort(class_names.begin(), class_names.end());
  if (class_names.size() < 2) {
    if (class_names.size() == 1)
      throw DataError("dataset " + root.string() + " has a single class directory (" + class_names[0] + ")");
    throw DataError("dataset " + root.string() + " contains no class directories");
  }

  DatasetIndex ds;
  ds.classes = class_names;
  ds.source = root.string();
  ds.target_side = target_side;
  ds.channels = channels;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(root / class_names[c]))
      if (entry.is_regular_file() && image::is_image_file(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty())
      throw DataError("dataset class " + class_names[c] + " in " + root.string() + " holds no images");
    image::decode(files.front());  // fail fast per class; the rest decode lazily
    for (auto& f : files) ds.samples.push_back({f, Tensor(), static_cast<int>(c)});
  }
  return ds;
}

// Raw-tensor fixture: an NTF container with samples "s0", "s1", ... and an
// integer-valued "labels" tensor; classes are named c0..c{k-1}.
inline DatasetIndex load_ntf_fixture(const std::filesystem::path& file, std::size_t target_side,
                                     int channels) {
  auto tensors = ntf::read_file(file);
  auto labels_it = tensors.find("labels");
  if (labels_it == tensors.end())
    throw DataError("raw-tensor fixture " + file.string() + " has no labels tensor");
  const Tensor& labels = labels_it->second;
  DatasetIndex ds;
  ds.source = file.string();
  ds.target_side = target_side;
  ds.channels = channels;
  int max_label = -1;
  for (std::size_t i = 0; i < labels.count(); ++i) {
    const float v = labels[i];
    if (v != std::floor(v) || v < 0)
      throw DataError("raw-tensor fixture " + file.string() + " has a non-integer label");
    max_label = std::max(max_label, static_cast<int>(v));
  }
  if (max_label < 1)
    throw DataError("raw-tensor fixture " + file.string() + " has a single class");
  for (int c = 0; c <= max_label; ++c) ds.classes.push_back("c" + std::to_string(c));
  for (std::size_t i = 0; i < labels.count(); ++i) {
    auto it = tensors.find("s" + std::to_string(i));
    if (it == tensors.end())
      throw DataError("raw-tensor fixture " + file.string() + " is missing sample s" + std::to_string(i));
    Tensor img = it->second;
    if (img.rank() == 2) img = img.reshaped(Shape{img.extent(0), img.extent(1), 1});
    if (img.rank() != 3)
      throw DataError("raw-tensor fixture " + file.string() + ": sample s" + std::to_string(i) +
                      " must be rank 2 or 3");
    img = image::resize_bilinear(image::to_channels(img, channels), target_side);
    ds.samples.push_back({{}, std::move(img), static_cast<int>(labels[i])});
  }
  auto counts = ds.per_class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0)
      throw DataError("raw-tensor fixture " + file.string() + ": class c" + std::to_string(c) + " is empty");
  return ds;
}

inline DatasetIndex load_dataset(const std::filesystem::path& root, std::size_t target_side,
                                 int channels) {
  if (channels != 1 && channels != 3) throw ValueError("load_dataset: channels must be 1 or 3");
  if (target_side < 1) throw ValueError("load_dataset: target_side must be >= 1");
  if (std::filesystem::is_regular_file(root) && root.extension() == ".ntf")
    return load_ntf_fixture(root, target_side, channels);
  return load_image_tree(root, target_side, channels);
}

// ---- augmentations ----

inline Tensor gaussian_noise(const Tensor& x, float sigma, Rng& rng) {
  if (sigma < 0.0f) throw ValueError("gaussian_noise: sigma must be >= 0");
  if (sigma == 0.0f) return x;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.count(); ++i)
    out[i] = std::clamp(x[i] + sigma * rng.normal(), 0.0f, 1.0f);
  return out;
}

// Rotation about the image center with bilinear sampling; out-of-bounds
// source positions read as fill. 90 degrees maps [[1,2],[3,4]] to [[2,4],[1,3]].
inline Tensor rotate(const Tensor& x, float degrees, float fill) {
  if (x.rank() != 3) throw ShapeError("rotate: expects h x w x c, got " + x.shape().str());
  if (degrees == 0.0f) return x;
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  const double rad = static_cast<double>(degrees) * 3.14159265358979323846 / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  Tensor out(x.shape());
  auto sample = [&](std::ptrdiff_t y, std::ptrdiff_t xq, std::size_t ch) -> float {
    if (y < 0 || y >= static_cast<std::ptrdiff_t>(h) || xq < 0 || xq >= static_cast<std::ptrdiff_t>(w))
      return fill;
    return x[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(xq)) * c + ch];
  };
  for (std::size_t oy = 0; oy < h; ++oy) {
    for (std::size_t ox = 0; ox < w; ++ox) {
      const double dy = static_cast<double>(oy) - cy;
      const double dx = static_cast<double>(ox) - cx;
      const double sy = cy + dx * sn + dy * cs;
      const double sx = cx - dy * sn + dx * cs;
      const std::ptrdiff_t y0 = static_cast<std::ptrdiff_t>(std::floor(sy));
      const std::ptrdiff_t x0 = static_cast<std::ptrdiff_t>(std::floor(sx));
      const float wy = static_cast<float>(sy - static_cast<double>(y0));
      const float wx = static_cast<float>(sx - static_cast<double>(x0));
      for (std::size_t ch = 0; ch < c; ++ch) {
        const float v00 = sample(y0, x0, ch);
        const float v01 = sample(y0, x0 + 1, ch);
        const float v10 = sample(y0 + 1, x0, ch);
        const float v11 = sample(y0 + 1, x0 + 1, ch);
        const float top = v00 + (v01 - v00) * wx;
        const float bot = v10 + (v11 - v10) * wx;
        out[(oy * w + ox) * c + ch] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

enum class FlipAxis { Horizontal, Vertical };

inline Tensor flip(const Tensor& x, FlipAxis axis) {
  if (x.rank() != 3) throw ShapeError("flip: expects h x w x c, got " + x.shape().str());
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor out(x.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t xq = 0; xq < w; ++xq) {
      const std::size_t sy = axis == FlipAxis::Vertical ? h - 1 - y : y;
      const std::size_t sx = axis == FlipAxis::Horizontal ? w - 1 - xq : xq;
      for (std::size_t ch = 0; ch < c; ++ch)
        out[(y * w + xq) * c + ch] = x[(sy * w + sx) * c + ch];
    }
  }
  return out;
}

inline Tensor shift(const Tensor& x, long dy, long dx, float fill) {
  if (x.rank() != 3) throw ShapeError("shift: expects h x w x c, got " + x.shape().str());
  const long h = static_cast<long>(x.extent(0)), w = static_cast<long>(x.extent(1));
  const std::size_t c = x.extent(2);
  if (std::labs(dy) > h || std::labs(dx) > w)
    throw ValueError("shift: offset (" + std::to_string(dy) + "," + std::to_string(dx) +
                     ") exceeds extents " + x.shape().str());
  Tensor out(x.shape());
  for (long y = 0; y < h; ++y) {
    for (long xq = 0; xq < w; ++xq) {
      const long sy = y - dy, sx = xq - dx;
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(xq)) * c + ch] =
            (sy < 0 || sy >= h || sx < 0 || sx >= w)
                ? fill
                : x[(static_cast<std::size_t>(sy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(sx)) * c + ch];
      }
    }
  }
  return out;
}

struct AugmentConfig {
  float noise_sigma = 0.05f;       // fraction of the intensity range
  float rotation_max_deg = 20.0f;
  bool h_flip = true;
  bool v_flip = true;
  float shift_max_frac = 0.1f;
  float fill_value = 0.0f;
  std::uint64_t master_seed = 0;
};

// Fixed application order: noise, rotation, flips, shifts. The per-sample
// stream derives from (master_seed, epoch, idx), so results are independent
// of worker count and scheduling.
inline Tensor augment_sample(const Tensor& x, const AugmentConfig& cfg, int epoch,
                             std::size_t idx) {
  Rng rng(derive_seed(cfg.master_seed, static_cast<std::uint64_t>(epoch),
                      static_cast<std::uint64_t>(idx)));
  Tensor out = gaussian_noise(x, rng.uniform(0.0f, cfg.noise_sigma), rng);
  out = rotate(out, rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg), cfg.fill_value);
  if (cfg.h_flip && rng.bernoulli(0.5)) out = flip(out, FlipAxis::Horizontal);
  if (cfg.v_flip && rng.bernoulli(0.5)) out = flip(out, FlipAxis::Vertical);
  const float max_dy = cfg.shift_max_frac * static_cast<float>(x.extent(0));
  const float max_dx = cfg.shift_max_frac * static_cast<float>(x.extent(1));
  const long dy = std::lround(rng.uniform(-max_dy, max_dy));
  const long dx = std::lround(rng.uniform(-max_dx, max_dx));
  if (dy != 0 || dx != 0) out = shift(out, dy, dx, cfg.fill_value);
  return out;
}

// ---- stratified k-fold ----

struct FoldPlan {
  int k = 0;
  std::vector<int> assignments;  // sample index -> fold id

  std::vector<std::size_t> test_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] == fold) out.push_back(i);
    return out;
  }
  std::vector<std::size_t> train_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < assignments.size(); ++i)
      if (assignments[i] != fold) out.push_back(i);
    return out;
  }
};

// Per-class shuffled round-robin assignment: folds partition the samples and
// per-class counts across folds differ by at most one.
inline FoldPlan stratified_kfold(const DatasetIndex& ds, int k, std::uint64_t seed) {
  if (k < 2) throw ValueError("stratified_kfold: k must be >= 2, got " + std::to_string(k));
  const auto counts = ds.per_class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] < static_cast<std::size_t>(k))
      throw DataError("stratified_kfold: class " + ds.classes[c] + " has " +
                      std::to_string(counts[c]) + " samples, fewer than k=" + std::to_string(k));
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(ds.size(), -1);
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i)
      if (ds.samples[i].label == static_cast<int>(c)) members.push_back(i);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j)
      plan.assignments[members[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  }
  return plan;
}

// Seeded per-epoch shuffle, chunked; the final short batch is kept.
inline std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> indices,
                                                          std::size_t batch_size,
                                                          std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw ValueError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  Rng rng(derive_seed(seed, 0x9a7cb1ull, static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < order.size(); at += batch_size) {
    const std::size_t end = std::min(order.size(), at + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Stratified train/validation split of the given indices; val_fraction of
// each class (rounded down) goes to validation.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_train_val(
    const DatasetIndex& ds, std::span<const std::size_t> indices, float val_fraction,
    std::uint64_t seed) {
  if (val_fraction < 0.0f || val_fraction > 0.5f)
    throw ValueError("split_train_val: val_fraction must be in [0, 0.5]");
  std::vector<std::size_t> train, val;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i : indices) by_class[ds.samples[i].label].push_back(i);
  for (auto& [label, members] : by_class) {
    Rng rng(derive_seed(seed, 0x517aull, static_cast<std::uint64_t>(label)));
    rng.shuffle(members);
    const std::size_t n_val = static_cast<std::size_t>(
        static_cast<double>(members.size()) * static_cast<double>(val_fraction));
    for (std::size_t j = 0; j < members.size(); ++j)
      (j < n_val ? val : train).push_back(members[j]);
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

}  // namespace mpnet::data
