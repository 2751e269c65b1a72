#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mpnet/data.hpp"
#include "mpnet/graph.hpp"
#include "mpnet/metrics.hpp"
#include "mpnet/ops.hpp"
#include "mpnet/tensor.hpp"

// Adam optimization with freezing-aware updates, the epoch loop, and fold
// orchestration for k-fold cross-validation.
namespace mpnet::train {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// First/second moment state per trainable parameter; frozen parameters stay
// bit-identical through any number of steps.
class AdamState {
 public:
  explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {
    if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
      throw ValueError("adam: betas must lie in [0,1)");
    if (cfg.epsilon <= 0) throw ValueError("adam: epsilon must be > 0");
  }

  long step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  void step(model::ParamStore& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
    for (auto& [name, var] : params.all()) {
      if (!var.trainable) continue;
      if (!var.grad_ready)
        throw ValueError("adam_step: no gradient recorded for trainable parameter " + name);
      auto mit = m_.try_emplace(name, Tensor(var.value.shape())).first;
      auto vit = v_.try_emplace(name, Tensor(var.value.shape())).first;
      Tensor& m = mit->second;
      Tensor& v = vit->second;
      const float b1 = cfg_.beta1, b2 = cfg_.beta2;
      for (std::size_t i = 0; i < var.value.count(); ++i) {
        const float g = var.grad[i];
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        const float mhat = static_cast<float>(m[i] / bc1);
        const float vhat = static_cast<float>(v[i] / bc2);
        var.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

struct TrainConfig {
  int epochs = 15;
  int batch_size = 32;
  model::FreezePolicy freeze = model::FreezePolicy::Backbone;
  float inner_val_fraction = 0.1f;
  std::uint64_t master_seed = 0;
  AdamConfig adam;
};

// MPNET_THREADS caps data-pipeline workers; 1 when unset.
inline int data_workers() {
  const char* env = std::getenv("MPNET_THREADS");
  if (!env) return 1;
  const long v = std::strtol(env, nullptr, 10);
  return static_cast<int>(std::clamp(v, 1l, 64l));
}

// Assembles a batch tensor, optionally augmenting. Samples are written to
// disjoint slots by a fixed partition of workers, so the result does not
// depend on the worker count.
inline Tensor assemble_batch(const data::DatasetIndex& ds, std::span<const std::size_t> idx,
                             const data::AugmentConfig* aug, int epoch) {
  if (idx.empty()) throw ValueError("assemble_batch: empty index list");
  const std::size_t side = ds.target_side;
  const std::size_t c = static_cast<std::size_t>(ds.channels);
  Tensor batch(Shape{idx.size(), side, side, c});
  const std::size_t row = side * side * c;
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto fill = [&](std::size_t begin, std::size_t end) {
    try {
      for (std::size_t k = begin; k < end; ++k) {
        Tensor img = ds.get(idx[k]);
        if (aug) img = data::augment_sample(img, *aug, epoch, idx[k]);
        if (img.count() != row)
          throw ShapeError("assemble_batch: sample " + std::to_string(idx[k]) + " has shape " +
                           img.shape().str());
        std::copy(img.data().begin(), img.data().end(), batch.data().begin() + static_cast<std::ptrdiff_t>(k * row));
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mu);
      if (!failure) failure = std::current_exception();
    }
  };
  const int workers = std::min<int>(data_workers(), static_cast<int>(idx.size()));
  if (workers <= 1) {
    fill(0, idx.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (idx.size() + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
    for (int wkr = 0; wkr < workers; ++wkr) {
      const std::size_t begin = static_cast<std::size_t>(wkr) * chunk;
      const std::size_t end = std::min(idx.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back(fill, begin, end);
    }
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return batch;
}

inline std::vector<int> gather_labels(const data::DatasetIndex& ds, std::span<const std::size_t> idx) {
  std::vector<int> labels;
  labels.reserve(idx.size());
  for (std::size_t i : idx) labels.push_back(ds.label(i));
  return labels;
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::vector<double>> probs;  // per sample
  std::vector<int> labels;
  std::vector<int> predicted;
};

// Full eval-mode pass (running statistics, no dropout, no augmentation).
inline EvalResult evaluate(model::Model& m, const data::DatasetIndex& ds,
                           std::span<const std::size_t> indices, int batch_size) {
  EvalResult out;
  double loss_sum = 0.0;
  long correct = 0;
  for (std::size_t at = 0; at < indices.size(); at += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(indices.size(), at + static_cast<std::size_t>(batch_size));
    const std::span<const std::size_t> chunk = indices.subspan(at, end - at);
    Tensor batch = assemble_batch(ds, chunk, nullptr, 0);
    std::vector<int> labels = gather_labels(ds, chunk);
    model::ForwardOptions opt;
    opt.mode = nn::Mode::Eval;
    Tensor logits = model::forward(m.spec, m.params, batch, opt);
    auto r = nn::softmax_cross_entropy(logits, labels);
    loss_sum += static_cast<double>(r.loss[0]) * static_cast<double>(chunk.size());
    const std::size_t C = r.probs.extent(1);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::vector<double> row(C);
      int best = 0;
      for (std::size_t j = 0; j < C; ++j) {
        row[j] = r.probs[i * C + j];
        if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
      }
      out.probs.push_back(std::move(row));
      out.labels.push_back(labels[i]);
      out.predicted.push_back(best);
      if (best == labels[i]) ++correct;
    }
  }
  out.loss = indices.empty() ? 0.0 : loss_sum / static_cast<double>(indices.size());
  out.accuracy = indices.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(indices.size());
  return out;
}

// One model, one train/validation split. Per epoch: seeded shuffled batches,
// augmented train-mode forward, backward, Adam step; then an eval-mode pass
// over the validation set. Batch-norm running statistics update only during
// the training passes.
inline metrics::TrainingCurves train_model(model::Model& m, std::span<const std::size_t> train_idx,
                                           std::span<const std::size_t> val_idx,
                                           const data::DatasetIndex& ds,
                                           const data::AugmentConfig& aug, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ValueError("train_model: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ValueError("train_model: batch_size must be >= 1");
  for (std::size_t i : train_idx)
    for (std::size_t j : val_idx)
      if (i == j) throw ValueError("train_model: train and validation indices overlap at " + std::to_string(i));

  AdamState adam(cfg.adam);
  metrics::TrainingCurves curves;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto batches = data::make_batches(train_idx, static_cast<std::size_t>(cfg.batch_size),
                                      cfg.master_seed, epoch);
    double loss_sum = 0.0;
    long correct = 0, seen = 0;
    for (std::size_t step = 0; step < batches.size(); ++step) {
      const auto& batch_idx = batches[step];
      Tensor batch = assemble_batch(ds, batch_idx, &aug, epoch);
      std::vector<int> labels = gather_labels(ds, batch_idx);
      ad::Tape tape;
      model::ForwardOptions opt;
      opt.mode = nn::Mode::Train;
      opt.tape = &tape;
      opt.update_running_stats = true;
      opt.dropout_seed = derive_seed(cfg.master_seed, 0xd20ull, static_cast<std::uint64_t>(epoch),
                                     static_cast<std::uint64_t>(step));
      ad::Value logits = model::forward_value(m.spec, m.params, batch, opt);
      auto r = nn::softmax_cross_entropy(&tape, logits, labels);
      const float loss = r.loss.data[0];
      if (!std::isfinite(loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(step));
      tape.backward(r.loss.node);
      adam.step(m.params);
      m.params.zero_grads();

      loss_sum += static_cast<double>(loss) * static_cast<double>(batch_idx.size());
      const std::size_t C = r.probs.extent(1);
      for (std::size_t i = 0; i < batch_idx.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < C; ++j)
          if (r.probs[i * C + j] > r.probs[i * C + best]) best = j;
        if (static_cast<int>(best) == labels[i]) ++correct;
      }
      seen += static_cast<long>(batch_idx.size());
    }
    curves.train_loss.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
    curves.train_acc.push_back(seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0);
    if (!val_idx.empty()) {
      EvalResult val = evaluate(m, ds, val_idx, cfg.batch_size);
      curves.val_loss.push_back(val.loss);
      curves.val_acc.push_back(val.accuracy);
    }
  }
  return curves;
}

// Builds the per-fold metrics block from an evaluation pass. Binary tasks
// report the positive class (index 1); multiclass tasks macro-average.
inline metrics::FoldReport fold_report(int fold, const EvalResult& eval,
                                       const std::vector<std::string>& class_names,
                                       metrics::TrainingCurves curves) {
  metrics::FoldReport fr;
  fr.fold = fold;
  fr.curves = std::move(curves);
  const int C = static_cast<int>(class_names.size());
  fr.confusion = metrics::confusion_matrix(eval.labels, eval.predicted, C, class_names);
  fr.metrics.accuracy = metrics::accuracy(fr.confusion);
  metrics::Prf1 prf = C == 2 ? metrics::prf1(fr.confusion, 1) : metrics::prf1_macro(fr.confusion);
  fr.metrics.precision = prf.precision;
  fr.metrics.recall = prf.recall;
  fr.metrics.f1 = prf.f1;

  std::vector<bool> present(static_cast<std::size_t>(C), false);
  for (int l : eval.labels) present[static_cast<std::size_t>(l)] = true;
  std::size_t present_count = 0;
  for (bool b : present) present_count += b ? 1 : 0;
  if (present_count >= 2) {
    if (C == 2) {
      std::vector<double> scores;
      std::vector<int> binary;
      for (std::size_t i = 0; i < eval.labels.size(); ++i) {
        scores.push_back(eval.probs[i][1]);
        binary.push_back(eval.labels[i] == 1 ? 1 : 0);
      }
      fr.metrics.auc = metrics::roc_auc(scores, binary).auc;
    } else {
      fr.metrics.auc = metrics::multiclass_auc(eval.probs, eval.labels);
    }
    for (int cls = 0; cls < C; ++cls) {
      if (!present[static_cast<std::size_t>(cls)]) continue;
      std::vector<double> scores;
      std::vector<int> binary;
      for (std::size_t i = 0; i < eval.labels.size(); ++i) {
        scores.push_back(eval.probs[i][static_cast<std::size_t>(cls)]);
        binary.push_back(eval.labels[i] == cls ? 1 : 0);
      }
      fr.roc.emplace_back(class_names[static_cast<std::size_t>(cls)],
                          metrics::roc_auc(scores, binary).curve);
    }
  }
  return fr;
}

// K independent training-testing phases: fresh parameters per fold, training
// on the fold complement (with an inner validation split), evaluation on the
// held-out fold, and arithmetic-mean aggregation of fold metrics.
inline metrics::RunReport cross_validate(
    const std::function<model::Model(std::uint64_t fold_seed)>& builder,
    const data::DatasetIndex& ds, const data::FoldPlan& plan, const data::AugmentConfig& aug,
    const TrainConfig& cfg) {
  if (plan.assignments.size() != ds.size())
    throw ValueError("cross_validate: fold plan does not cover the dataset");
  metrics::RunReport report;
  report.dataset = ds.source;
  report.averaging = ds.class_count() == 2 ? "binary(positive=" + ds.classes[1] + ")" : "macro";
  for (int fold = 0; fold < plan.k; ++fold) {
    try {
      const auto test_idx = plan.test_indices(fold);
      const auto rest = plan.train_indices(fold);
      auto [train_idx, val_idx] = data::split_train_val(
          ds, rest, cfg.inner_val_fraction, derive_seed(cfg.master_seed, 0x1e7ull, static_cast<std::uint64_t>(fold)));
      for (std::size_t i : test_idx) {
        if (std::binary_search(train_idx.begin(), train_idx.end(), i) ||
            std::binary_search(val_idx.begin(), val_idx.end(), i))
          throw ValueError("test index " + std::to_string(i) + " leaked into training");
      }

      model::Model m = builder(derive_seed(cfg.master_seed, 0xf01d5ull, static_cast<std::uint64_t>(fold)));
      if (report.model.empty()) report.model = m.spec.name;

      TrainConfig fold_cfg = cfg;
      fold_cfg.master_seed = derive_seed(cfg.master_seed, 0x7a41ull, static_cast<std::uint64_t>(fold));
      data::AugmentConfig fold_aug = aug;
      fold_aug.master_seed = derive_seed(cfg.master_seed, 0xa06ull, static_cast<std::uint64_t>(fold));

      metrics::TrainingCurves curves = train_model(m, train_idx, val_idx, ds, fold_aug, fold_cfg);
      EvalResult eval = evaluate(m, ds, test_idx, cfg.batch_size);
      report.folds.push_back(fold_report(fold, eval, ds.classes, std::move(curves)));
    } catch (const NumericError& e) {
      throw NumericError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("fold " + std::to_string(fold) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("fold " + std::to_string(fold) + ": " + e.what());
    }
  }
  report.aggregate = metrics::aggregate_folds(report.folds);
  return report;
}

}  // namespace mpnet::train
