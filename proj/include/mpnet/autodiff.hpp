#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mpnet/rng.hpp"
#include "mpnet/tensor.hpp"

namespace mpnet::ad {

// Parameter or input with an accumulated gradient. grad always mirrors the
// value shape; a non-trainable (frozen) variable's grad stays identically
// zero no matter how many backward passes run.
class Variable {
 public:
  explicit Variable(Tensor value, bool trainable = true)
      : value(std::move(value)), grad(this->value.shape()), trainable(trainable) {}

  Tensor value;
  Tensor grad;
  bool trainable;
  bool grad_ready = false;  // set when backward deposits a gradient

  void zero_grad() {
    std::fill(grad.data().begin(), grad.data().end(), 0.0f);
    grad_ready = false;
  }
};

inline void zero_grads(std::span<Variable* const> vars) {
  for (Variable* v : vars) v->zero_grad();
}

using NodeId = std::size_t;
inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

class Tape;

// Result handle of a recorded (or untracked, when no tape is in play) op.
// Scalar-producing reductions also publish their double-precision
// accumulator; grad_check prefers it so finite differences are not limited
// by the float32 storage of the loss.
struct Value {
  Tensor data;
  NodeId node = kNoNode;
  std::optional<double> precise;
};

// One recorded operation. Inputs reference earlier nodes only, so the node
// list is topologically ordered by construction.
struct Node {
  Tensor value;
  std::vector<NodeId> inputs;
  bool requires_grad = false;
  Variable* leaf = nullptr;
  // Accumulates input gradients given the upstream gradient of this node.
  std::function<void(Tape&, const Tensor&)> backward;
  // Recomputes the recorded output from current input node values.
  std::function<Tensor(const Tape&)> replay;
};

class Tape {
 public:
  NodeId leaf(Variable& v) {
    Node n;
    n.value = v.value;
    n.requires_grad = v.trainable;
    n.leaf = &v;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId constant(Tensor t) {
    Node n;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId record(Tensor output, std::vector<NodeId> inputs,
                std::function<void(Tape&, const Tensor&)> backward,
                std::function<Tensor(const Tape&)> replay = {}) {
    bool rg = false;
    for (NodeId id : inputs) {
      if (id >= nodes_.size()) throw ValueError("tape: input node id out of range");
      rg = rg || nodes_[id].requires_grad;
    }
    Node n;
    n.value = std::move(output);
    n.inputs = std::move(inputs);
    n.requires_grad = rg;
    n.backward = std::move(backward);
    n.replay = std::move(replay);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_[id].value; }
  bool needs_grad(NodeId id) const { return nodes_[id].requires_grad; }

  // Called from backward closures to add a local gradient to an input node.
  void accumulate(NodeId id, const Tensor& g) {
    if (!nodes_[id].requires_grad) return;
    if (!grads_[id]) {
      grads_[id] = g;
    } else {
      add_into(*grads_[id], g);
    }
  }
  void accumulate(NodeId id, Tensor&& g) {
    if (!nodes_[id].requires_grad) return;
    if (!grads_[id]) {
      grads_[id] = std::move(g);
    } else {
      add_into(*grads_[id], g);
    }
  }

  const Tensor* gradient(NodeId id) const {
    return grads_.size() == nodes_.size() && grads_[id] ? &*grads_[id] : nullptr;
  }

  // Reverse sweep from the scalar loss node. Visits nodes in the fixed
  // reverse of recording order; trainable leaves collect into Variable::grad.
  void backward(NodeId loss) {
    if (loss >= nodes_.size()) throw ValueError("backward: dangling node id " + std::to_string(loss));
    if (nodes_[loss].value.count() != 1)
      throw ValueError("backward: loss must be scalar, got " + nodes_[loss].value.shape().str());
    grads_.assign(nodes_.size(), std::nullopt);
    grads_[loss] = Tensor::full(nodes_[loss].value.shape(), 1.0f);
    for (NodeId id = loss + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !grads_[id]) continue;
      if (n.leaf) {
        if (n.leaf->trainable) {
          add_into(n.leaf->grad, *grads_[id]);
          n.leaf->grad_ready = true;
        }
      } else if (n.backward) {
        n.backward(*this, *grads_[id]);
      }
    }
  }

  // Tape invariant: replaying every op on its recorded inputs reproduces the
  // recorded outputs bit-exactly.
  bool replay_verify() const {
    for (const Node& n : nodes_) {
      if (!n.replay) continue;
      Tensor again = n.replay(*this);
      if (!again.same_shape(n.value)) return false;
      for (std::size_t i = 0; i < again.count(); ++i) {
        if (std::bit_cast<std::uint32_t>(again[i]) != std::bit_cast<std::uint32_t>(n.value[i]))
          return false;
      }
    }
    return true;
  }

 private:
  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>> grads_;
};

// Convenience for op wrappers that also work untracked: lift a tensor into a
// Value on the given tape (or none).
inline Value make_value(Tape* tape, Tensor t, std::vector<NodeId> inputs,
                        std::function<void(Tape&, const Tensor&)> backward,
                        std::function<Tensor(const Tape&)> replay = {}) {
  if (!tape) return Value{std::move(t), kNoNode};
  NodeId id = tape->record(std::move(t), std::move(inputs), std::move(backward), std::move(replay));
  return Value{tape->value(id), id};
}

// ---- gradient checking ----

struct GradCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t coords_checked = 0;
  std::string worst;  // "name[i]: analytic vs numeric"
};

struct GradCheckOptions {
  double step = 1e-3;
  double tol = 1e-3;
  // When set, at most this many coordinates per variable are probed
  // (deterministic sample drawn from coord_seed); otherwise every coordinate.
  std::optional<std::size_t> max_coords_per_var;
  std::uint64_t coord_seed = 0;
};

// Central-difference check of d(loss)/d(vars) for a recorded scalar function.
// f must be deterministic: it is evaluated twice up front and must reproduce
// the same loss bit-exactly.
inline GradCheckReport grad_check(const std::function<Value(Tape&)>& f,
                                  std::span<const std::pair<std::string, Variable*>> vars,
                                  const GradCheckOptions& opt = {}) {
  if (opt.step <= 0) throw ValueError("grad_check: step must be > 0");

  auto eval = [&]() -> double {
    Tape t;
    Value v = f(t);
    if (v.data.count() != 1) throw ValueError("grad_check: function must return a scalar");
    return v.precise ? *v.precise : static_cast<double>(v.data[0]);
  };

  const double l0 = eval();
  const double l1 = eval();
  if (std::bit_cast<std::uint64_t>(l0) != std::bit_cast<std::uint64_t>(l1))
    throw NonDeterministicError("grad_check: two forward passes disagree (" +
                                std::to_string(l0) + " vs " + std::to_string(l1) + ")");

  for (auto& [name, v] : vars) v->zero_grad();
  {
    Tape t;
    Value loss = f(t);
    t.backward(loss.node);
  }

  GradCheckReport report;
  report.pass = true;
  for (auto& [name, var] : vars) {
    std::vector<std::size_t> coords;
    const std::size_t n = var->value.count();
    if (opt.max_coords_per_var && *opt.max_coords_per_var < n) {
      Rng rng(derive_seed(opt.coord_seed, hash_str(name)));
      std::vector<std::size_t> all(n);
      for (std::size_t i = 0; i < n; ++i) all[i] = i;
      rng.shuffle(all);
      coords.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(*opt.max_coords_per_var));
    } else {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    }
    for (std::size_t i : coords) {
      const float old = var->value[i];
      const float hi = old + static_cast<float>(opt.step);
      const float lo = old - static_cast<float>(opt.step);
      var->value[i] = hi;
      const double f_hi = eval();
      var->value[i] = lo;
      const double f_lo = eval();
      var->value[i] = old;
      const double numeric = (f_hi - f_lo) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double analytic = var->grad[i];
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      ++report.coords_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = name + "[" + std::to_string(i) + "]: " + std::to_string(analytic) +
                       " vs " + std::to_string(numeric);
      }
    }
  }
  report.pass = report.max_rel_error < opt.tol;
  return report;
}

}  // namespace mpnet::ad
