#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mpnet/autodiff.hpp"
#include "mpnet/ops.hpp"
#include "mpnet/rng.hpp"
#include "mpnet/tensor.hpp"

// Declarative layer DAGs for classic VGG19 and the multipath variant, plus
// the forward executor and a symbolic shape auditor. The multipath graph
// taps the feature maps after pooling blocks 2, 3 and 4, runs each through
// batch norm -> dropout -> global average pooling, and concatenates the
// three tap vectors with the pooled main path before the dense head.
namespace mpnet::model {

enum class LayerKind {
  Input,
  Conv,
  Relu,
  MaxPool,
  BatchNorm,
  Dropout,
  GlobalAvgPool,
  Dense,
  Concat,
};

struct LayerNode {
  std::string name;
  LayerKind kind = LayerKind::Input;
  std::vector<std::string> inputs;  // earlier node names, in declared order
  int out_channels = 0;             // Conv
  int units = 0;                    // Dense
  float rate = 0.0f;                // Dropout
  float momentum = 0.1f;            // BatchNorm
  float epsilon = 1e-5f;            // BatchNorm
  std::vector<std::string> params;  // parameter names owned by this node
};

struct ArchScale {
  std::array<int, 5> channels_per_block{64, 128, 256, 512, 512};
  std::array<int, 5> convs_per_block{2, 2, 4, 4, 4};
  int head_width = 2500;
  int input_side = 224;
  int channels_in = 3;
};

inline ArchScale full_scale() { return ArchScale{}; }

inline ArchScale mini_scale() {
  return ArchScale{{8, 16, 32, 64, 64}, {1, 1, 2, 2, 2}, 64, 32, 3};
}

struct GraphSpec {
  std::string name;
  int class_count = 0;
  ArchScale scale;
  std::string input;
  std::string output;
  std::vector<LayerNode> nodes;  // topological order by construction

  const LayerNode& node(const std::string& nm) const {
    for (const LayerNode& n : nodes)
      if (n.name == nm) return n;
    throw ValueError("graph " + name + ": no node named " + nm);
  }
};

struct BatchNormRunning {
  Tensor mean, var;
};

// Named parameters with per-parameter frozen flags plus batch-norm running
// statistics keyed by layer name. std::map keeps iteration order stable.
class ParamStore {
 public:
  ad::Variable& add(const std::string& name, Tensor value, bool trainable = true) {
    auto [it, fresh] = params_.try_emplace(name, ad::Variable(std::move(value), trainable));
    if (!fresh) throw ValueError("ParamStore: duplicate parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  ad::Variable& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValueError("ParamStore: unknown parameter " + name);
    return it->second;
  }
  const ad::Variable& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ValueError("ParamStore: unknown parameter " + name);
    return it->second;
  }

  std::map<std::string, ad::Variable>& all() { return params_; }
  const std::map<std::string, ad::Variable>& all() const { return params_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : params_) out.push_back(k);
    return out;
  }

  std::vector<ad::Variable*> trainable() {
    std::vector<ad::Variable*> out;
    for (auto& [k, v] : params_)
      if (v.trainable) out.push_back(&v);
    return out;
  }

  std::vector<std::string> trainable_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : params_)
      if (v.trainable) out.push_back(k);
    return out;
  }

  BatchNormRunning& bn(const std::string& layer) {
    auto it = bn_.find(layer);
    if (it == bn_.end()) throw ValueError("ParamStore: no batch-norm state for layer " + layer);
    return it->second;
  }
  const BatchNormRunning& bn(const std::string& layer) const {
    auto it = bn_.find(layer);
    if (it == bn_.end()) throw ValueError("ParamStore: no batch-norm state for layer " + layer);
    return it->second;
  }
  void add_bn(const std::string& layer, std::size_t channels) {
    bn_.emplace(layer, BatchNormRunning{Tensor(Shape{channels}),
                                        Tensor::full(Shape{channels}, 1.0f)});
  }
  std::map<std::string, BatchNormRunning>& bn_all() { return bn_; }
  const std::map<std::string, BatchNormRunning>& bn_all() const { return bn_; }

  void zero_grads() {
    for (auto& [k, v] : params_) v.zero_grad();
  }

 private:
  std::map<std::string, ad::Variable> params_;
  std::map<std::string, BatchNormRunning> bn_;
};

struct Model {
  GraphSpec spec;
  ParamStore params;
};

// ---- validation ----

// Checks the GraphSpec invariants: names resolve to earlier nodes only
// (acyclic by construction), one input, one output, all nodes reachable.
inline void validate(const GraphSpec& spec) {
  std::set<std::string> seen;
  std::size_t input_count = 0;
  for (const LayerNode& n : spec.nodes) {
    if (seen.count(n.name)) throw ValueError("graph " + spec.name + ": duplicate node " + n.name);
    if (n.kind == LayerKind::Input) {
      ++input_count;
      if (!n.inputs.empty()) throw ValueError("graph " + spec.name + ": input node with inputs");
    } else {
      if (n.inputs.empty()) throw ValueError("graph " + spec.name + ": node " + n.name + " has no inputs");
      for (const std::string& in : n.inputs)
        if (!seen.count(in))
          throw ValueError("graph " + spec.name + ": node " + n.name + " references " + in +
                           " before it is defined");
    }
    seen.insert(n.name);
  }
  if (input_count != 1) throw ValueError("graph " + spec.name + ": expected exactly one input node");
  if (!seen.count(spec.output)) throw ValueError("graph " + spec.name + ": output node missing");
  // reachability from the output backwards
  std::set<std::string> live{spec.output};
  for (std::size_t i = spec.nodes.size(); i-- > 0;) {
    const LayerNode& n = spec.nodes[i];
    if (!live.count(n.name)) continue;
    for (const std::string& in : n.inputs) live.insert(in);
  }
  for (const LayerNode& n : spec.nodes)
    if (!live.count(n.name))
      throw ValueError("graph " + spec.name + ": node " + n.name + " unreachable from output");
}

// ---- builders ----

namespace detail {

inline void check_scale(const ArchScale& s, int class_count) {
  if (class_count < 2) throw ValueError("class_count must be >= 2, got " + std::to_string(class_count));
  for (int c : s.channels_per_block)
    if (c < 1) throw ValueError("invalid scale: channel counts must be positive");
  for (int c : s.convs_per_block)
    if (c < 1) throw ValueError("invalid scale: conv counts must be positive");
  if (s.head_width < 1 || s.input_side < 1 || s.channels_in < 1)
    throw ValueError("invalid scale: head width, input side and input channels must be positive");
}

// Five conv blocks of 3x3 same-padding convs + ReLU, each closed by a 2x2
// max pool. Returns the names of the five pool outputs.
inline std::array<std::string, 5> add_backbone(GraphSpec& g, ParamStore& store,
                                               const ArchScale& scale) {
  std::string prev = g.input;
  std::array<std::string, 5> pools;
  int cin = scale.channels_in;
  for (int blk = 0; blk < 5; ++blk) {
    const int cout = scale.channels_per_block[static_cast<std::size_t>(blk)];
    for (int cv = 0; cv < scale.convs_per_block[static_cast<std::size_t>(blk)]; ++cv) {
      const std::string base = "b" + std::to_string(blk + 1) + "/c" + std::to_string(cv + 1);
      LayerNode conv;
      conv.name = base;
      conv.kind = LayerKind::Conv;
      conv.inputs = {prev};
      conv.out_channels = cout;
      conv.params = {base + "/w", base + "/b"};
      g.nodes.push_back(conv);
      store.add(base + "/w", Tensor(Shape{3, 3, static_cast<std::size_t>(cin), static_cast<std::size_t>(cout)}));
      store.add(base + "/b", Tensor(Shape{static_cast<std::size_t>(cout)}));
      LayerNode act;
      act.name = base + "/relu";
      act.kind = LayerKind::Relu;
      act.inputs = {base};
      g.nodes.push_back(act);
      prev = act.name;
      cin = cout;
    }
    LayerNode pool;
    pool.name = "b" + std::to_string(blk + 1) + "/pool";
    pool.kind = LayerKind::MaxPool;
    pool.inputs = {prev};
    g.nodes.push_back(pool);
    prev = pool.name;
    pools[static_cast<std::size_t>(blk)] = prev;
  }
  return pools;
}

inline void add_batchnorm(GraphSpec& g, ParamStore& store, const std::string& name,
                          const std::string& input, std::size_t channels) {
  LayerNode bn;
  bn.name = name;
  bn.kind = LayerKind::BatchNorm;
  bn.inputs = {input};
  bn.params = {name + "/gamma", name + "/beta"};
  g.nodes.push_back(bn);
  store.add(name + "/gamma", Tensor::full(Shape{channels}, 1.0f));
  store.add(name + "/beta", Tensor(Shape{channels}));
  store.add_bn(name, channels);
}

inline void add_head(GraphSpec& g, ParamStore& store, const std::string& input,
                     std::size_t in_width, const ArchScale& scale, int class_count) {
  const std::size_t head = static_cast<std::size_t>(scale.head_width);
  LayerNode fc;
  fc.name = "head/fc";
  fc.kind = LayerKind::Dense;
  fc.inputs = {input};
  fc.units = scale.head_width;
  fc.params = {"head/fc/w", "head/fc/b"};
  g.nodes.push_back(fc);
  store.add("head/fc/w", Tensor(Shape{in_width, head}));
  store.add("head/fc/b", Tensor(Shape{head}));

  add_batchnorm(g, store, "head/bn", "head/fc", head);

  LayerNode drop;
  drop.name = "head/drop";
  drop.kind = LayerKind::Dropout;
  drop.inputs = {"head/bn"};
  drop.rate = 0.5f;
  g.nodes.push_back(drop);

  LayerNode logits;
  logits.name = "head/logits";
  logits.kind = LayerKind::Dense;
  logits.inputs = {"head/drop"};
  logits.units = class_count;
  logits.params = {"head/logits/w", "head/logits/b"};
  g.nodes.push_back(logits);
  store.add("head/logits/w", Tensor(Shape{head, static_cast<std::size_t>(class_count)}));
  store.add("head/logits/b", Tensor(Shape{static_cast<std::size_t>(class_count)}));
}

}  // namespace detail

inline Model build_vgg19(const ArchScale& scale, int class_count) {
  detail::check_scale(scale, class_count);
  Model m;
  m.spec.name = "vgg19";
  m.spec.class_count = class_count;
  m.spec.scale = scale;
  m.spec.input = "input";
  LayerNode in;
  in.name = "input";
  in.kind = LayerKind::Input;
  m.spec.nodes.push_back(in);
  auto pools = detail::add_backbone(m.spec, m.params, scale);
  LayerNode gap;
  gap.name = "main/gap";
  gap.kind = LayerKind::GlobalAvgPool;
  gap.inputs = {pools[4]};
  m.spec.nodes.push_back(gap);
  detail::add_head(m.spec, m.params, "main/gap",
                   static_cast<std::size_t>(scale.channels_per_block[4]), scale, class_count);
  m.spec.output = "head/logits";
  validate(m.spec);
  return m;
}

inline Model build_mvgg19(const ArchScale& scale, int class_count) {
  detail::check_scale(scale, class_count);
  Model m;
  m.spec.name = "mvgg19";
  m.spec.class_count = class_count;
  m.spec.scale = scale;
  m.spec.input = "input";
  LayerNode in;
  in.name = "input";
  in.kind = LayerKind::Input;
  m.spec.nodes.push_back(in);
  auto pools = detail::add_backbone(m.spec, m.params, scale);

  // BD taps: batch norm -> dropout -> global average pooling after pools 2-4.
  std::vector<std::string> fused;
  for (int blk : {2, 3, 4}) {
    const std::string tap = "tap" + std::to_string(blk);
    const std::size_t ch = static_cast<std::size_t>(scale.channels_per_block[static_cast<std::size_t>(blk - 1)]);
    detail::add_batchnorm(m.spec, m.params, tap + "/bn", pools[static_cast<std::size_t>(blk - 1)], ch);
    LayerNode drop;
    drop.name = tap + "/drop";
    drop.kind = LayerKind::Dropout;
    drop.inputs = {tap + "/bn"};
    drop.rate = 0.5f;
    m.spec.nodes.push_back(drop);
    LayerNode gap;
    gap.name = tap + "/gap";
    gap.kind = LayerKind::GlobalAvgPool;
    gap.inputs = {tap + "/drop"};
    m.spec.nodes.push_back(gap);
    fused.push_back(gap.name);
  }

  LayerNode main_gap;
  main_gap.name = "main/gap";
  main_gap.kind = LayerKind::GlobalAvgPool;
  main_gap.inputs = {pools[4]};
  m.spec.nodes.push_back(main_gap);
  fused.push_back("main/gap");  // declared order: tap2, tap3, tap4, main

  LayerNode cat;
  cat.name = "fuse/concat";
  cat.kind = LayerKind::Concat;
  cat.inputs = fused;
  m.spec.nodes.push_back(cat);

  const std::size_t concat_width =
      static_cast<std::size_t>(scale.channels_per_block[1] + scale.channels_per_block[2] +
                               scale.channels_per_block[3] + scale.channels_per_block[4]);
  detail::add_head(m.spec, m.params, "fuse/concat", concat_width, scale, class_count);
  m.spec.output = "head/logits";
  validate(m.spec);
  return m;
}

// ---- initialization ----

// Glorot-uniform weights, zero biases, unit gamma / zero beta, running stats
// reset to (0, 1). Per-parameter seeds derive from the name, so the result
// does not depend on initialization order.
inline void initialize(ParamStore& store, std::uint64_t seed) {
  for (auto& [name, var] : store.all()) {
    Tensor& v = var.value;
    if (name.ends_with("/gamma")) {
      std::fill(v.data().begin(), v.data().end(), 1.0f);
    } else if (name.ends_with("/beta") || name.ends_with("/b")) {
      std::fill(v.data().begin(), v.data().end(), 0.0f);
    } else if (name.ends_with("/w")) {
      std::size_t fan_in, fan_out;
      if (v.rank() == 4) {  // kh x kw x cin x cout
        fan_in = v.extent(0) * v.extent(1) * v.extent(2);
        fan_out = v.extent(0) * v.extent(1) * v.extent(3);
      } else {  // din x dout
        fan_in = v.extent(0);
        fan_out = v.extent(1);
      }
      const float limit = std::sqrt(6.0f / static_cast<float>(fan_in + fan_out));
      Rng rng(derive_seed(seed, hash_str(name)));
      for (std::size_t i = 0; i < v.count(); ++i) v[i] = rng.uniform(-limit, limit);
    } else {
      throw ValueError("initialize: unrecognized parameter name " + name);
    }
    var.zero_grad();
  }
  for (auto& [layer, running] : store.bn_all()) {
    std::fill(running.mean.data().begin(), running.mean.data().end(), 0.0f);
    std::fill(running.var.data().begin(), running.var.data().end(), 1.0f);
  }
}

enum class FreezePolicy { Backbone, AllButLogits, None };

inline FreezePolicy freeze_policy_from_string(const std::string& s) {
  if (s == "backbone") return FreezePolicy::Backbone;
  if (s == "all_but_logits") return FreezePolicy::AllButLogits;
  if (s == "none") return FreezePolicy::None;
  throw ConfigError("unknown freeze_policy: " + s);
}

inline std::string to_string(FreezePolicy p) {
  switch (p) {
    case FreezePolicy::Backbone: return "backbone";
    case FreezePolicy::AllButLogits: return "all_but_logits";
    default: return "none";
  }
}

// Backbone policy freezes everything outside head/* (conv stacks and the BD
// tap batch norms); AllButLogits trains only the final dense layer.
inline void apply_freeze_policy(ParamStore& store, FreezePolicy policy) {
  for (auto& [name, var] : store.all()) {
    switch (policy) {
      case FreezePolicy::None: var.trainable = true; break;
      case FreezePolicy::Backbone: var.trainable = name.starts_with("head/"); break;
      case FreezePolicy::AllButLogits: var.trainable = name.starts_with("head/logits/"); break;
    }
  }
}

// ---- forward execution ----

struct ForwardOptions {
  nn::Mode mode = nn::Mode::Eval;
  ad::Tape* tape = nullptr;
  bool update_running_stats = false;  // only honored in train mode
  std::uint64_t dropout_seed = 0;     // per-layer seeds derive from this
  std::map<std::string, Tensor>* captured = nullptr;  // named activations, when instrumenting
};

inline ad::Value forward_value(const GraphSpec& spec, ParamStore& store, const Tensor& batch,
                               const ForwardOptions& opt) {
  if (batch.rank() != 4)
    throw ShapeError("forward: batch must be n x h x w x c, got " + batch.shape().str());
  ad::Tape* t = opt.tape;
  std::unordered_map<std::string, ad::Value> values;
  values.reserve(spec.nodes.size());
  auto param = [&](const std::string& name) -> ad::Value {
    ad::Variable& v = store.at(name);
    if (!t) return ad::Value{v.value, ad::kNoNode};
    return ad::Value{v.value, t->leaf(v)};
  };

  // consumer counts let the eval path drop dead activations early
  std::unordered_map<std::string, int> pending;
  for (const LayerNode& n : spec.nodes)
    for (const std::string& in : n.inputs) ++pending[in];
  ++pending[spec.output];

  auto take = [&](const std::string& name) -> const ad::Value& {
    auto it = values.find(name);
    if (it == values.end()) throw ValueError("forward: value for " + name + " not computed yet");
    return it->second;
  };
  auto release = [&](const LayerNode& n) {
    if (t) return;  // the tape owns forward values during training
    for (const std::string& in : n.inputs) {
      if (--pending[in] == 0) values.erase(in);
    }
  };

  for (const LayerNode& n : spec.nodes) {
    ad::Value out;
    switch (n.kind) {
      case LayerKind::Input: {
        if (batch.extent(3) != static_cast<std::size_t>(spec.scale.channels_in))
          throw ShapeError("forward: batch channels " + batch.shape().str() + " do not match model input of " +
                           std::to_string(spec.scale.channels_in));
        out = t ? ad::Value{batch, t->constant(batch)} : ad::Value{batch, ad::kNoNode};
        break;
      }
      case LayerKind::Conv: {
        try {
          out = nn::conv2d(t, take(n.inputs[0]), param(n.params[0]), param(n.params[1]), 1,
                           nn::Padding::Same);
        } catch (const ShapeError& e) {
          throw ShapeError("node " + n.name + ": " + e.what());
        }
        break;
      }
      case LayerKind::Relu: out = nn::relu(t, take(n.inputs[0])); break;
      case LayerKind::MaxPool: {
        try {
          out = nn::maxpool2d(t, take(n.inputs[0]));
        } catch (const ShapeError& e) {
          throw ShapeError("node " + n.name + ": " + e.what());
        }
        break;
      }
      case LayerKind::BatchNorm: {
        BatchNormRunning& running = store.bn(n.name);
        auto r = nn::batchnorm(t, take(n.inputs[0]), param(n.params[0]), param(n.params[1]),
                               running.mean, running.var, n.epsilon, opt.mode);
        if (opt.mode == nn::Mode::Train && opt.update_running_stats) {
          for (std::size_t ch = 0; ch < running.mean.count(); ++ch) {
            running.mean[ch] = (1.0f - n.momentum) * running.mean[ch] + n.momentum * r.batch_mean[ch];
            running.var[ch] = (1.0f - n.momentum) * running.var[ch] + n.momentum * r.batch_var[ch];
          }
        }
        out = std::move(r.y);
        break;
      }
      case LayerKind::Dropout: {
        out = nn::dropout(t, take(n.inputs[0]), n.rate, opt.mode,
                          derive_seed(opt.dropout_seed, hash_str(n.name)));
        break;
      }
      case LayerKind::GlobalAvgPool: out = nn::global_avg_pool(t, take(n.inputs[0])); break;
      case LayerKind::Dense: {
        try {
          out = nn::dense(t, take(n.inputs[0]), param(n.params[0]), param(n.params[1]));
        } catch (const ShapeError& e) {
          throw ShapeError("node " + n.name + ": " + e.what());
        }
        break;
      }
      case LayerKind::Concat: {
        std::vector<ad::Value> parts;
        parts.reserve(n.inputs.size());
        for (const std::string& in : n.inputs) parts.push_back(take(in));
        out = nn::concat(t, parts);
        break;
      }
    }
    if (opt.captured) opt.captured->insert_or_assign(n.name, out.data);
    values[n.name] = std::move(out);
    release(n);
  }
  return values.at(spec.output);
}

inline Tensor forward(const GraphSpec& spec, ParamStore& store, const Tensor& batch,
                      const ForwardOptions& opt = {}) {
  return forward_value(spec, store, batch, opt).data;
}

// ---- symbolic shape audit ----

struct NodeShape {
  std::string name;
  std::string kind;
  Shape shape;
  std::size_t param_count = 0;
  bool frozen = false;
  bool has_params = false;
};

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Input: return "input";
    case LayerKind::Conv: return "conv3x3";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool: return "maxpool2";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Concat: return "concat";
    case LayerKind::Dense: return "dense";
  }
  return "?";
}

// Propagates shapes without touching any data; throws the same shape errors
// forward would, but statically.
inline std::vector<NodeShape> shape_audit(const GraphSpec& spec, const ParamStore& store,
                                          std::size_t input_side) {
  std::unordered_map<std::string, Shape> shapes;
  std::vector<NodeShape> table;
  const std::size_t n = 1;
  for (const LayerNode& node : spec.nodes) {
    Shape out({1});
    switch (node.kind) {
      case LayerKind::Input:
        out = Shape{n, input_side, input_side, static_cast<std::size_t>(spec.scale.channels_in)};
        break;
      case LayerKind::Conv: {
        const Shape& in = shapes.at(node.inputs[0]);
        if (in.rank() != 4) throw ShapeError("node " + node.name + ": conv input must be rank 4, got " + in.str());
        out = Shape{in[0], in[1], in[2], static_cast<std::size_t>(node.out_channels)};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Dropout:
        out = shapes.at(node.inputs[0]);
        break;
      case LayerKind::BatchNorm:
        out = shapes.at(node.inputs[0]);
        break;
      case LayerKind::MaxPool: {
        const Shape& in = shapes.at(node.inputs[0]);
        if (in[1] < 2 || in[2] < 2)
          throw ShapeError("node " + node.name + ": spatial extent below 2 in " + in.str());
        out = Shape{in[0], in[1] / 2, in[2] / 2, in[3]};
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const Shape& in = shapes.at(node.inputs[0]);
        out = Shape{in[0], in[3]};
        break;
      }
      case LayerKind::Dense: {
        const Shape& in = shapes.at(node.inputs[0]);
        if (in.rank() != 2) throw ShapeError("node " + node.name + ": dense input must be rank 2, got " + in.str());
        const Shape& w = store.at(node.params[0]).value.shape();
        if (in[1] != w[0])
          throw ShapeError("node " + node.name + ": input width " + in.str() + " does not match weights " + w.str());
        out = Shape{in[0], static_cast<std::size_t>(node.units)};
        break;
      }
      case LayerKind::Concat: {
        std::size_t width = 0;
        for (const std::string& in : node.inputs) {
          const Shape& s = shapes.at(in);
          if (s.rank() != 2) throw ShapeError("node " + node.name + ": concat input " + in + " must be rank 2");
          width += s[1];
        }
        out = Shape{shapes.at(node.inputs[0])[0], width};
        break;
      }
    }
    shapes[node.name] = out;
    NodeShape row;
    row.name = node.name;
    row.kind = kind_name(node.kind);
    row.shape = out;
    for (const std::string& p : node.params) {
      row.param_count += store.at(p).value.count();
      row.has_params = true;
      row.frozen = row.frozen || !store.at(p).trainable;
    }
    table.push_back(std::move(row));
  }
  return table;
}

// Text table of the audit: node, kind, output shape, parameters, frozen flag.
inline std::string summary(const GraphSpec& spec, const ParamStore& store, std::size_t input_side) {
  auto table = shape_audit(spec, store, input_side);
  std::ostringstream os;
  os << spec.name << " @ input " << input_side << "x" << input_side << "x" << spec.scale.channels_in
     << ", " << spec.class_count << " classes\n";
  std::size_t total = 0, trainable_total = 0;
  os << "node              kind        output          params    frozen\n";
  for (const NodeShape& row : table) {
    os << row.name;
    for (std::size_t i = row.name.size(); i < 18; ++i) os << ' ';
    os << row.kind;
    for (std::size_t i = row.kind.size(); i < 12; ++i) os << ' ';
    std::string sh = row.shape.str();
    os << sh;
    for (std::size_t i = sh.size(); i < 16; ++i) os << ' ';
    os << row.param_count;
    for (std::size_t i = std::to_string(row.param_count).size(); i < 10; ++i) os << ' ';
    os << (row.has_params ? (row.frozen ? "yes" : "no") : "-") << "\n";
    total += row.param_count;
    if (row.has_params && !row.frozen) trainable_total += row.param_count;
  }
  os << "total parameters: " << total << " (" << trainable_total << " trainable)\n";
  return os.str();
}

}  // namespace mpnet::model
