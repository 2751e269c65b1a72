#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mpnet/autodiff.hpp"
#include "mpnet/rng.hpp"
#include "mpnet/tensor.hpp"

// Differentiable layer set for the VGG family: convolution, ReLU, max
// pooling, batch normalization, dropout, global average pooling, dense,
// concatenation and fused softmax cross-entropy. Each op exists as a pure
// kernel plus a tape wrapper; wrappers degrade to plain kernel calls when the
// tape pointer is null (eval path).
namespace mpnet::nn {

enum class Padding { Same, Valid };
enum class Mode { Train, Eval };

inline std::size_t same_pad(std::size_t kernel) { return (kernel - 1) / 2; }

// ---- conv2d ----

struct Conv2dParams {
  Tensor kernels;  // kh x kw x c_in x c_out
  Tensor bias;     // c_out
  int stride = 1;
  Padding padding = Padding::Same;
};

namespace detail {

inline void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be n x h x w x c, got " + x.shape().str());
  if (w.rank() != 4) throw ShapeError("conv2d: kernels must be kh x kw x c_in x c_out, got " + w.shape().str());
  if (x.extent(3) != w.extent(2))
    throw ShapeError("conv2d: input channels " + x.shape().str() + " do not match kernels " + w.shape().str());
  if (b.rank() != 1 || b.extent(0) != w.extent(3))
    throw ShapeError("conv2d: bias " + b.shape().str() + " must have one entry per output channel of " + w.shape().str());
}

inline Tensor slice_sample(const Tensor& x, std::size_t i) {
  const std::size_t h = x.extent(1), w = x.extent(2), c = x.extent(3);
  Tensor s(Shape{h, w, c});
  const float* src = x.data().data() + i * h * w * c;
  std::copy(src, src + h * w * c, s.data().begin());
  return s;
}

}  // namespace detail

// Cross-correlation (no kernel flip) with per-channel bias, lowered through
// im2col + matmul.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                     Padding padding) {
  detail::check_conv_shapes(x, w, b);
  const std::size_t n = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const std::size_t kh = w.extent(0), kw = w.extent(1), cin = w.extent(2), cout = w.extent(3);
  const std::size_t pad = padding == Padding::Same ? same_pad(kh) : 0;
  const auto [oh, ow] = conv_output_extents(h, wd, kh, kw, static_cast<std::size_t>(stride), pad);
  const Tensor w2 = w.reshaped(Shape{kh * kw * cin, cout});
  Tensor y(Shape{n, oh, ow, cout});
  for (std::size_t i = 0; i < n; ++i) {
    Tensor cols = im2col(detail::slice_sample(x, i), kh, kw, static_cast<std::size_t>(stride), pad);
    Tensor yi = matmul(cols, w2);
    float* dst = y.data().data() + i * oh * ow * cout;
    const float* src = yi.data().data();
    const float* pb = b.data().data();
    for (std::size_t p = 0; p < oh * ow; ++p)
      for (std::size_t c = 0; c < cout; ++c) dst[p * cout + c] = src[p * cout + c] + pb[c];
  }
  return y;
}

inline Tensor conv2d(const Tensor& x, const Conv2dParams& p) {
  return conv2d(x, p.kernels, p.bias, p.stride, p.padding);
}

struct Conv2dGrads {
  Tensor dx, dw, db;
};

inline Conv2dGrads conv2d_vjp(const Tensor& dy, const Tensor& x, const Tensor& w, int stride,
                              Padding padding, bool want_dx) {
  const std::size_t n = x.extent(0), h = x.extent(1), wd = x.extent(2);
  const std::size_t kh = w.extent(0), kw = w.extent(1), cin = w.extent(2), cout = w.extent(3);
  const std::size_t pad = padding == Padding::Same ? same_pad(kh) : 0;
  const auto [oh, ow] = conv_output_extents(h, wd, kh, kw, static_cast<std::size_t>(stride), pad);
  Conv2dGrads g{want_dx ? Tensor(x.shape()) : Tensor(), Tensor(Shape{kh * kw * cin, cout}),
                Tensor(Shape{cout})};
  Tensor w2t = transpose2d(w.reshaped(Shape{kh * kw * cin, cout}));
  for (std::size_t i = 0; i < n; ++i) {
    Tensor dyi(Shape{oh * ow, cout});
    std::copy(dy.data().data() + i * oh * ow * cout, dy.data().data() + (i + 1) * oh * ow * cout,
              dyi.data().begin());
    Tensor cols = im2col(detail::slice_sample(x, i), kh, kw, static_cast<std::size_t>(stride), pad);
    add_into(g.dw, matmul(transpose2d(cols), dyi));
    if (want_dx) {
      Tensor dcols = matmul(dyi, w2t);
      Tensor dxi = col2im(dcols, h, wd, cin, kh, kw, static_cast<std::size_t>(stride), pad);
      std::copy(dxi.data().begin(), dxi.data().end(), g.dx.data().begin() + i * h * wd * cin);
    }
    for (std::size_t p = 0; p < oh * ow; ++p)
      for (std::size_t c = 0; c < cout; ++c) g.db[c] += dyi[p * cout + c];
  }
  g.dw = g.dw.reshaped(w.shape());
  return g;
}

inline ad::Value conv2d(ad::Tape* t, const ad::Value& x, const ad::Value& w, const ad::Value& b,
                        int stride, Padding padding) {
  Tensor y = conv2d(x.data, w.data, b.data, stride, padding);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId xi = x.node, wi = w.node, bi = b.node;
  return ad::make_value(
      t, std::move(y), {xi, wi, bi},
      [=](ad::Tape& tape, const Tensor& dy) {
        auto g = conv2d_vjp(dy, tape.value(xi), tape.value(wi), stride, padding, tape.needs_grad(xi));
        if (tape.needs_grad(xi)) tape.accumulate(xi, std::move(g.dx));
        tape.accumulate(wi, std::move(g.dw));
        tape.accumulate(bi, std::move(g.db));
      },
      [=](const ad::Tape& tape) {
        return conv2d(tape.value(xi), tape.value(wi), tape.value(bi), stride, padding);
      });
}

// ---- relu ----

inline Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.count(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return y;
}

inline ad::Value relu(ad::Tape* t, const ad::Value& x) {
  Tensor y = relu(x.data);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId xi = x.node;
  return ad::make_value(
      t, std::move(y), {xi},
      [=](ad::Tape& tape, const Tensor& dy) {
        const Tensor& xin = tape.value(xi);
        Tensor dx(xin.shape());
        // subgradient 0 at x == 0
        for (std::size_t i = 0; i < dx.count(); ++i) dx[i] = xin[i] > 0.0f ? dy[i] : 0.0f;
        tape.accumulate(xi, std::move(dx));
      },
      [=](const ad::Tape& tape) { return relu(tape.value(xi)); });
}

// ---- max pooling (2x2 window, stride 2, floor semantics) ----

struct MaxPoolResult {
  Tensor y;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

inline MaxPoolResult maxpool2d_with_argmax(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("maxpool2d: input must be n x h x w x c, got " + x.shape().str());
  const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), c = x.extent(3);
  if (h < 2 || w < 2)
    throw ShapeError("maxpool2d: spatial extents must be >= 2, got " + x.shape().str());
  const std::size_t oh = h / 2, ow = w / 2;
  MaxPoolResult r{Tensor(Shape{n, oh, ow, c}), {}};
  r.argmax.resize(n * oh * ow * c);
  const float* src = x.data().data();
  float* dst = r.y.data().data();
  std::size_t out = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch, ++out) {
          float best = -std::numeric_limits<float>::infinity();
          std::size_t best_off = 0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t off = ((i * h + (oy * 2 + dy)) * w + (ox * 2 + dx)) * c + ch;
              if (src[off] > best) {  // first maximal element wins ties
                best = src[off];
                best_off = off;
              }
            }
          }
          dst[out] = best;
          r.argmax[out] = best_off;
        }
      }
    }
  }
  return r;
}

inline Tensor maxpool2d(const Tensor& x) { return maxpool2d_with_argmax(x).y; }

inline ad::Value maxpool2d(ad::Tape* t, const ad::Value& x) {
  MaxPoolResult r = maxpool2d_with_argmax(x.data);
  if (!t) return {std::move(r.y), ad::kNoNode};
  const ad::NodeId xi = x.node;
  auto argmax = std::make_shared<std::vector<std::size_t>>(std::move(r.argmax));
  return ad::make_value(
      t, std::move(r.y), {xi},
      [=](ad::Tape& tape, const Tensor& dy) {
        Tensor dx(tape.value(xi).shape());
        for (std::size_t o = 0; o < dy.count(); ++o) dx[(*argmax)[o]] += dy[o];
        tape.accumulate(xi, std::move(dx));
      },
      [=](const ad::Tape& tape) { return maxpool2d(tape.value(xi)); });
}

// ---- batch normalization ----

// Normalizes over all axes except the last (channel) axis. Accepts n x c and
// n x h x w x c inputs.
struct BatchNormState {
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  float momentum = 0.1f;
  float epsilon = 1e-5f;
  Mode mode = Mode::Train;

  explicit BatchNormState(std::size_t channels)
      : gamma(Tensor::full(Shape{channels}, 1.0f)),
        beta(Shape{channels}),
        running_mean(Shape{channels}),
        running_var(Tensor::full(Shape{channels}, 1.0f)) {}
};

namespace detail {

struct BnDims {
  std::size_t groups;    // batch elements per channel
  std::size_t channels;
};

inline BnDims bn_dims(const Tensor& x) {
  if (x.rank() != 2 && x.rank() != 4)
    throw ShapeError("batchnorm: input must be n x c or n x h x w x c, got " + x.shape().str());
  const std::size_t c = x.extent(x.rank() - 1);
  return {x.count() / c, c};
}

struct BnStats {
  Tensor mean, var;  // per channel, biased variance
};

inline BnStats bn_batch_stats(const Tensor& x) {
  const auto [groups, c] = bn_dims(x);
  std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
  const float* src = x.data().data();
  for (std::size_t i = 0; i < x.count(); ++i) {
    const std::size_t ch = i % c;
    sum[ch] += src[i];
    sumsq[ch] += static_cast<double>(src[i]) * src[i];
  }
  BnStats s{Tensor(Shape{c}), Tensor(Shape{c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double m = sum[ch] / static_cast<double>(groups);
    s.mean[ch] = static_cast<float>(m);
    s.var[ch] = static_cast<float>(std::max(0.0, sumsq[ch] / static_cast<double>(groups) - m * m));
  }
  return s;
}

inline Tensor bn_apply(const Tensor& x, const Tensor& mean, const Tensor& var,
                       const Tensor& gamma, const Tensor& beta, float eps) {
  const auto [groups, c] = bn_dims(x);
  (void)groups;
  if (gamma.count() != c || beta.count() != c || mean.count() != c || var.count() != c)
    throw ShapeError("batchnorm: parameter length does not match channels of " + x.shape().str());
  std::vector<float> scale(c), shiftv(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float inv = 1.0f / std::sqrt(var[ch] + eps);
    scale[ch] = gamma[ch] * inv;
    shiftv[ch] = beta[ch] - mean[ch] * scale[ch];
  }
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.count(); ++i) {
    const std::size_t ch = i % c;
    y[i] = x[i] * scale[ch] + shiftv[ch];
  }
  return y;
}

}  // namespace detail

struct BatchNormTrainResult {
  Tensor y;
  Tensor batch_mean, batch_var;
};

inline BatchNormTrainResult batchnorm_train(const Tensor& x, const Tensor& gamma,
                                            const Tensor& beta, float eps) {
  const auto [groups, c] = detail::bn_dims(x);
  (void)c;
  if (groups < 2)
    throw ValueError("batchnorm: train mode needs at least 2 elements per channel, got " +
                     x.shape().str());
  auto stats = detail::bn_batch_stats(x);
  Tensor y = detail::bn_apply(x, stats.mean, stats.var, gamma, beta, eps);
  return {std::move(y), std::move(stats.mean), std::move(stats.var)};
}

inline Tensor batchnorm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                             const Tensor& running_mean, const Tensor& running_var, float eps) {
  return detail::bn_apply(x, running_mean, running_var, gamma, beta, eps);
}

// Spec-facing op: in train mode also folds the batch statistics into the
// running estimates (running <- (1-momentum)*running + momentum*batch).
inline Tensor batchnorm2d(const Tensor& x, BatchNormState& s) {
  if (s.mode == Mode::Eval)
    return batchnorm_eval(x, s.gamma, s.beta, s.running_mean, s.running_var, s.epsilon);
  auto r = batchnorm_train(x, s.gamma, s.beta, s.epsilon);
  for (std::size_t ch = 0; ch < s.running_mean.count(); ++ch) {
    s.running_mean[ch] = (1.0f - s.momentum) * s.running_mean[ch] + s.momentum * r.batch_mean[ch];
    s.running_var[ch] = (1.0f - s.momentum) * s.running_var[ch] + s.momentum * r.batch_var[ch];
  }
  return std::move(r.y);
}

struct BatchNormRecorded {
  ad::Value y;
  Tensor batch_mean, batch_var;  // empty in eval mode
};

inline BatchNormRecorded batchnorm(ad::Tape* t, const ad::Value& x, const ad::Value& gamma,
                                   const ad::Value& beta, const Tensor& running_mean,
                                   const Tensor& running_var, float eps, Mode mode) {
  if (mode == Mode::Eval) {
    Tensor y = batchnorm_eval(x.data, gamma.data, beta.data, running_mean, running_var, eps);
    if (!t) return {{std::move(y), ad::kNoNode}, {}, {}};
    const ad::NodeId xi = x.node, gi = gamma.node, bi = beta.node;
    const Tensor rm = running_mean, rv = running_var;
    ad::Value v = ad::make_value(
        t, std::move(y), {xi, gi, bi},
        [=](ad::Tape& tape, const Tensor& dy) {
          const Tensor& xin = tape.value(xi);
          const auto [groups, c] = detail::bn_dims(xin);
          (void)groups;
          const Tensor& g = tape.value(gi);
          Tensor dx(xin.shape());
          Tensor dgamma(Shape{c}), dbeta(Shape{c});
          std::vector<float> inv(c);
          for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = 1.0f / std::sqrt(rv[ch] + eps);
          for (std::size_t i = 0; i < xin.count(); ++i) {
            const std::size_t ch = i % c;
            const float xhat = (xin[i] - rm[ch]) * inv[ch];
            dgamma[ch] += dy[i] * xhat;
            dbeta[ch] += dy[i];
            dx[i] = dy[i] * g[ch] * inv[ch];
          }
          tape.accumulate(xi, std::move(dx));
          tape.accumulate(gi, std::move(dgamma));
          tape.accumulate(bi, std::move(dbeta));
        },
        [=](const ad::Tape& tape) {
          return batchnorm_eval(tape.value(xi), tape.value(gi), tape.value(bi), rm, rv, eps);
        });
    return {std::move(v), {}, {}};
  }

  auto r = batchnorm_train(x.data, gamma.data, beta.data, eps);
  if (!t) return {{std::move(r.y), ad::kNoNode}, std::move(r.batch_mean), std::move(r.batch_var)};
  const ad::NodeId xi = x.node, gi = gamma.node, bi = beta.node;
  const Tensor mean = r.batch_mean, var = r.batch_var;
  ad::Value v = ad::make_value(
      t, std::move(r.y), {xi, gi, bi},
      [=](ad::Tape& tape, const Tensor& dy) {
        const Tensor& xin = tape.value(xi);
        const auto [groups, c] = detail::bn_dims(xin);
        const Tensor& g = tape.value(gi);
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        std::vector<float> inv(c);
        for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = 1.0f / std::sqrt(var[ch] + eps);
        for (std::size_t i = 0; i < xin.count(); ++i) {
          const std::size_t ch = i % c;
          const float xhat = (xin[i] - mean[ch]) * inv[ch];
          sum_dy[ch] += dy[i];
          sum_dy_xhat[ch] += static_cast<double>(dy[i]) * xhat;
        }
        Tensor dgamma(Shape{c}), dbeta(Shape{c});
        for (std::size_t ch = 0; ch < c; ++ch) {
          dgamma[ch] = static_cast<float>(sum_dy_xhat[ch]);
          dbeta[ch] = static_cast<float>(sum_dy[ch]);
        }
        if (tape.needs_grad(xi)) {
          Tensor dx(xin.shape());
          const double n = static_cast<double>(groups);
          for (std::size_t i = 0; i < xin.count(); ++i) {
            const std::size_t ch = i % c;
            const float xhat = (xin[i] - mean[ch]) * inv[ch];
            dx[i] = static_cast<float>(
                (g[ch] * inv[ch]) *
                (dy[i] - sum_dy[ch] / n - xhat * (sum_dy_xhat[ch] / n)));
          }
          tape.accumulate(xi, std::move(dx));
        }
        tape.accumulate(gi, std::move(dgamma));
        tape.accumulate(bi, std::move(dbeta));
      },
      [=](const ad::Tape& tape) {
        return batchnorm_train(tape.value(xi), tape.value(gi), tape.value(bi), eps).y;
      });
  return {std::move(v), std::move(mean), std::move(var)};
}

// ---- dropout (inverted scaling) ----

struct DropoutState {
  float rate = 0.5f;
  Mode mode = Mode::Train;
  std::uint64_t rng_seed = 0;
};

inline Tensor dropout_mask(const Shape& shape, float rate, std::uint64_t seed) {
  if (rate < 0.0f || rate >= 1.0f)
    throw ValueError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  Tensor mask(shape);
  Rng rng(seed);
  const float keep_scale = 1.0f / (1.0f - rate);
  for (std::size_t i = 0; i < mask.count(); ++i)
    mask[i] = rng.uniform() >= rate ? keep_scale : 0.0f;
  return mask;
}

inline Tensor dropout(const Tensor& x, const DropoutState& s) {
  if (s.rate < 0.0f || s.rate >= 1.0f)
    throw ValueError("dropout: rate must be in [0,1), got " + std::to_string(s.rate));
  if (s.mode == Mode::Eval || s.rate == 0.0f) return x;
  return mul(x, dropout_mask(x.shape(), s.rate, s.rng_seed));
}

inline ad::Value dropout(ad::Tape* t, const ad::Value& x, float rate, Mode mode,
                         std::uint64_t seed) {
  if (rate < 0.0f || rate >= 1.0f)
    throw ValueError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0f) {
    if (!t) return {x.data, ad::kNoNode};
    const ad::NodeId xi = x.node;
    return ad::make_value(
        t, x.data, {xi},
        [=](ad::Tape& tape, const Tensor& dy) { tape.accumulate(xi, dy); },
        [=](const ad::Tape& tape) { return tape.value(xi); });
  }
  Tensor mask = dropout_mask(x.data.shape(), rate, seed);
  Tensor y = mul(x.data, mask);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId xi = x.node;
  auto m = std::make_shared<Tensor>(std::move(mask));
  return ad::make_value(
      t, std::move(y), {xi},
      [=](ad::Tape& tape, const Tensor& dy) { tape.accumulate(xi, mul(dy, *m)); },
      [=](const ad::Tape& tape) { return mul(tape.value(xi), *m); });
}

// ---- global average pooling ----

inline Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool: input must be n x h x w x c, got " + x.shape().str());
  return reduce_mean(x, {1, 2});
}

inline ad::Value global_avg_pool(ad::Tape* t, const ad::Value& x) {
  Tensor y = global_avg_pool(x.data);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId xi = x.node;
  return ad::make_value(
      t, std::move(y), {xi},
      [=](ad::Tape& tape, const Tensor& dy) {
        const Tensor& xin = tape.value(xi);
        const std::size_t n = xin.extent(0), h = xin.extent(1), w = xin.extent(2), c = xin.extent(3);
        const float inv = 1.0f / static_cast<float>(h * w);
        Tensor dx(xin.shape());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < h * w; ++p)
            for (std::size_t ch = 0; ch < c; ++ch)
              dx[(i * h * w + p) * c + ch] = dy[i * c + ch] * inv;
        tape.accumulate(xi, std::move(dx));
      },
      [=](const ad::Tape& tape) { return global_avg_pool(tape.value(xi)); });
}

// ---- dense ----

inline Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw ShapeError("dense: expects n x d_in and d_in x d_out, got " + x.shape().str() + " and " + w.shape().str());
  if (x.extent(1) != w.extent(0))
    throw ShapeError("dense: input width " + x.shape().str() + " does not match weights " + w.shape().str());
  if (b.rank() != 1 || b.extent(0) != w.extent(1))
    throw ShapeError("dense: bias " + b.shape().str() + " does not match weights " + w.shape().str());
  Tensor y = matmul(x, w);
  const std::size_t n = y.extent(0), d = y.extent(1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += b[j];
  return y;
}

inline ad::Value dense(ad::Tape* t, const ad::Value& x, const ad::Value& w, const ad::Value& b) {
  Tensor y = dense(x.data, w.data, b.data);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId xi = x.node, wi = w.node, bi = b.node;
  return ad::make_value(
      t, std::move(y), {xi, wi, bi},
      [=](ad::Tape& tape, const Tensor& dy) {
        const Tensor& xin = tape.value(xi);
        const Tensor& win = tape.value(wi);
        if (tape.needs_grad(xi)) tape.accumulate(xi, matmul(dy, transpose2d(win)));
        tape.accumulate(wi, matmul(transpose2d(xin), dy));
        const std::size_t n = dy.extent(0), d = dy.extent(1);
        Tensor db(Shape{d});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
        tape.accumulate(bi, std::move(db));
      },
      [=](const ad::Tape& tape) { return dense(tape.value(xi), tape.value(wi), tape.value(bi)); });
}

// ---- concat along the feature axis of rank-2 tensors ----

inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat: empty part list");
  const std::size_t n = parts[0].extent(0);
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2) throw ShapeError("concat: parts must be rank-2, got " + p.shape().str());
    if (p.extent(0) != n)
      throw ShapeError("concat: batch extents disagree: " + parts[0].shape().str() + " vs " + p.shape().str());
    total += p.extent(1);
  }
  Tensor y(Shape{n, total});
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const std::size_t d = p.extent(1);
    for (std::size_t i = 0; i < n; ++i)
      std::copy(p.data().data() + i * d, p.data().data() + (i + 1) * d,
                y.data().data() + i * total + off);
    off += d;
  }
  return y;
}

// Slices columns [off, off+d) back out; used by the gradient and by tests of
// the concat/split round trip.
inline Tensor slice_cols(const Tensor& x, std::size_t off, std::size_t d) {
  const std::size_t n = x.extent(0), total = x.extent(1);
  if (off + d > total) throw ShapeError("slice_cols: range exceeds " + x.shape().str());
  Tensor y(Shape{n, d});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(x.data().data() + i * total + off, x.data().data() + i * total + off + d,
              y.data().data() + i * d);
  return y;
}

inline ad::Value concat(ad::Tape* t, const std::vector<ad::Value>& parts) {
  std::vector<Tensor> tensors;
  tensors.reserve(parts.size());
  for (const auto& p : parts) tensors.push_back(p.data);
  Tensor y = concat(tensors);
  if (!t) return {std::move(y), ad::kNoNode};
  std::vector<ad::NodeId> ids;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    ids.push_back(p.node);
    widths.push_back(p.data.extent(1));
  }
  return ad::make_value(
      t, std::move(y), ids,
      [=](ad::Tape& tape, const Tensor& dy) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          tape.accumulate(ids[k], slice_cols(dy, off, widths[k]));
          off += widths[k];
        }
      },
      [=](const ad::Tape& tape) {
        std::vector<Tensor> ps;
        for (ad::NodeId id : ids) ps.push_back(tape.value(id));
        return concat(ps);
      });
}

// ---- fused softmax + cross-entropy ----

struct SoftmaxXentResult {
  Tensor loss;   // scalar, mean over the batch
  Tensor probs;  // n x C, row-stochastic
  double loss_precise = 0.0;
};

inline SoftmaxXentResult softmax_cross_entropy(const Tensor& logits,
                                               const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be n x C, got " + logits.shape().str());
  const std::size_t n = logits.extent(0), C = logits.extent(1);
  if (C < 2) throw ValueError("softmax_cross_entropy: need at least 2 classes");
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  Tensor probs(logits.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= C)
      throw ValueError("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0," + std::to_string(C) + ")");
    const float* row = logits.data().data() + i * C;
    float mx = row[0];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < C; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    for (std::size_t j = 0; j < C; ++j)
      probs[i * C + j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / denom);
    // -log p[label] = log(sum exp) - (logit - max)
    loss += std::log(denom) - (static_cast<double>(row[label]) - mx);
  }
  const double mean_loss = loss / static_cast<double>(n);
  return {Tensor::scalar(static_cast<float>(mean_loss)), std::move(probs), mean_loss};
}

struct SoftmaxXentRecorded {
  ad::Value loss;
  Tensor probs;
};

inline SoftmaxXentRecorded softmax_cross_entropy(ad::Tape* t, const ad::Value& logits,
                                                 const std::vector<int>& labels) {
  SoftmaxXentResult r = softmax_cross_entropy(logits.data, labels);
  if (!t) return {{std::move(r.loss), ad::kNoNode, r.loss_precise}, std::move(r.probs)};
  const ad::NodeId li = logits.node;
  auto probs = std::make_shared<Tensor>(std::move(r.probs));
  auto labs = std::make_shared<std::vector<int>>(labels);
  ad::Value loss = ad::make_value(
      t, std::move(r.loss), {li},
      [=](ad::Tape& tape, const Tensor& dy) {
        const std::size_t n = probs->extent(0), C = probs->extent(1);
        const float s = dy[0] / static_cast<float>(n);
        Tensor dl(probs->shape());
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < C; ++j)
            dl[i * C + j] = ((*probs)[i * C + j] - (static_cast<std::size_t>((*labs)[i]) == j ? 1.0f : 0.0f)) * s;
        tape.accumulate(li, std::move(dl));
      },
      [=](const ad::Tape& tape) { return softmax_cross_entropy(tape.value(li), *labs).loss; });
  loss.precise = r.loss_precise;
  return {std::move(loss), *probs};
}

// ---- small arithmetic wrappers used by tests and loss plumbing ----

inline ad::Value vadd(ad::Tape* t, const ad::Value& a, const ad::Value& b) {
  Tensor y = add(a.data, b.data);
  std::optional<double> precise;
  if (a.precise && b.precise && y.count() == 1) precise = *a.precise + *b.precise;
  if (!t) return {std::move(y), ad::kNoNode, precise};
  const ad::NodeId ai = a.node, bi = b.node;
  ad::Value v = ad::make_value(
      t, std::move(y), {ai, bi},
      [=](ad::Tape& tape, const Tensor& dy) {
        tape.accumulate(ai, dy);
        tape.accumulate(bi, dy);
      },
      [=](const ad::Tape& tape) { return add(tape.value(ai), tape.value(bi)); });
  v.precise = precise;
  return v;
}

inline ad::Value vmul(ad::Tape* t, const ad::Value& a, const ad::Value& b) {
  Tensor y = mul(a.data, b.data);
  if (!t) return {std::move(y), ad::kNoNode};
  const ad::NodeId ai = a.node, bi = b.node;
  return ad::make_value(
      t, std::move(y), {ai, bi},
      [=](ad::Tape& tape, const Tensor& dy) {
        tape.accumulate(ai, mul(dy, tape.value(bi)));
        tape.accumulate(bi, mul(dy, tape.value(ai)));
      },
      [=](const ad::Tape& tape) { return mul(tape.value(ai), tape.value(bi)); });
}

inline ad::Value vsum(ad::Tape* t, const ad::Value& a) {
  const double acc = sum_double(a.data);
  Tensor y = Tensor::scalar(static_cast<float>(acc));
  if (!t) return {std::move(y), ad::kNoNode, acc};
  const ad::NodeId ai = a.node;
  ad::Value v = ad::make_value(
      t, std::move(y), {ai},
      [=](ad::Tape& tape, const Tensor& dy) {
        tape.accumulate(ai, Tensor::full(tape.value(ai).shape(), dy[0]));
      },
      [=](const ad::Tape& tape) {
        return Tensor::scalar(static_cast<float>(sum_double(tape.value(ai))));
      });
  v.precise = acc;
  return v;
}

inline ad::Value vscale(ad::Tape* t, const ad::Value& a, float s) {
  Tensor y = scale(a.data, s);
  std::optional<double> precise;
  if (a.precise) precise = *a.precise * static_cast<double>(s);
  if (!t) return {std::move(y), ad::kNoNode, precise};
  const ad::NodeId ai = a.node;
  ad::Value v = ad::make_value(
      t, std::move(y), {ai},
      [=](ad::Tape& tape, const Tensor& dy) { tape.accumulate(ai, scale(dy, s)); },
      [=](const ad::Tape& tape) { return scale(tape.value(ai), s); });
  v.precise = precise;
  return v;
}

}  // namespace mpnet::nn
