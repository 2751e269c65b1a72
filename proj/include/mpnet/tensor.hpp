#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mpnet/error.hpp"

namespace mpnet {

// Ordered list of positive extents, rank 1..4. Layout convention for rank-4
// data is batch x height x width x channels, row-major.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }

  std::size_t rank() const { return dims_.size(); }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  const std::vector<std::size_t>& dims() const { return dims_; }

  std::size_t count() const {
    std::size_t n = 1;
    for (std::size_t d : dims_) n *= d;
    return n;
  }

  // Row-major strides in elements.
  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(rank(), 1);
    for (std::size_t i = rank(); i-- > 1;) s[i - 1] = s[i] * dims_[i];
    return s;
  }

  std::size_t offset(std::span<const std::size_t> idx) const {
    if (idx.size() != rank()) throw ShapeError("index rank " + std::to_string(idx.size()) + " vs shape " + str());
    std::size_t off = 0, stride = 1;
    for (std::size_t i = rank(); i-- > 0;) {
      if (idx[i] >= dims_[i]) throw ShapeError("index out of range in " + str());
      off += idx[i] * stride;
      stride *= dims_[i];
    }
    return off;
  }

  std::vector<std::size_t> unflatten(std::size_t off) const {
    std::vector<std::size_t> idx(rank());
    for (std::size_t i = rank(); i-- > 0;) {
      idx[i] = off % dims_[i];
      off /= dims_[i];
    }
    return idx;
  }

  bool operator==(const Shape& o) const { return dims_ == o.dims_; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "x" : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  void validate() const {
    if (dims_.empty() || dims_.size() > 4)
      throw ShapeError("shape rank must be 1..4, got " + std::to_string(dims_.size()));
    for (std::size_t d : dims_)
      if (d == 0) throw ShapeError("zero extent in shape");
  }

  std::vector<std::size_t> dims_;
};

// Dense 32-bit-float array. Value type: copies copy the data, operations on
// tensors never mutate their inputs.
class Tensor {
 public:
  Tensor() : shape_({1}), data_(1, 0.0f) {}
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(std::move(shape)), data_(shape_.count(), fill) {}
  Tensor(Shape shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.count())
      throw ShapeError("data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_.str());
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, float v) { return Tensor(std::move(s), v); }
  static Tensor scalar(float v) { return Tensor(Shape{1}, {v}); }
  static Tensor identity(std::size_t n) {
    Tensor t(Shape{n, n});
    for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0f;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t count() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_[axis]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  float at(std::initializer_list<std::size_t> idx) const {
    return data_[shape_.offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
  }
  float& at(std::initializer_list<std::size_t> idx) {
    return data_[shape_.offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (float v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  Tensor reshaped(Shape s) const {
    if (s.count() != count())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    return Tensor(std::move(s), data_);
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shapes " + a.shape().str() + " vs " + b.shape().str());
}

// ---- element-wise helpers ----

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.count(); ++i) out[i] = a[i] + b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.count(); ++i) out[i] = a[i] - b[i];
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.count(); ++i) out[i] = a[i] * b[i];
  return out;
}

inline Tensor scale(const Tensor& a, float s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.count(); ++i) out[i] = a[i] * s;
  return out;
}

inline void add_into(Tensor& acc, const Tensor& g) {
  check_same_shape(acc, g, "add_into");
  float* a = acc.data().data();
  const float* b = g.data().data();
  for (std::size_t i = 0; i < acc.count(); ++i) a[i] += b[i];
}

inline double sum_double(const Tensor& a) {
  double s = 0.0;  // fixed left-to-right order
  for (float v : a.data()) s += v;
  return s;
}

// ---- matmul ----

// c[i,j] = sum_t a[i,t] * b[t,j]; the k loop is outermost of the inner pair so
// every output element accumulates in increasing-k order (deterministic).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 operands, got " + a.shape().str() + " and " + b.shape().str());
  const std::size_t m = a.extent(0), k = a.extent(1), k2 = b.extent(0), n = b.extent(1);
  if (k != k2)
    throw ShapeError("matmul inner extents disagree: " + a.shape().str() + " vs " + b.shape().str());
  Tensor c(Shape{m, n});
  const float* pa = a.data().data();
  const float* pb = b.data().data();
  float* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    float* crow = pc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const float av = pa[i * k + t];
      if (av == 0.0f) continue;
      const float* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

inline Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d expects rank-2, got " + a.shape().str());
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor t(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = a[i * n + j];
  return t;
}

// ---- spatial primitives (h x w x c single image) ----

inline Tensor pad2d(const Tensor& x, std::size_t p) {
  if (x.rank() != 3) throw ShapeError("pad2d expects h x w x c, got " + x.shape().str());
  if (p == 0) return x;
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor out(Shape{h + 2 * p, w + 2 * p, c});
  for (std::size_t y = 0; y < h; ++y) {
    const float* src = x.data().data() + y * w * c;
    float* dst = out.data().data() + ((y + p) * (w + 2 * p) + p) * c;
    std::copy(src, src + w * c, dst);
  }
  return out;
}

struct ConvGeometry {
  std::size_t oh, ow;
};

inline ConvGeometry conv_output_extents(std::size_t h, std::size_t w, std::size_t kh,
                                        std::size_t kw, std::size_t stride, std::size_t pad) {
  const std::ptrdiff_t oh = (static_cast<std::ptrdiff_t>(h + 2 * pad) - static_cast<std::ptrdiff_t>(kh)) / static_cast<std::ptrdiff_t>(stride) + 1;
  const std::ptrdiff_t ow = (static_cast<std::ptrdiff_t>(w + 2 * pad) - static_cast<std::ptrdiff_t>(kw)) / static_cast<std::ptrdiff_t>(stride) + 1;
  if (oh < 1 || ow < 1)
    throw ShapeError("convolution output would be empty: input " + std::to_string(h) + "x" +
                     std::to_string(w) + ", kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     ", stride " + std::to_string(stride) + ", pad " + std::to_string(pad));
  return {static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)};
}

// Lower one image to patch rows: row r holds the receptive field of output
// position r, columns ordered (ky, kx, channel) row-major, zero padded.
inline Tensor im2col(const Tensor& x, std::size_t kh, std::size_t kw, std::size_t stride,
                     std::size_t pad) {
  if (x.rank() != 3) throw ShapeError("im2col expects h x w x c, got " + x.shape().str());
  if (kh < 1 || kw < 1 || stride < 1) throw ValueError("im2col: kernel and stride must be >= 1");
  const std::size_t h = x.extent(0), w = x.extent(1), c = x.extent(2);
  const auto [oh, ow] = conv_output_extents(h, w, kh, kw, stride, pad);
  Tensor cols(Shape{oh * ow, kh * kw * c});
  const float* src = x.data().data();
  float* dst = cols.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      float* row = dst + (oy * ow + ox) * kh * kw * c;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          float* cell = row + (ky * kw + kx) * c;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) {
            std::fill(cell, cell + c, 0.0f);
          } else {
            const float* pix = src + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
            std::copy(pix, pix + c, cell);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-add patch rows back into an h x w x c image.
inline Tensor col2im(const Tensor& cols, std::size_t h, std::size_t w, std::size_t c,
                     std::size_t kh, std::size_t kw, std::size_t stride, std::size_t pad) {
  const auto [oh, ow] = conv_output_extents(h, w, kh, kw, stride, pad);
  if (cols.rank() != 2 || cols.extent(0) != oh * ow || cols.extent(1) != kh * kw * c)
    throw ShapeError("col2im: cols shape " + cols.shape().str() + " does not match geometry");
  Tensor img(Shape{h, w, c});
  const float* src = cols.data().data();
  float* dst = img.data().data();
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      const float* row = src + (oy * ow + ox) * kh * kw * c;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const float* cell = row + (ky * kw + kx) * c;
          float* pix = dst + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          for (std::size_t ci = 0; ci < c; ++ci) pix[ci] += cell[ci];
        }
      }
    }
  }
  return img;
}

// Mean over the named axes, remaining axes preserved in order. Accumulates in
// double, left to right.
inline Tensor reduce_mean(const Tensor& x, const std::vector<std::size_t>& axes) {
  const std::size_t r = x.rank();
  std::vector<bool> reduce(r, false);
  for (std::size_t a : axes) {
    if (a >= r) throw ValueError("reduce_mean: axis " + std::to_string(a) + " invalid for " + x.shape().str());
    reduce[a] = true;
  }
  std::vector<std::size_t> out_dims;
  std::size_t reduced_count = 1;
  for (std::size_t i = 0; i < r; ++i) {
    if (reduce[i]) reduced_count *= x.extent(i);
    else out_dims.push_back(x.extent(i));
  }
  if (out_dims.empty()) out_dims.push_back(1);
  Shape out_shape(out_dims);
  std::vector<double> acc(out_shape.count(), 0.0);

  const auto in_strides = x.shape().strides();
  const float* src = x.data().data();
  for (std::size_t off = 0; off < x.count(); ++off) {
    std::size_t out_off = 0;
    std::size_t rem = off;
    std::size_t stride = 1;
    // compute the output offset by dropping reduced axes
    for (std::size_t i = r; i-- > 0;) {
      const std::size_t coord = (rem / in_strides[i]) % x.extent(i);
      if (!reduce[i]) {
        out_off += coord * stride;
        stride *= x.extent(i);
      }
    }
    acc[out_off] += src[off];
  }
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(reduced_count);
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
  return out;
}

}  // namespace mpnet
