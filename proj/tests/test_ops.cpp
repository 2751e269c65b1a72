#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mpnet/autodiff.hpp"
#include "mpnet/ops.hpp"
#include "mpnet/rng.hpp"

using namespace mpnet;
using ad::Tape;
using ad::Value;
using ad::Variable;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.count(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values kept away from zero and from each other, for kink-free relu/pool
// gradient probes.
Tensor spread_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.count(); ++i) {
    const float mag = rng.uniform(0.1f, 1.0f) + 0.011f * static_cast<float>(i % 37);
    t[i] = rng.bernoulli(0.5) ? mag : -mag;
  }
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.count(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  return true;
}

// Direct nested-loop convolution over a batch; the conv2d oracle.
Tensor direct_conv2d(const Tensor& x, const Tensor& k, const Tensor& b, std::size_t pad) {
  const std::size_t n = x.extent(0), h = x.extent(1), w = x.extent(2), cin = x.extent(3);
  const std::size_t kh = k.extent(0), kw = k.extent(1), cout = k.extent(3);
  const std::size_t oh = h + 2 * pad - kh + 1, ow = w + 2 * pad - kw + 1;
  Tensor y(Shape{n, oh, ow, cout});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t co = 0; co < cout; ++co) {
          double acc = b[co];
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx)
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) - static_cast<std::ptrdiff_t>(pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) - static_cast<std::ptrdiff_t>(pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                  continue;
                acc += static_cast<double>(x.at({i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix), ci})) *
                       static_cast<double>(k.at({ky, kx, ci, co}));
              }
          y.at({i, oy, ox, co}) = static_cast<float>(acc);
        }
  return y;
}

using VarList = std::vector<std::pair<std::string, Variable*>>;

// Adds 3 * sum(input) per input to the check loss. Every coordinate then has
// a gradient of magnitude >= 1, which keeps float32 forward noise (about 1e-4
// on the difference quotient) well below the 1e-3 relative tolerance without
// diluting errors in the op's own gradient rule.
Value anchored(Tape& t, Value op_loss, const std::vector<Value>& inputs) {
  Value total = std::move(op_loss);
  for (const Value& v : inputs)
    total = nn::vadd(&t, total, nn::vscale(&t, nn::vsum(&t, v), 3.0f));
  return total;
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Rng rng(101);
  Tensor x = random_tensor(Shape{2, 5, 5, 3}, rng);
  Tensor k = Tensor::zeros(Shape{3, 3, 3, 3});
  for (std::size_t c = 0; c < 3; ++c) k.at({1, 1, c, c}) = 1.0f;  // centered delta per channel
  Tensor y = nn::conv2d(x, k, Tensor(Shape{3}), 1, nn::Padding::Same);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.count(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d zero kernels emit the bias") {
  Rng rng(103);
  Tensor x = random_tensor(Shape{1, 4, 4, 2}, rng);
  Tensor k = Tensor::zeros(Shape{3, 3, 2, 2});
  Tensor b(Shape{2}, {0.5f, -1.5f});
  Tensor y = nn::conv2d(x, k, b, 1, nn::Padding::Same);
  for (std::size_t p = 0; p < 16; ++p) {
    CHECK(y[p * 2] == 0.5f);
    CHECK(y[p * 2 + 1] == -1.5f);
  }
}

TEST_CASE("conv2d valid 2x2 all-ones") {
  Tensor x = Tensor::full(Shape{1, 2, 2, 1}, 1.0f);
  Tensor k = Tensor::full(Shape{2, 2, 1, 1}, 1.0f);
  Tensor y = nn::conv2d(x, k, Tensor(Shape{1}), 1, nn::Padding::Valid);
  REQUIRE(y.shape() == Shape{1, 1, 1, 1});
  CHECK(y[0] == 4.0f);
}

TEST_CASE("conv2d matches the direct nested-loop oracle within 1e-5") {
  Rng rng(107);
  for (int trial = 0; trial < 3; ++trial) {
    Tensor x = random_tensor(Shape{2, 8, 8, 3}, rng);
    Tensor k = random_tensor(Shape{3, 3, 3, 4}, rng);
    Tensor b = random_tensor(Shape{4}, rng);
    Tensor got = nn::conv2d(x, k, b, 1, nn::Padding::Same);
    Tensor want = direct_conv2d(x, k, b, 1);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.count(); ++i) {
      const float denom = std::max({std::abs(want[i]), std::abs(got[i]), 1.0f});
      CHECK(std::abs(got[i] - want[i]) / denom < 1e-5f);
    }
  }
}

TEST_CASE("conv2d channel mismatch error") {
  Tensor x(Shape{1, 4, 4, 2});
  Tensor k(Shape{3, 3, 3, 4});
  CHECK_THROWS_AS(nn::conv2d(x, k, Tensor(Shape{4}), 1, nn::Padding::Same), ShapeError);
}

TEST_CASE("relu") {
  Tensor x(Shape{3}, {-1.0f, 0.0f, 2.0f});
  Tensor y = nn::relu(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);
  Rng rng(109);
  Tensor r = random_tensor(Shape{4, 4}, rng);
  CHECK(bit_equal(nn::relu(nn::relu(r)), nn::relu(r)));
  Tensor nonneg = random_tensor(Shape{4, 4}, rng, 0.0f, 1.0f);
  CHECK(bit_equal(nn::relu(nonneg), nonneg));
}

TEST_CASE("maxpool2d") {
  SECTION("window maximum") {
    Tensor x(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
    Tensor y = nn::maxpool2d(x);
    REQUIRE(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y[0] == 4.0f);
  }
  SECTION("constant input halves extents") {
    Tensor x = Tensor::full(Shape{1, 6, 4, 2}, 3.25f);
    Tensor y = nn::maxpool2d(x);
    REQUIRE(y.shape() == Shape{1, 3, 2, 2});
    for (std::size_t i = 0; i < y.count(); ++i) CHECK(y[i] == 3.25f);
  }
  SECTION("floor semantics drop the trailing row/column") {
    Tensor x(Shape{1, 5, 3, 1});
    Tensor y = nn::maxpool2d(x);
    CHECK(y.shape() == Shape{1, 2, 1, 1});
  }
  SECTION("the 300-pixel pooling chain") {
    std::size_t side = 300;
    const std::size_t expected[] = {150, 75, 37, 18, 9};
    Tensor x = Tensor::full(Shape{1, side, side, 1}, 1.0f);
    for (std::size_t stage = 0; stage < 5; ++stage) {
      x = nn::maxpool2d(x);
      CHECK(x.extent(1) == expected[stage]);
      CHECK(x.extent(2) == expected[stage]);
    }
  }
  SECTION("too-small input") {
    Tensor x(Shape{1, 1, 4, 1});
    CHECK_THROWS_AS(nn::maxpool2d(x), ShapeError);
  }
}

TEST_CASE("batchnorm") {
  SECTION("constant per channel collapses to zero") {
    Tensor x = Tensor::full(Shape{4, 3}, 2.0f);
    auto r = nn::batchnorm_train(x, Tensor::full(Shape{3}, 1.0f), Tensor(Shape{3}), 1e-5f);
    for (std::size_t i = 0; i < r.y.count(); ++i) CHECK(std::abs(r.y[i]) <= 1e-6f);
  }
  SECTION("plus/minus one batch hits the closed form") {
    // (x - 0) / sqrt(1 + 1e-5) = +/- 0.99999500...
    Tensor x(Shape{4, 1}, {-1, 1, -1, 1});
    auto r = nn::batchnorm_train(x, Tensor::full(Shape{1}, 1.0f), Tensor(Shape{1}), 1e-5f);
    const float expected = 1.0f / std::sqrt(1.0f + 1e-5f);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(std::abs(std::abs(r.y[i]) - expected) < 1e-6f);
      CHECK((x[i] < 0) == (r.y[i] < 0));
    }
    CHECK(r.batch_mean[0] == 0.0f);
    CHECK(r.batch_var[0] == 1.0f);
  }
  SECTION("eval with unit running stats and eps 0 is the identity") {
    Rng rng(113);
    Tensor x = random_tensor(Shape{2, 3, 3, 2}, rng);
    Tensor y = nn::batchnorm_eval(x, Tensor::full(Shape{2}, 1.0f), Tensor(Shape{2}),
                                  Tensor(Shape{2}), Tensor::full(Shape{2}, 1.0f), 0.0f);
    for (std::size_t i = 0; i < x.count(); ++i) CHECK(y[i] == Catch::Approx(x[i]).margin(1e-7));
  }
  SECTION("train mode normalizes: per-channel mean < 1e-5, variance near 1") {
    Rng rng(127);
    Tensor x = random_tensor(Shape{8, 4, 4, 3}, rng, -2.0f, 5.0f);
    auto r = nn::batchnorm_train(x, Tensor::full(Shape{3}, 1.0f), Tensor(Shape{3}), 1e-8f);
    const std::size_t c = 3, groups = x.count() / c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mean = 0.0, var = 0.0;
      for (std::size_t g = 0; g < groups; ++g) mean += r.y[g * c + ch];
      mean /= static_cast<double>(groups);
      for (std::size_t g = 0; g < groups; ++g) {
        const double d = r.y[g * c + ch] - mean;
        var += d * d;
      }
      var /= static_cast<double>(groups);
      CHECK(std::abs(mean) < 1e-5);
      CHECK(std::abs(var - 1.0) < 1e-3);
    }
  }
  SECTION("running statistics update with momentum") {
    Tensor x(Shape{4, 1}, {-1, 1, -1, 1});
    nn::BatchNormState s(1);
    s.momentum = 0.1f;
    s.mode = nn::Mode::Train;
    nn::batchnorm2d(x, s);
    CHECK(s.running_mean[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(s.running_var[0] == Catch::Approx(0.9f * 1.0f + 0.1f * 1.0f));
    s.mode = nn::Mode::Eval;
    nn::batchnorm2d(x, s);  // eval mode leaves stats untouched
    CHECK(s.running_var[0] == Catch::Approx(1.0f));
  }
  SECTION("degenerate train batch") {
    Tensor x(Shape{1, 3});
    CHECK_THROWS_AS(nn::batchnorm_train(x, Tensor::full(Shape{3}, 1.0f), Tensor(Shape{3}), 1e-5f),
                    ValueError);
  }
}

TEST_CASE("dropout") {
  Rng rng(131);
  Tensor x = random_tensor(Shape{4, 8}, rng, 0.0f, 1.0f);
  SECTION("rate 0 is the identity in both modes") {
    nn::DropoutState s{0.0f, nn::Mode::Train, 7};
    CHECK(bit_equal(nn::dropout(x, s), x));
    s.mode = nn::Mode::Eval;
    CHECK(bit_equal(nn::dropout(x, s), x));
  }
  SECTION("eval mode is the identity at rate 0.5") {
    nn::DropoutState s{0.5f, nn::Mode::Eval, 7};
    CHECK(bit_equal(nn::dropout(x, s), x));
  }
  SECTION("train mode equals the seeded Bernoulli mask oracle") {
    nn::DropoutState s{0.5f, nn::Mode::Train, 1234};
    Tensor y = nn::dropout(x, s);
    Rng oracle(1234);
    for (std::size_t i = 0; i < x.count(); ++i) {
      const float mask = oracle.uniform() >= 0.5 ? 2.0f : 0.0f;
      CHECK(y[i] == x[i] * mask);
    }
  }
  SECTION("train-mode expectation stays within 2% of identity") {
    Tensor ones = Tensor::full(Shape{8}, 1.0f);
    std::vector<double> acc(8, 0.0);
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
      nn::DropoutState s{0.5f, nn::Mode::Train, derive_seed(999, static_cast<std::uint64_t>(t))};
      Tensor y = nn::dropout(ones, s);
      for (std::size_t i = 0; i < 8; ++i) acc[i] += y[i];
    }
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(std::abs(acc[i] / trials - 1.0) < 0.02);
  }
  SECTION("invalid rate") {
    nn::DropoutState s{1.0f, nn::Mode::Train, 0};
    CHECK_THROWS_AS(nn::dropout(x, s), ValueError);
  }
}

TEST_CASE("global average pooling") {
  SECTION("arithmetic sequence mean") {
    Tensor x(Shape{1, 2, 2, 1}, {1, 3, 5, 7});
    Tensor y = nn::global_avg_pool(x);
    REQUIRE(y.shape() == Shape{1, 1});
    CHECK(y[0] == 4.0f);
  }
  SECTION("9x9x512 map flattens to a 512 vector per sample") {
    Tensor x = Tensor::full(Shape{2, 9, 9, 512}, 0.25f);
    Tensor y = nn::global_avg_pool(x);
    REQUIRE(y.shape() == Shape{2, 512});
    CHECK(y[0] == 0.25f);
  }
  SECTION("permuting spatial positions leaves the output unchanged") {
    Rng rng(137);
    Tensor x = random_tensor(Shape{1, 3, 3, 2}, rng);
    Tensor y = nn::global_avg_pool(x);
    Tensor rolled(x.shape());
    for (std::size_t p = 0; p < 9; ++p)
      for (std::size_t c = 0; c < 2; ++c) rolled[((p + 1) % 9) * 2 + c] = x[p * 2 + c];
    Tensor y2 = nn::global_avg_pool(rolled);
    for (std::size_t i = 0; i < y.count(); ++i) CHECK(y[i] == Catch::Approx(y2[i]).margin(1e-7));
  }
}

TEST_CASE("dense") {
  SECTION("identity weights") {
    Rng rng(139);
    Tensor x = random_tensor(Shape{3, 4}, rng);
    Tensor y = nn::dense(x, Tensor::identity(4), Tensor(Shape{4}));
    CHECK(bit_equal(y, x));
  }
  SECTION("zero weights emit the bias") {
    Tensor x(Shape{2, 3});
    Tensor b(Shape{2}, {1.5f, -2.0f});
    Tensor y = nn::dense(x, Tensor::zeros(Shape{3, 2}), b);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(y.at({i, 0}) == 1.5f);
      CHECK(y.at({i, 1}) == -2.0f);
    }
  }
  SECTION("hand arithmetic") {
    Tensor x(Shape{1, 2}, {1, 2});
    Tensor w(Shape{2, 2}, {1, 0, 0, 2});
    Tensor b(Shape{2}, {1, 1});
    Tensor y = nn::dense(x, w, b);
    CHECK(y[0] == 2.0f);
    CHECK(y[1] == 5.0f);
  }
  SECTION("shape mismatch") {
    CHECK_THROWS_AS(nn::dense(Tensor(Shape{1, 3}), Tensor(Shape{2, 2}), Tensor(Shape{2})), ShapeError);
  }
}

TEST_CASE("concat") {
  Rng rng(149);
  SECTION("single part unchanged") {
    Tensor x = random_tensor(Shape{3, 4}, rng);
    CHECK(bit_equal(nn::concat({x}), x));
  }
  SECTION("two copies double the width") {
    Tensor x = random_tensor(Shape{2, 3}, rng);
    Tensor y = nn::concat({x, x});
    REQUIRE(y.shape() == Shape{2, 6});
    CHECK(bit_equal(nn::slice_cols(y, 0, 3), x));
    CHECK(bit_equal(nn::slice_cols(y, 3, 3), x));
  }
  SECTION("the multipath tap widths sum to 1408") {
    Tensor t2(Shape{1, 128}), t3(Shape{1, 256}), t4(Shape{1, 512}), main(Shape{1, 512});
    Tensor y = nn::concat({t2, t3, t4, main});
    CHECK(y.shape() == Shape{1, 1408});
  }
  SECTION("concat then split reconstructs the parts exactly") {
    std::vector<Tensor> parts;
    std::vector<std::size_t> widths{2, 5, 3};
    for (std::size_t w : widths) parts.push_back(random_tensor(Shape{4, w}, rng));
    Tensor y = nn::concat(parts);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      CHECK(bit_equal(nn::slice_cols(y, off, widths[k]), parts[k]));
      off += widths[k];
    }
  }
  SECTION("errors") {
    CHECK_THROWS_AS(nn::concat(std::vector<Tensor>{}), ValueError);
    CHECK_THROWS_AS(nn::concat({Tensor(Shape{2, 3}), Tensor(Shape{3, 3})}), ShapeError);
  }
}

TEST_CASE("softmax cross-entropy") {
  SECTION("symmetric logits") {
    auto r = nn::softmax_cross_entropy(Tensor(Shape{1, 2}), {0});
    CHECK(r.probs[0] == Catch::Approx(0.5).margin(1e-7));
    CHECK(r.probs[1] == Catch::Approx(0.5).margin(1e-7));
  }
  SECTION("closed form for logits [0, ln 3]") {
    Tensor logits(Shape{1, 2}, {0.0f, std::log(3.0f)});
    auto r = nn::softmax_cross_entropy(logits, {1});
    CHECK(r.probs[0] == Catch::Approx(0.25).margin(1e-6));
    CHECK(r.probs[1] == Catch::Approx(0.75).margin(1e-6));
  }
  SECTION("uniform probabilities cost ln C") {
    for (std::size_t C : {std::size_t{2}, std::size_t{5}, std::size_t{10}}) {
      Tensor logits(Shape{3, C});
      std::vector<int> labels{0, static_cast<int>(C - 1), 1};
      auto r = nn::softmax_cross_entropy(logits, labels);
      CHECK(r.loss[0] == Catch::Approx(std::log(static_cast<double>(C))).margin(1e-6));
    }
  }
  SECTION("rows sum to one and shifts cancel") {
    Rng rng(151);
    Tensor logits = random_tensor(Shape{4, 6}, rng, -5.0f, 5.0f);
    std::vector<int> labels{0, 1, 2, 3};
    auto r1 = nn::softmax_cross_entropy(logits, labels);
    for (std::size_t i = 0; i < 4; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 6; ++j) row += r1.probs[i * 6 + j];
      CHECK(std::abs(row - 1.0) < 1e-6);
    }
    Tensor shifted = logits;
    for (std::size_t i = 0; i < shifted.count(); ++i) shifted[i] += 12.5f;
    auto r2 = nn::softmax_cross_entropy(shifted, labels);
    for (std::size_t i = 0; i < r1.probs.count(); ++i)
      CHECK(std::abs(r1.probs[i] - r2.probs[i]) < 1e-6f);
  }
  SECTION("label out of range") {
    CHECK_THROWS_AS(nn::softmax_cross_entropy(Tensor(Shape{1, 3}), {3}), ValueError);
    CHECK_THROWS_AS(nn::softmax_cross_entropy(Tensor(Shape{1, 3}), {-1}), ValueError);
  }
}

// Gradient checks: every differentiable op against central differences.
TEST_CASE("per-op gradient checks at tol 1e-3") {
  Rng rng(157);

  SECTION("conv2d") {
    Variable x(spread_tensor(Shape{1, 4, 4, 2}, rng));
    Variable w(random_tensor(Shape{3, 3, 2, 3}, rng, -0.5f, 0.5f));
    Variable b(random_tensor(Shape{3}, rng));
    VarList vars{{"x", &x}, {"w", &w}, {"b", &b}};
    auto f = [&](Tape& t) {
      Value vx{x.value, t.leaf(x)}, vw{w.value, t.leaf(w)}, vb{b.value, t.leaf(b)};
      Value y = nn::conv2d(&t, vx, vw, vb, 1, nn::Padding::Same);
      return anchored(t, nn::vsum(&t, y), {vx, vw, vb});
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("relu") {
    Variable x(spread_tensor(Shape{2, 4, 4, 2}, rng));
    VarList vars{{"x", &x}};
    auto f = [&](Tape& t) { return nn::vsum(&t, nn::relu(&t, {x.value, t.leaf(x)})); };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("maxpool2d") {
    Variable x(spread_tensor(Shape{1, 4, 4, 3}, rng));
    VarList vars{{"x", &x}};
    auto f = [&](Tape& t) { return nn::vsum(&t, nn::maxpool2d(&t, {x.value, t.leaf(x)})); };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("batchnorm train mode") {
    Variable x(random_tensor(Shape{4, 3, 3, 2}, rng));
    Variable gamma(random_tensor(Shape{2}, rng, 0.5f, 1.5f));
    Variable beta(random_tensor(Shape{2}, rng));
    VarList vars{{"x", &x}, {"gamma", &gamma}, {"beta", &beta}};
    auto f = [&](Tape& t) {
      Value vx{x.value, t.leaf(x)}, vg{gamma.value, t.leaf(gamma)}, vb{beta.value, t.leaf(beta)};
      auto r = nn::batchnorm(&t, vx, vg, vb, Tensor(Shape{2}), Tensor::full(Shape{2}, 1.0f),
                             1e-5f, nn::Mode::Train);
      // weight the outputs so the loss is not mean/variance invariant
      Tensor weights(r.y.data.shape());
      Rng wr(7333);
      for (std::size_t i = 0; i < weights.count(); ++i) weights[i] = wr.uniform(-1.0f, 1.0f);
      Value wconst{weights, t.constant(weights)};
      return anchored(t, nn::vsum(&t, nn::vmul(&t, r.y, wconst)), {vx, vg, vb});
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("dropout with pinned mask") {
    Variable x(spread_tensor(Shape{4, 8}, rng));
    VarList vars{{"x", &x}};
    auto f = [&](Tape& t) {
      return nn::vsum(&t, nn::dropout(&t, {x.value, t.leaf(x)}, 0.5f, nn::Mode::Train, 4242));
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("global_avg_pool") {
    Variable x(random_tensor(Shape{2, 3, 3, 4}, rng));
    VarList vars{{"x", &x}};
    auto f = [&](Tape& t) { return nn::vsum(&t, nn::global_avg_pool(&t, {x.value, t.leaf(x)})); };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("dense") {
    Variable x(random_tensor(Shape{3, 4}, rng));
    Variable w(random_tensor(Shape{4, 5}, rng));
    Variable b(random_tensor(Shape{5}, rng));
    VarList vars{{"x", &x}, {"w", &w}, {"b", &b}};
    auto f = [&](Tape& t) {
      Value vx{x.value, t.leaf(x)}, vw{w.value, t.leaf(w)}, vb{b.value, t.leaf(b)};
      return anchored(t, nn::vsum(&t, nn::dense(&t, vx, vw, vb)), {vx, vw, vb});
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("concat") {
    Variable a(random_tensor(Shape{2, 3}, rng));
    Variable b(random_tensor(Shape{2, 5}, rng));
    VarList vars{{"a", &a}, {"b", &b}};
    auto f = [&](Tape& t) {
      Value va{a.value, t.leaf(a)}, vb{b.value, t.leaf(b)};
      Value y = nn::concat(&t, {va, vb});
      Tensor weights(y.data.shape());
      Rng wr(911);
      for (std::size_t i = 0; i < weights.count(); ++i) weights[i] = wr.uniform(-1.0f, 1.0f);
      return anchored(t, nn::vsum(&t, nn::vmul(&t, y, Value{weights, t.constant(weights)})), {va, vb});
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }

  SECTION("softmax_cross_entropy") {
    Variable logits(random_tensor(Shape{4, 5}, rng, -2.0f, 2.0f));
    VarList vars{{"logits", &logits}};
    std::vector<int> labels{0, 3, 2, 4};
    auto f = [&](Tape& t) {
      return nn::softmax_cross_entropy(&t, {logits.value, t.leaf(logits)}, labels).loss;
    };
    auto rep = ad::grad_check(f, vars, {.step = 1e-3, .tol = 1e-3});
    INFO(rep.worst);
    CHECK(rep.pass);
  }
}
