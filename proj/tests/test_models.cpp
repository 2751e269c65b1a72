#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>

#include "mpnet/graph.hpp"
#include "mpnet/rng.hpp"

using namespace mpnet;
using model::ArchScale;
using model::Model;

namespace {

Tensor random_batch(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.count(); ++i) t[i] = rng.uniform(0.0f, 1.0f);
  return t;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.count(); ++i)
    if (std::bit_cast<std::uint32_t>(a[i]) != std::bit_cast<std::uint32_t>(b[i])) return false;
  return true;
}

const model::NodeShape& row(const std::vector<model::NodeShape>& table, const std::string& name) {
  for (const auto& r : table)
    if (r.name == name) return r;
  throw std::logic_error("no audit row named " + name);
}

int count_kind(const model::GraphSpec& spec, model::LayerKind kind) {
  int n = 0;
  for (const auto& node : spec.nodes) n += node.kind == kind ? 1 : 0;
  return n;
}

}  // namespace

TEST_CASE("full vgg19 structure") {
  Model m = model::build_vgg19(model::full_scale(), 2);
  CHECK(count_kind(m.spec, model::LayerKind::Conv) == 16);
  CHECK(count_kind(m.spec, model::LayerKind::MaxPool) == 5);
  auto table = model::shape_audit(m.spec, m.params, 224);
  CHECK(row(table, "main/gap").shape == Shape{1, 512});
  CHECK(m.params.at("head/fc/w").value.shape() == Shape{512, 2500});
  CHECK(row(table, "head/logits").shape == Shape{1, 2});
}

TEST_CASE("mini vgg19 spatial chain") {
  Model m = model::build_vgg19(model::mini_scale(), 2);
  auto table = model::shape_audit(m.spec, m.params, 32);
  CHECK(row(table, "b1/pool").shape == Shape{1, 16, 16, 8});
  CHECK(row(table, "b2/pool").shape == Shape{1, 8, 8, 16});
  CHECK(row(table, "b3/pool").shape == Shape{1, 4, 4, 32});
  CHECK(row(table, "b4/pool").shape == Shape{1, 2, 2, 64});
  CHECK(row(table, "b5/pool").shape == Shape{1, 1, 1, 64});
  CHECK(m.params.at("head/fc/w").value.shape() == Shape{64, 64});
}

TEST_CASE("class_count below 2 is rejected") {
  CHECK_THROWS_AS(model::build_vgg19(model::full_scale(), 1), ValueError);
  CHECK_THROWS_AS(model::build_mvgg19(model::full_scale(), 1), ValueError);
}

TEST_CASE("invalid scales are rejected") {
  ArchScale bad = model::mini_scale();
  bad.convs_per_block[2] = 0;
  CHECK_THROWS_AS(model::build_mvgg19(bad, 2), ValueError);
  bad = model::mini_scale();
  bad.head_width = 0;
  CHECK_THROWS_AS(model::build_vgg19(bad, 2), ValueError);
}

TEST_CASE("multipath concat widths") {
  Model full = model::build_mvgg19(model::full_scale(), 2);
  auto table = model::shape_audit(full.spec, full.params, 224);
  CHECK(row(table, "fuse/concat").shape == Shape{1, 1408});

  Model mini = model::build_mvgg19(model::mini_scale(), 2);
  auto mini_table = model::shape_audit(mini.spec, mini.params, 32);
  CHECK(row(mini_table, "fuse/concat").shape == Shape{1, 176});
}

TEST_CASE("full multipath audit at 224 matches the tap arithmetic") {
  Model m = model::build_mvgg19(model::full_scale(), 2);
  auto table = model::shape_audit(m.spec, m.params, 224);
  CHECK(row(table, "b2/pool").shape == Shape{1, 56, 56, 128});
  CHECK(row(table, "b3/pool").shape == Shape{1, 28, 28, 256});
  CHECK(row(table, "b4/pool").shape == Shape{1, 14, 14, 512});
  CHECK(row(table, "b5/pool").shape == Shape{1, 7, 7, 512});
  CHECK(row(table, "tap2/gap").shape == Shape{1, 128});
  CHECK(row(table, "head/fc").shape == Shape{1, 2500});
}

TEST_CASE("full multipath audit at 300 walks the 300-pixel chain") {
  Model m = model::build_mvgg19(model::full_scale(), 2);
  auto table = model::shape_audit(m.spec, m.params, 300);
  CHECK(row(table, "b1/pool").shape == Shape{1, 150, 150, 64});
  CHECK(row(table, "b2/pool").shape == Shape{1, 75, 75, 128});
  CHECK(row(table, "b3/pool").shape == Shape{1, 37, 37, 256});
  CHECK(row(table, "b4/pool").shape == Shape{1, 18, 18, 512});
  CHECK(row(table, "b5/pool").shape == Shape{1, 9, 9, 512});
}

TEST_CASE("inputs below 32 pixels fail the audit at full scale") {
  Model m = model::build_mvgg19(model::full_scale(), 2);
  CHECK_THROWS_AS(model::shape_audit(m.spec, m.params, 16), ShapeError);
  CHECK(model::shape_audit(m.spec, m.params, 32).size() > 0);
}

TEST_CASE("builders produce identical backbones") {
  Model a = model::build_vgg19(model::mini_scale(), 3);
  Model b = model::build_mvgg19(model::mini_scale(), 3);
  for (const auto& [name, var] : a.params.all()) {
    if (name.starts_with("head/")) continue;  // heads differ in width
    REQUIRE(b.params.contains(name));
    CHECK(b.params.at(name).value.shape() == var.value.shape());
  }
}

TEST_CASE("same backbone weights give identical pre-tap activations") {
  Model vgg = model::build_vgg19(model::mini_scale(), 2);
  Model mvgg = model::build_mvgg19(model::mini_scale(), 2);
  model::initialize(vgg.params, 99);
  model::initialize(mvgg.params, 1234);
  for (auto& [name, var] : vgg.params.all())
    if (!name.starts_with("head/")) mvgg.params.at(name).value = var.value;

  Rng rng(5);
  Tensor batch = random_batch(Shape{2, 32, 32, 3}, rng);
  std::map<std::string, Tensor> cap_vgg, cap_mvgg;
  model::ForwardOptions opt;
  opt.captured = &cap_vgg;
  model::forward(vgg.spec, vgg.params, batch, opt);
  opt.captured = &cap_mvgg;
  model::forward(mvgg.spec, mvgg.params, batch, opt);
  for (const char* node : {"b2/pool", "b3/pool", "b4/pool", "b5/pool"})
    CHECK(bit_equal(cap_vgg.at(node), cap_mvgg.at(node)));
}

TEST_CASE("backbone freezing exposes exactly the six head tensors") {
  Model m = model::build_mvgg19(model::full_scale(), 2);
  model::apply_freeze_policy(m.params, model::FreezePolicy::Backbone);
  auto names = m.params.trainable_names();
  CHECK(names == std::vector<std::string>{"head/bn/beta", "head/bn/gamma", "head/fc/b",
                                          "head/fc/w", "head/logits/b", "head/logits/w"});
  CHECK_FALSE(m.params.at("tap2/bn/gamma").trainable);
  CHECK_FALSE(m.params.at("b1/c1/w").trainable);

  model::apply_freeze_policy(m.params, model::FreezePolicy::AllButLogits);
  CHECK(m.params.trainable_names() ==
        std::vector<std::string>{"head/logits/b", "head/logits/w"});

  model::apply_freeze_policy(m.params, model::FreezePolicy::None);
  CHECK(m.params.trainable_names().size() == m.params.all().size());
}

TEST_CASE("eval forward is deterministic and honors zero logits") {
  Model m = model::build_mvgg19(model::mini_scale(), 4);
  model::initialize(m.params, 7);
  Rng rng(11);
  Tensor batch = random_batch(Shape{3, 32, 32, 3}, rng);
  Tensor a = model::forward(m.spec, m.params, batch, {});
  Tensor b = model::forward(m.spec, m.params, batch, {});
  CHECK(bit_equal(a, b));
  REQUIRE(a.shape() == Shape{3, 4});

  // zero logits weights force a uniform softmax
  std::fill(m.params.at("head/logits/w").value.data().begin(),
            m.params.at("head/logits/w").value.data().end(), 0.0f);
  std::fill(m.params.at("head/logits/b").value.data().begin(),
            m.params.at("head/logits/b").value.data().end(), 0.0f);
  Tensor logits = model::forward(m.spec, m.params, batch, {});
  auto r = nn::softmax_cross_entropy(logits, {0, 1, 2});
  CHECK(r.loss[0] == Catch::Approx(std::log(4.0)).margin(1e-6));
  for (std::size_t i = 0; i < r.probs.count(); ++i)
    CHECK(r.probs[i] == Catch::Approx(0.25).margin(1e-6));
}

TEST_CASE("forward reports shape mismatches with the node name") {
  Model m = model::build_mvgg19(model::mini_scale(), 2);
  model::initialize(m.params, 3);
  Rng rng(13);
  Tensor bad = random_batch(Shape{1, 32, 32, 1}, rng);  // channel mismatch
  try {
    model::forward(m.spec, m.params, bad, {});
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("channels") != std::string::npos);
  }
}

TEST_CASE("multipath backbone node sequence matches the sequential build") {
  Model mvgg = model::build_mvgg19(model::mini_scale(), 2);
  Model vgg = model::build_vgg19(model::mini_scale(), 2);
  std::vector<std::string> mvgg_backbone, vgg_backbone;
  for (const auto& n : mvgg.spec.nodes)
    if (!n.name.starts_with("tap") && n.name != "fuse/concat") mvgg_backbone.push_back(n.name);
  for (const auto& n : vgg.spec.nodes) vgg_backbone.push_back(n.name);
  CHECK(mvgg_backbone == vgg_backbone);
}

TEST_CASE("graph validation catches malformed specs") {
  Model m = model::build_vgg19(model::mini_scale(), 2);
  SECTION("dangling reference") {
    model::GraphSpec broken = m.spec;
    broken.nodes[3].inputs = {"nonexistent"};
    CHECK_THROWS_AS(model::validate(broken), ValueError);
  }
  SECTION("duplicate names") {
    model::GraphSpec broken = m.spec;
    broken.nodes[4].name = broken.nodes[2].name;
    CHECK_THROWS_AS(model::validate(broken), ValueError);
  }
  SECTION("missing output") {
    model::GraphSpec broken = m.spec;
    broken.output = "nowhere";
    CHECK_THROWS_AS(model::validate(broken), ValueError);
  }
}

TEST_CASE("initialization is deterministic and name-keyed") {
  Model a = model::build_mvgg19(model::mini_scale(), 2);
  Model b = model::build_mvgg19(model::mini_scale(), 2);
  model::initialize(a.params, 42);
  model::initialize(b.params, 42);
  for (const auto& [name, var] : a.params.all())
    CHECK(bit_equal(var.value, b.params.at(name).value));
  model::initialize(b.params, 43);
  CHECK_FALSE(bit_equal(a.params.at("b1/c1/w").value, b.params.at("b1/c1/w").value));
  // biases stay zero, gammas stay one
  for (const auto& [name, var] : b.params.all()) {
    if (name.ends_with("/gamma"))
      for (std::size_t i = 0; i < var.value.count(); ++i) CHECK(var.value[i] == 1.0f);
    if (name.ends_with("/b") || name.ends_with("/beta"))
      for (std::size_t i = 0; i < var.value.count(); ++i) CHECK(var.value[i] == 0.0f);
  }
}

TEST_CASE("summary prints the fused width and head rows") {
  Model m = model::build_mvgg19(model::full_scale(), 2);
  model::apply_freeze_policy(m.params, model::FreezePolicy::Backbone);
  const std::string text = model::summary(m.spec, m.params, 224);
  CHECK(text.find("fuse/concat") != std::string::npos);
  CHECK(text.find("[1x1408]") != std::string::npos);
  CHECK(text.find("[1x2500]") != std::string::npos);
  CHECK(text.find("trainable") != std::string::npos);
}
