#include <cmath>
#include <random>

#include "doctest.h"
#include "errors.hpp"
#include "model_fixture.hpp"
#include "trainer.hpp"

using namespace rest::model;
using rest::attention::Scheme;

namespace {

Tensor random_frames(std::mt19937_64& rng, std::size_t t, std::size_t p) {
  return Tensor::matrix(t, p, testutil::uniform(rng, t * p));
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST_CASE("vocabulary") {
  const std::vector<std::string> labels = {"jump", "run fast"};
  auto v = Vocabulary::build(labels);
  CHECK(v.size() == 5);
  CHECK(v.id("fast") == 0);
  CHECK(v.id("jump") == 1);
  CHECK(v.id("run") == 2);
  CHECK(v.pad_id() == 3);
  CHECK(v.mask_id() == 4);
  const std::vector<std::string> dup = {"run", "run fast", "fast"};
  CHECK(Vocabulary::build(dup).size() == 4);
  const std::vector<std::string> none = {};
  CHECK_THROWS(Vocabulary::build(none));
  CHECK(v.encode("Run-Fast") == std::vector<std::size_t>{2, 0});
  CHECK_THROWS_AS(v.encode("walk"), rest::IndexError);
}

TEST_CASE("config validation") {
  auto c = fixture::tiny_config();
  c.vocab_size = 6;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.num_heads = 3;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.mask_prob = 1.0;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
  bad = c;
  bad.omega_mtl = -0.1;
  CHECK_THROWS_AS(bad.validate(), rest::ConfigError);
}

TEST_CASE("init_params determinism and shapes") {
  auto a = fixture::tiny_model(1);
  auto b = fixture::tiny_model(1);
  auto c = fixture::tiny_model(2);
  const auto shapes = parameter_shapes(a.config);
  auto na = a.params.named();
  auto nb = b.params.named();
  auto nc = c.params.named();
  REQUIRE(na.size() == shapes.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == shapes[i].first);
    CHECK(na[i].second->shape() == shapes[i].second);
    CHECK(vec(na[i].second->values()) == vec(nb[i].second->values()));
    any_diff = any_diff || vec(na[i].second->values()) != vec(nc[i].second->values());
  }
  CHECK(any_diff);
  for (double g : a.params.final_ln_gain.values()) CHECK(g == 1.0);
  for (double g : a.params.cls_out_bias.values()) CHECK(g == 0.0);
}

TEST_CASE("masking plan") {
  Rng rng(5);
  const std::size_t one[] = {7};
  for (int i = 0; i < 100; ++i) {
    auto p = make_masking_plan(one, 0.15, rng);
    CHECK(p.positions == std::vector<std::size_t>{0});
    CHECK(p.original_tokens == std::vector<std::size_t>{7});
  }
  const std::size_t four[] = {1, 2, 3, 4};
  std::vector<double> count(4, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto p = make_masking_plan(four, 0.15, rng);
    REQUIRE(!p.positions.empty());
    for (auto pos : p.positions) count[pos] += 1.0;
  }
  // Per-position rate: 0.15 + P(no draw)/4 = 0.2805.
  for (double c : count) {
    const double rate = c / draws;
    CHECK(rate >= 0.15);
    CHECK(rate <= 0.33);
    CHECK(rate == doctest::Approx(0.2805).epsilon(0.03));
  }
  Rng r1(9), r2(9);
  CHECK(make_masking_plan(four, 0.15, r1).positions == make_masking_plan(four, 0.15, r2).positions);
}

TEST_CASE("loss values") {
  Tape tape(false);
  const auto zero = Tensor::matrix(1, 664, std::vector<double>(664, 0.0));
  CHECK(loss_cls(tape, zero, 5).item() == doctest::Approx(6.498282149476434).epsilon(1e-13));
  const std::size_t tok[] = {3};
  CHECK(loss_mtl(tape, Tensor::matrix(1, 10, std::vector<double>(10, 0.0)), tok).item() ==
        doctest::Approx(std::log(10.0)).epsilon(1e-14));
  std::vector<double> sure(10, 0.0);
  sure[3] = 1e6;
  CHECK(loss_mtl(tape, Tensor::matrix(1, 10, sure), tok).item() < 1e-12);
  const std::size_t two[] = {3, 4};
  CHECK_THROWS_AS(loss_mtl(tape, Tensor::matrix(1, 10, sure), two), rest::ContractError);

  auto c = fixture::tiny_config();
  c.omega_mtl = 0.5;
  auto lc = Tensor::scalar(2.0), lm = Tensor::scalar(4.0);
  CHECK(total_loss(tape, lc, lm, c).item() == 4.0);
  c.omega_mtl = 0.0;
  CHECK(total_loss(tape, lc, lm, c).item() == 2.0);
  c.loss_mode = LossMode::kClsOnly;
  CHECK(total_loss(tape, lc, Tensor(), c).item() == 2.0);
  c.loss_mode = LossMode::kMlmOnly;
  CHECK(total_loss(tape, Tensor(), lm, c).item() == 4.0);
}

TEST_CASE("forward shapes and length limits") {
  auto m = fixture::tiny_model(3);
  std::mt19937_64 rng(1);
  Tape tape(false);
  const std::vector<std::size_t> words = {m.vocab.id("jump"), m.vocab.id("high")};
  MaskingPlan plan{{1}, {words[1]}};
  auto r = forward(m.params, m.config, m.vocab, tape, random_frames(rng, 2, 4), words, &plan);
  CHECK(r.x.shape() == rest::tensor::Shape{1, 8});
  CHECK(r.cls_logits.shape() == rest::tensor::Shape{1, 3});
  CHECK(r.mtl_logits.shape() == rest::tensor::Shape{1, m.vocab.size()});
  CHECK_THROWS_AS(forward(m.params, m.config, m.vocab, tape, random_frames(rng, 4, 4), words), rest::ConfigError);
  const std::vector<std::size_t> long_words(4, m.vocab.id("run"));
  CHECK_THROWS_AS(forward(m.params, m.config, m.vocab, tape, random_frames(rng, 2, 4), long_words),
                  rest::ConfigError);
  CHECK(represent(m.params, m.config, m.vocab, random_frames(rng, 3, 4)).size() == 8);
}

TEST_CASE("modality-specific x is independent of the words") {
  auto m = fixture::tiny_model(4);
  fixture::randomize(m.params, 40);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> token(0, m.vocab.size() - 1);
  std::uniform_int_distribution<std::size_t> length(1, 3);
  for (int v = 0; v < 5; ++v) {
    auto frames = random_frames(rng, 1 + v % 3, 4);
    const auto x0 = represent(m.params, m.config, m.vocab, frames);
    Tape t0(false);
    const std::size_t mask_only[] = {m.vocab.mask_id()};
    const auto logits0 = vec(forward(m.params, m.config, m.vocab, t0, frames, mask_only).cls_logits.values());
    for (int s = 0; s < 20; ++s) {
      std::vector<std::size_t> words(length(rng));
      for (auto& w : words) w = token(rng);
      Tape t(false);
      auto r = forward(m.params, m.config, m.vocab, t, frames, words);
      CHECK(vec(r.x.values()) == x0);
      CHECK(vec(r.cls_logits.values()) == logits0);
    }
  }
}

TEST_CASE("full-cross x depends on the words") {
  auto m = fixture::tiny_model(4, Scheme::kFullCross);
  fixture::randomize(m.params, 41);
  std::mt19937_64 rng(3);
  auto frames = random_frames(rng, 2, 4);
  const auto x0 = represent(m.params, m.config, m.vocab, frames);
  Tape t(false);
  const std::vector<std::size_t> words = {m.vocab.id("swim"), m.vocab.id("fast")};
  CHECK(vec(forward(m.params, m.config, m.vocab, t, frames, words).x.values()) != x0);
}

TEST_CASE("masked-token logits are causal") {
  auto m = fixture::tiny_model(5);
  fixture::randomize(m.params, 50);
  std::mt19937_64 rng(4);
  auto frames = random_frames(rng, 2, 4);
  std::vector<std::size_t> words = {m.vocab.id("jump"), m.vocab.id("high"), m.vocab.id("run")};
  MaskingPlan plan{{1}, {words[1]}};
  Tape t1(false);
  const auto before = vec(forward(m.params, m.config, m.vocab, t1, frames, words, &plan).mtl_logits.values());
  words[2] = m.vocab.id("swim");
  Tape t2(false);
  CHECK(vec(forward(m.params, m.config, m.vocab, t2, frames, words, &plan).mtl_logits.values()) == before);
  words[0] = m.vocab.id("fast");
  Tape t3(false);
  CHECK(vec(forward(m.params, m.config, m.vocab, t3, frames, words, &plan).mtl_logits.values()) != before);
}

TEST_CASE("zeroed classifier output layer gives zero logits") {
  auto m = fixture::tiny_model(6);
  fixture::randomize(m.params, 60);
  for (auto& v : m.params.cls_out_weight.mutable_values()) v = 0.0;
  for (auto& v : m.params.cls_out_bias.mutable_values()) v = 0.0;
  std::mt19937_64 rng(5);
  Tape t(false);
  const std::size_t w[] = {m.vocab.id("run")};
  const auto r = forward(m.params, m.config, m.vocab, t, random_frames(rng, 3, 4), w);
  for (double v : r.cls_logits.values()) CHECK(v == 0.0);
}

TEST_CASE("frame order matters only through positions") {
  auto m = fixture::tiny_model(7);
  fixture::randomize(m.params, 70);
  auto frames = Tensor::matrix(3, 4, {0.1, 0.2, 0.3, 0.4, -0.5, 0.6, -0.7, 0.8, 0.9, -1.0, 0.2, 0.3});
  auto swapped = Tensor::matrix(3, 4, {-0.5, 0.6, -0.7, 0.8, 0.1, 0.2, 0.3, 0.4, 0.9, -1.0, 0.2, 0.3});
  const auto a = represent(m.params, m.config, m.vocab, frames);
  const auto b = represent(m.params, m.config, m.vocab, swapped);
  CHECK(a != b);
  for (auto& v : m.params.visual_position.mutable_values()) v = 0.0;
  const auto a0 = represent(m.params, m.config, m.vocab, frames);
  const auto b0 = represent(m.params, m.config, m.vocab, swapped);
  for (std::size_t i = 0; i < a0.size(); ++i) CHECK(a0[i] == doctest::Approx(b0[i]).epsilon(1e-12));
}

TEST_CASE("total loss gradient matches finite differences") {
  for (auto mode : {LossMode::kJoint, LossMode::kClsOnly, LossMode::kMlmOnly}) {
    for (auto scheme : {Scheme::kModalitySpecific, Scheme::kFullCross}) {
      auto m = fixture::tiny_model(8, scheme);
      m.config.loss_mode = mode;
      fixture::randomize(m.params, 80, 0.5);
      std::mt19937_64 rng(6);
      auto frames = random_frames(rng, 3, 4);
      const std::vector<std::size_t> words = {m.vocab.id("swim"), m.vocab.id("fast")};
      MaskingPlan plan{{0, 1}, words};
      const auto g = fixture::gradient_check(m, frames, words, plan, 2);
      INFO("mode " << to_string(mode) << " worst " << g.worst);
      CHECK(g.max_rel_err < 1e-4);
    }
  }
}

TEST_CASE("masked-token loss reaches the visual input") {
  auto m = fixture::tiny_model(9);
  m.config.loss_mode = LossMode::kMlmOnly;
  fixture::randomize(m.params, 90, 0.5);
  std::mt19937_64 rng(7);
  auto frames = random_frames(rng, 2, 4);
  frames.set_requires_grad(true);
  const std::vector<std::size_t> words = {m.vocab.id("run")};
  MaskingPlan plan{{0}, words};
  Tape tape;
  auto r = forward(m.params, m.config, m.vocab, tape, frames, words, &plan);
  tape.backward(loss_mtl(tape, r.mtl_logits, plan.original_tokens));
  double norm = 0.0;
  for (double g : frames.grad()) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("padding in a batch leaves each item's loss unchanged") {
  auto m = fixture::tiny_model(10);
  fixture::randomize(m.params, 100, 0.5);
  std::mt19937_64 rng(8);
  TrainingItem a{"a", 0, random_frames(rng, 3, 4), {m.vocab.id("jump"), m.vocab.id("high")}};
  TrainingItem b{"b", 1, random_frames(rng, 1, 4), {m.vocab.id("run")}};
  const std::vector<MaskingPlan> plans = {{{1}, {a.words[1]}}, {{0}, {b.words[0]}}};
  const TrainingItem* both[] = {&a, &b};
  const TrainingItem* only_a[] = {&a};
  const TrainingItem* only_b[] = {&b};
  const auto sa = accumulate_batch(m.params, m.config, m.vocab, only_a, std::span(plans).first(1), false);
  const auto sb = accumulate_batch(m.params, m.config, m.vocab, only_b, std::span(plans).last(1), false);
  const auto sab = accumulate_batch(m.params, m.config, m.vocab, both, plans, false);
  CHECK(sab.loss_total == doctest::Approx((sa.loss_total + sb.loss_total) / 2).epsilon(1e-12));
}

TEST_CASE("one small gradient step lowers the batch loss") {
  auto m = fixture::tiny_model(11);
  std::mt19937_64 rng(9);
  TrainingItem a{"a", 0, random_frames(rng, 3, 4), {m.vocab.id("jump"), m.vocab.id("high")}};
  TrainingItem b{"b", 2, random_frames(rng, 2, 4), {m.vocab.id("swim"), m.vocab.id("fast")}};
  const std::vector<MaskingPlan> plans = {{{0}, {a.words[0]}}, {{1}, {b.words[1]}}};
  const TrainingItem* batch[] = {&a, &b};
  TrainSettings s;
  s.optimizer = Optimizer::kGradientDescent;
  s.weight_decay = 0.0;
  m.params.zero_grad();
  const double before = accumulate_batch(m.params, m.config, m.vocab, batch, plans, true).loss_total;
  OptimizerState opt(s, m.params);
  opt.step(m.params, 1e-2);
  const double after = accumulate_batch(m.params, m.config, m.vocab, batch, plans, false).loss_total;
  CHECK(after < before);
}

TEST_CASE("training is deterministic given the seed") {
  auto m = fixture::tiny_model(12);
  std::mt19937_64 rng(10);
  std::vector<TrainingItem> data;
  for (std::size_t i = 0; i < 6; ++i) {
    const std::string label = i % 3 == 0 ? "jump high" : (i % 3 == 1 ? "run" : "swim fast");
    data.push_back({"i" + std::to_string(i), i % 3, random_frames(rng, 2, 4), m.vocab.encode(label)});
  }
  TrainSettings s;
  s.epochs = 3;
  s.batch_size = 4;
  auto r1 = train(m.params.clone(), m.config, m.vocab, data, s);
  auto r2 = train(m.params.clone(), m.config, m.vocab, data, s);
  REQUIRE(r1.log.size() == 3);
  auto n1 = r1.params.named();
  auto n2 = r2.params.named();
  for (std::size_t i = 0; i < n1.size(); ++i) CHECK(vec(n1[i].second->values()) == vec(n2[i].second->values()));
  CHECK(r1.log.back().loss_total == r2.log.back().loss_total);
}

TEST_CASE("non-finite loss aborts training") {
  auto m = fixture::tiny_model(13);
  m.params.cls_out_bias.mutable_values()[0] = std::nan("");
  std::mt19937_64 rng(11);
  std::vector<TrainingItem> data = {{"x", 0, random_frames(rng, 2, 4), m.vocab.encode("run")}};
  TrainSettings s;
  s.epochs = 1;
  CHECK_THROWS_AS(train(m.params, m.config, m.vocab, data, s), rest::NumericError);
}
