#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "thoughtflow/errors.hpp"
#include "thoughtflow/flow.hpp"
#include "thoughtflow/traces.hpp"

using namespace thoughtflow;
using tf_test::random_bundle;
using tf_test::random_probs;
using tf_test::random_vector;
using tf_test::trained_toy;

namespace {

long double kl(const std::vector<double>& p, const std::vector<long double>& m) {
  long double total = 0.0L;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) total += p[i] * std::log(static_cast<long double>(p[i]) / m[i]);
  }
  return total;
}

double js_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<long double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = (static_cast<long double>(p[i]) + q[i]) / 2.0L;
  return static_cast<double>(std::sqrt(0.5L * kl(p, m) + 0.5L * kl(q, m)));
}

double checked_js(const FlowStep& s, JsReferent referent) {
  return referent == JsReferent::consecutive ? s.js_from_prev : s.js_from_start;
}

void check_soundness(const FlowTrace& t, const StoppingConfig& cfg) {
  const std::size_t last = t.steps.size() - 1;
  CHECK(last <= cfg.t_steps);
  for (std::size_t i = 1; i < last; ++i) CHECK(checked_js(t.steps[i], cfg.referent) <= cfg.t_js);
  if (t.stop_reason == StopReason::js_threshold) {
    REQUIRE(last >= 1);
    CHECK(checked_js(t.steps[last], cfg.referent) > cfg.t_js);
  } else {
    CHECK(last == cfg.t_steps);
    if (last >= 1) CHECK(checked_js(t.steps[last], cfg.referent) <= cfg.t_js);
  }
}

bool same_trace(const FlowTrace& a, const FlowTrace& b) {
  if (a.steps.size() != b.steps.size() || a.stop_reason != b.stop_reason) return false;
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    const FlowStep& x = a.steps[i];
    const FlowStep& y = b.steps[i];
    if (!(x.logits == y.logits && x.probs == y.probs && x.score == y.score &&
          x.js_from_prev == y.js_from_prev && x.js_from_start == y.js_from_start &&
          x.alpha == y.alpha)) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("js distance: identity, disjoint support, errors") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(js_distance(p, p) == 0.0);
  CHECK(std::abs(js_distance(std::vector<double>{1, 0}, std::vector<double>{0, 1}) - std::sqrt(std::log(2.0))) < 1e-10);
  CHECK(std::abs(kMaxJsDistance - 0.832554611157697756) < 1e-15);
  CHECK_THROWS_AS(js_distance(p, std::vector<double>{0.5, 0.5}), DimensionError);
}

TEST_CASE("js distance: long double oracle and symmetry on random pairs, c = 10") {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const auto p = random_probs(rng, 10);
    const auto q = random_probs(rng, 10);
    const double d = js_distance(p, q);
    CHECK(std::abs(d - js_oracle(p, q)) < 1e-10);
    CHECK(d == js_distance(q, p));
    CHECK(d >= 0.0);
    CHECK(d <= kMaxJsDistance);
  }
}

TEST_CASE("flow step: worked two-class example") {
  const StepResult r = flow_step(std::vector<double>{0, 0}, std::vector<double>{1, -1}, 0.001, 0.0);
  CHECK(std::abs(r.probe_l1 - std::tanh(1.0)) < 1e-15);
  CHECK(r.probe_l1 == doctest::Approx(0.76159).epsilon(1e-5));
  CHECK(std::abs(r.alpha - 0.001 / std::tanh(1.0)) < 1e-15);
  CHECK(r.alpha == doctest::Approx(0.0013130).epsilon(1e-4));
  CHECK(r.next_logits[0] == r.alpha);
  CHECK(r.next_logits[1] == -r.alpha);
}

TEST_CASE("flow step: zero gradient is a fixed point") {
  const std::vector<double> z{0.4, -1.0, 2.5};
  const StepResult r = flow_step(z, std::vector<double>{0, 0, 0}, 0.001, 1e-8);
  CHECK(r.next_logits.values() == z);
  CHECK(r.probe_l1 == 0.0);
  CHECK(r.alpha == 0.001 / 1e-8);
  CHECK_THROWS_AS(flow_step(z, std::vector<double>{0, 0, 0}, 0.001, 0.0), ContractError);
  CHECK_THROWS_AS(flow_step(z, std::vector<double>{0, 0}, 0.001, 1e-8), DimensionError);
}

TEST_CASE("flow step: alpha (D + eps) = delta on random inputs") {
  Rng rng(2);
  for (int k = 0; k < 1000; ++k) {
    const auto z = random_vector(rng, 5, 3.0);
    const auto g = random_vector(rng, 5, std::pow(10.0, 4.0 * uniform01(rng) - 3.0));
    const double delta = std::pow(10.0, -1.0 - 3.0 * uniform01(rng));
    const StepResult r = flow_step(z, g, delta, 1e-8);
    CHECK(std::abs(r.alpha * (r.probe_l1 + 1e-8) - delta) < 1e-12);
  }
}

TEST_CASE("stopping config validation") {
  StoppingConfig c;
  CHECK_NOTHROW(c.validate());
  c.t_js = kMaxJsDistance + 1e-13;
  CHECK_NOTHROW(c.validate());
  c.t_js = kMaxJsDistance + 1e-9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StoppingConfig{};
  c.t_js = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StoppingConfig{};
  c.delta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StoppingConfig{};
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = StoppingConfig{};
  c.mc_samples = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(c.delta == 0.001);
  CHECK(StoppingConfig{}.mc_samples == 5);
  CHECK(StoppingConfig{}.mode == GradientMode::single);
  CHECK(StoppingConfig{}.referent == JsReferent::consecutive);
}

TEST_CASE("enum text forms round trip") {
  for (auto m : {GradientMode::single, GradientMode::mcdrop}) CHECK(parse_gradient_mode(to_string(m)) == m);
  for (auto r : {JsReferent::consecutive, JsReferent::initial}) CHECK(parse_js_referent(to_string(r)) == r);
  for (auto s : {StopReason::step_budget, StopReason::js_threshold}) CHECK(parse_stop_reason(to_string(s)) == s);
  CHECK_THROWS_AS(parse_gradient_mode("adam"), ConfigError);
}

TEST_CASE("run_flow: zero steps returns the base prediction") {
  const auto& toy = trained_toy();
  StoppingConfig cfg;
  for (const auto& r : toy.data.split("test").records) {
    const FlowTrace t = run_flow(toy.bundle, r.x, cfg, 1);
    REQUIRE(t.steps.size() == 1);
    CHECK(t.stop_reason == StopReason::step_budget);
    CHECK(t.steps[0].logits == toy.bundle.label_logits(toy.bundle.encode(r.x)).logits);
    CHECK(!t.steps[0].alpha);
    CHECK(t.steps[0].js_from_start == 0.0);
  }
}

TEST_CASE("run_flow: zero-gradient correction net keeps every step at step 0") {
  ModelBundle b = random_bundle(3);
  auto& out = b.correction().output();
  out = DenseLayer::zeros(out.input_dim(), 1);
  StoppingConfig cfg;
  cfg.t_steps = 20;
  const FlowTrace t = run_flow(b, std::vector<double>{0.1, 0.2, -0.3, 1.0}, cfg, 4);
  CHECK(t.steps.size() == 21);
  for (const auto& s : t.steps) {
    CHECK(s.logits == t.steps[0].logits);
    CHECK(s.score == 0.5);
  }
}

TEST_CASE("run_flow: trained model replay, fifty steps") {
  const auto& toy = trained_toy();
  for (auto mode : {GradientMode::single, GradientMode::mcdrop}) {
    StoppingConfig cfg;
    cfg.t_steps = 50;
    cfg.mode = mode;
    for (std::size_t n = 0; n < 20; ++n) {
      const Record& r = toy.data.split("test").records[n];
      const Vector phi = toy.bundle.encode(r.x);
      const FlowTrace t = run_flow_features(toy.bundle, phi, cfg, 100 + n);
      CHECK(t.steps.size() <= 51);
      check_soundness(t, cfg);
      for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const FlowStep& s = t.steps[i];
        CHECK(s.index == i);
        CHECK(s.probs == softmax(s.logits));
        const Sampling sampling{mode, cfg.mc_samples, 100 + n, i};
        CHECK(s.score == state_score(toy.bundle, s.probs, phi, sampling));
        if (i + 1 < t.steps.size()) {
          const ScoreGradient g = correctness_gradient(toy.bundle, phi, s.logits, sampling);
          CHECK(g.score == s.score);
          const StepResult step = flow_step(s.logits, g.gradient, cfg.delta, cfg.epsilon);
          CHECK(step.next_logits == t.steps[i + 1].logits);
          CHECK(step.alpha == *t.steps[i + 1].alpha);
        }
        if (i > 0) {
          CHECK(std::abs(*s.alpha * (*s.probe_l1 + cfg.epsilon) - cfg.delta) < 1e-12);
          CHECK(l1_distance(t.steps[i - 1].probs, s.probs) <= 3.0);
        }
      }
    }
  }
}

TEST_CASE("run_flow: stop-reason soundness on randomized flows") {
  Rng rng(5);
  for (int k = 0; k < 300; ++k) {
    const ModelBundle b = random_bundle(1000 + k, 4, 3, 0.3);
    StoppingConfig cfg;
    cfg.t_steps = static_cast<std::size_t>(uniform01(rng) * 40);
    cfg.t_js = uniform01(rng) < 0.2 ? kMaxJsDistance : 0.02 * uniform01(rng);
    cfg.delta = std::pow(10.0, -3.0 + 2.0 * uniform01(rng));
    cfg.referent = uniform01(rng) < 0.5 ? JsReferent::consecutive : JsReferent::initial;
    cfg.mode = uniform01(rng) < 0.3 ? GradientMode::mcdrop : GradientMode::single;
    cfg.mc_samples = 1 + static_cast<std::size_t>(uniform01(rng) * 5);
    const FlowTrace t = run_flow(b, random_vector(rng, 4, 2.0), cfg, k);
    check_soundness(t, cfg);
  }
}

TEST_CASE("run_flow: truncating a long trace equals a direct run") {
  const auto& toy = trained_toy();
  Rng rng(6);
  for (auto referent : {JsReferent::consecutive, JsReferent::initial}) {
    for (auto mode : {GradientMode::single, GradientMode::mcdrop}) {
      StoppingConfig loose;
      loose.t_steps = 100;
      loose.delta = 0.01;
      loose.mode = mode;
      loose.referent = referent;
      for (std::size_t n = 0; n < 5; ++n) {
        const Record& r = toy.data.split("val").records[n];
        const FlowTrace full = run_flow(toy.bundle, r.x, loose, 7 + n);
        for (int k = 0; k < 8; ++k) {
          StoppingConfig cell = loose;
          cell.t_steps = static_cast<std::size_t>(uniform01(rng) * 101);
          cell.t_js = uniform01(rng) * 0.02;
          const FlowTrace direct = run_flow(toy.bundle, r.x, cell, 7 + n);
          const FlowTrace cut = truncate_trace(full, cell.t_steps, cell.t_js, referent);
          CHECK(same_trace(direct, cut));
          CHECK(truncated_stop_index(full, cell.t_steps, cell.t_js, referent) + 1 == direct.steps.size());
        }
      }
    }
  }
}

TEST_CASE("mcdrop: dropout 0 is bitwise the single-gradient flow") {
  auto toy_bundle = trained_toy().bundle;
  ModelBundle b(toy_bundle.encoder(), toy_bundle.label(),
                CorrectionModule(toy_bundle.num_classes(), toy_bundle.feature_dim(),
                                 toy_bundle.correction().first(), toy_bundle.correction().second(),
                                 toy_bundle.correction().output(), 0.0),
                toy_bundle.meta());
  StoppingConfig single;
  single.t_steps = 30;
  StoppingConfig mc = single;
  mc.mode = GradientMode::mcdrop;
  for (std::size_t samples : {std::size_t{1}, std::size_t{5}}) {
    mc.mc_samples = samples;
    for (std::size_t n = 0; n < 10; ++n) {
      const auto& x = trained_toy().data.split("test").records[n].x;
      CHECK(same_trace(run_flow(b, x, single, n), run_flow(b, x, mc, n)));
    }
  }
}

TEST_CASE("mcdrop: sampled gradients differ at dropout 0.2") {
  const auto& toy = trained_toy();
  REQUIRE(toy.bundle.dropout_rate() == 0.2);
  std::size_t steps = 0, varied = 0;
  StoppingConfig cfg;
  cfg.t_steps = 20;
  cfg.mode = GradientMode::mcdrop;
  for (std::size_t n = 0; n < 20; ++n) {
    const Vector phi = toy.bundle.encode(toy.data.split("test").records[n].x);
    const FlowTrace t = run_flow_features(toy.bundle, phi, cfg, n);
    for (std::size_t i = 0; i + 1 < t.steps.size(); ++i) {
      const auto samples = correctness_gradient_samples(toy.bundle, phi, t.steps[i].logits,
                                                        {GradientMode::mcdrop, 5, n, i});
      REQUIRE(samples.size() == 5);
      bool all_same = true;
      for (const auto& s : samples) all_same = all_same && s.gradient == samples[0].gradient;
      ++steps;
      varied += !all_same;
    }
  }
  CHECK(static_cast<double>(varied) >= 0.99 * static_cast<double>(steps));
}

TEST_CASE("mcdrop: per-sample seeds are distinct and reproducible") {
  CHECK(mc_sample_seed(1, 2, 3) == mc_sample_seed(1, 2, 3));
  CHECK(mc_sample_seed(1, 2, 3) != mc_sample_seed(1, 2, 4));
  CHECK(mc_sample_seed(1, 2, 3) != mc_sample_seed(1, 3, 3));
  CHECK(mc_sample_seed(1, 2, 3) != mc_sample_seed(2, 2, 3));
}

TEST_CASE("flow prediction reads the final step") {
  FlowTrace t;
  t.steps.resize(2);
  t.steps[0].probs = Vector{0.6, 0.3, 0.1};
  t.steps[1].probs = Vector{0.2, 0.5, 0.3};
  CHECK(flow_prediction(t) == 1);
  t.steps.resize(1);
  CHECK(flow_prediction(t) == 0);
  CHECK_THROWS_AS(flow_prediction(FlowTrace{}), ContractError);
}

TEST_CASE("a flow can change its mind and the final class is reported") {
  const auto& toy = trained_toy();
  StoppingConfig cfg;
  cfg.t_steps = 100;
  cfg.delta = 0.01;
  bool found = false;
  for (const auto& r : toy.data.split("test").records) {
    const FlowTrace t = run_flow(toy.bundle, r.x, cfg, 9);
    const std::size_t first = argmax(t.steps.front().probs);
    const std::size_t last = flow_prediction(t);
    if (first != last) {
      CHECK(last == argmax(t.steps.back().probs));
      found = true;
      break;
    }
  }
  CHECK(found);
}

TEST_CASE("trace json: schema and round trip") {
  const auto& toy = trained_toy();
  StoppingConfig cfg;
  cfg.t_steps = 5;
  const Record& r = toy.data.split("test").records[0];
  const FlowTrace t = run_flow(toy.bundle, r.x, cfg, 1, "abc", r.label);
  const auto j = trace_to_json(t);
  CHECK(j.at("instance_id") == "abc");
  CHECK(j.at("gold") == r.label);
  CHECK(j.at("stop_reason") == "step-budget");
  REQUIRE(j.at("steps").size() == 6);
  CHECK(j.at("steps")[0].at("alpha").is_null());
  for (const auto& key : {"i", "probs", "s", "js_from_start", "js_from_prev", "alpha"}) {
    CHECK(j.at("steps")[3].contains(key));
  }
  const FlowTrace back = trace_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.instance_id == "abc");
  CHECK(back.gold == t.gold);
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    CHECK(back.steps[i].probs == t.steps[i].probs);
    CHECK(back.steps[i].score == t.steps[i].score);
    CHECK(back.steps[i].alpha == t.steps[i].alpha);
  }
  CHECK(trace_to_json(back) == j);
  CHECK(trace_to_json(FlowTrace{"x", std::nullopt, StopReason::step_budget, t.steps}).at("gold").is_null());
}

TEST_CASE("trace collection: serial and parallel agree") {
  const auto& toy = trained_toy();
  StoppingConfig cfg;
  cfg.t_steps = 10;
  cfg.mode = GradientMode::mcdrop;
  const auto& records = toy.data.split("val").records;
  const auto a = collect_traces_serial(toy.bundle, records, cfg, 3);
  const auto b = collect_traces_parallel(toy.bundle, records, cfg, 3);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(same_trace(a[i], b[i]));
    CHECK(a[i].instance_id == std::to_string(records[i].id));
  }
}
