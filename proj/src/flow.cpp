#include "thoughtflow/flow.hpp"

#include <cmath>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/rng.hpp"
#include "thoughtflow/tape.hpp"

namespace thoughtflow {

std::string to_string(GradientMode mode) {
  return mode == GradientMode::single ? "single-gradient" : "mcdrop";
}

std::string to_string(JsReferent referent) {
  return referent == JsReferent::consecutive ? "consecutive" : "initial";
}

std::string to_string(StopReason reason) {
  return reason == StopReason::step_budget ? "step-budget" : "js-threshold";
}

GradientMode parse_gradient_mode(std::string_view s) {
  if (s == "single-gradient" || s == "single") return GradientMode::single;
  if (s == "mcdrop") return GradientMode::mcdrop;
  throw ConfigError("unknown gradient mode '" + std::string(s) +
                    "' (expected single-gradient or mcdrop)");
}

JsReferent parse_js_referent(std::string_view s) {
  if (s == "consecutive") return JsReferent::consecutive;
  if (s == "initial") return JsReferent::initial;
  throw ConfigError("unknown JS referent '" + std::string(s) + "' (expected consecutive or initial)");
}

StopReason parse_stop_reason(std::string_view s) {
  if (s == "step-budget") return StopReason::step_budget;
  if (s == "js-threshold") return StopReason::js_threshold;
  throw FormatError("unknown stop reason '" + std::string(s) + "'");
}

void StoppingConfig::validate() const {
  if (!(t_js >= 0.0) || t_js > kMaxJsDistance + 1e-12) {
    throw ConfigError("t_js = " + std::to_string(t_js) +
                      " is outside [0, sqrt(ln 2) ~ 0.832554]; the JS distance can never exceed "
                      "sqrt(ln 2), so larger thresholds are meaningless");
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be positive and finite");
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw ConfigError("epsilon must be positive and finite");
  }
  if (mc_samples == 0) throw ConfigError("mc_samples must be at least 1");
}

double js_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("js_distance: lengths " + std::to_string(p.size()) + " and " +
                         std::to_string(q.size()) + " differ");
  }
  auto term = [](double a, double m) { return a > 0.0 ? a * std::log(a / m) : 0.0; };
  // Each entry adds one commutative sum, so swapping p and q is bitwise exact.
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    acc += 0.5 * (term(p[i], m) + term(q[i], m));
  }
  return std::sqrt(std::max(acc, 0.0));
}

std::uint64_t mc_sample_seed(std::uint64_t flow_seed, std::size_t step, std::size_t sample) {
  return derive_seed(flow_seed, step, sample);
}

namespace {

std::vector<ScoreMode> score_modes(const Sampling& sampling) {
  if (sampling.mode == GradientMode::single) return {ScoreMode::deterministic()};
  std::vector<ScoreMode> modes;
  modes.reserve(sampling.samples);
  for (std::size_t k = 0; k < sampling.samples; ++k) {
    modes.push_back(ScoreMode::sampled_with(mc_sample_seed(sampling.flow_seed, sampling.step, k)));
  }
  return modes;
}

}  // namespace

ScoreGradient correctness_gradient_once(const ModelBundle& bundle, std::span<const double> phi,
                                        std::span<const double> logits, ScoreMode mode) {
  const CorrectionModule& corr = bundle.correction();
  if (logits.size() != corr.num_classes() || phi.size() != corr.feature_dim()) {
    throw DimensionError("correctness_gradient: expected " + std::to_string(corr.num_classes()) +
                         " logits and " + std::to_string(corr.feature_dim()) + " features");
  }
  Tape tape;
  auto vars = corr.bind(tape, false);
  Var z = tape.variable(logits);
  Var probs = tape.softmax(z);
  Var masked = tape.mul_mask(tape.bind(phi, false), corr.encoding_mask(mode));
  Var s = tape.sigmoid(corr.logit(tape, vars, probs, masked));
  tape.backward(s);
  ScoreGradient out{tape.scalar(s), Vector(tape.grad(z))};
  require_finite(out.gradient, "correctness gradient");
  return out;
}

std::vector<ScoreGradient> correctness_gradient_samples(const ModelBundle& bundle,
                                                        std::span<const double> phi,
                                                        std::span<const double> logits,
                                                        const Sampling& sampling) {
  std::vector<ScoreGradient> out;
  for (ScoreMode mode : score_modes(sampling)) {
    out.push_back(correctness_gradient_once(bundle, phi, logits, mode));
  }
  return out;
}

ScoreGradient correctness_gradient(const ModelBundle& bundle, std::span<const double> phi,
                                   std::span<const double> logits, const Sampling& sampling) {
  auto samples = correctness_gradient_samples(bundle, phi, logits, sampling);
  ScoreGradient mean = samples.front();
  if (samples.size() == 1) return mean;
  const double n = static_cast<double>(samples.size());
  double score_dev = 0.0;
  Vector grad_dev(mean.gradient.size());
  for (std::size_t k = 1; k < samples.size(); ++k) {
    score_dev += samples[k].score - samples[0].score;
    for (std::size_t j = 0; j < grad_dev.size(); ++j) {
      grad_dev[j] += samples[k].gradient[j] - samples[0].gradient[j];
    }
  }
  mean.score += score_dev / n;
  for (std::size_t j = 0; j < grad_dev.size(); ++j) mean.gradient[j] += grad_dev[j] / n;
  return mean;
}

double state_score(const ModelBundle& bundle, std::span<const double> probs,
                   std::span<const double> phi, const Sampling& sampling) {
  const auto modes = score_modes(sampling);
  const double first = bundle.correctness_score(probs, phi, modes.front());
  if (modes.size() == 1) return first;
  double dev = 0.0;
  for (std::size_t k = 1; k < modes.size(); ++k) {
    dev += bundle.correctness_score(probs, phi, modes[k]) - first;
  }
  return first + dev / static_cast<double>(modes.size());
}

StepResult flow_step(std::span<const double> logits, std::span<const double> gradient,
                     double delta, double epsilon) {
  if (logits.size() != gradient.size()) throw DimensionError("flow_step: length mismatch");
  const std::size_t c = logits.size();
  Vector probe_logits(c);
  for (std::size_t j = 0; j < c; ++j) probe_logits[j] = logits[j] + gradient[j];
  const double movement = l1_distance(softmax(logits), softmax(probe_logits));
  const double denominator = movement + epsilon;
  if (!(denominator > 0.0)) {
    throw ContractError("flow_step: zero probe movement with epsilon = 0 leaves alpha undefined");
  }
  StepResult out;
  out.probe_l1 = movement;
  out.alpha = delta / denominator;
  out.next_logits = Vector(c);
  for (std::size_t j = 0; j < c; ++j) out.next_logits[j] = logits[j] + out.alpha * gradient[j];
  return out;
}

FlowTrace run_flow_features(const ModelBundle& bundle, std::span<const double> phi,
                            const StoppingConfig& config, std::uint64_t seed,
                            std::string instance_id, std::optional<std::size_t> gold) {
  config.validate();
  require_finite(phi, "run_flow features");
  FlowTrace trace;
  trace.instance_id = std::move(instance_id);
  trace.gold = gold;
  trace.stop_reason = StopReason::step_budget;

  Thought initial = bundle.label_logits(phi);
  FlowStep first;
  first.index = 0;
  first.logits = std::move(initial.logits);
  first.probs = std::move(initial.probs);
  trace.steps.push_back(std::move(first));

  Sampling sampling{config.mode, config.mc_samples, seed, 0};
  bool stopped = false;
  while (true) {
    FlowStep& current = trace.steps.back();
    sampling.step = current.index;
    if (stopped || current.index == config.t_steps) {
      current.score = state_score(bundle, current.probs, phi, sampling);
      break;
    }
    const ScoreGradient sg = correctness_gradient(bundle, phi, current.logits, sampling);
    current.score = sg.score;
    StepResult step = flow_step(current.logits, sg.gradient, config.delta, config.epsilon);

    FlowStep next;
    next.index = current.index + 1;
    next.probs = softmax(step.next_logits);
    next.logits = std::move(step.next_logits);
    next.alpha = step.alpha;
    next.probe_l1 = step.probe_l1;
    next.js_from_prev = js_distance(current.probs, next.probs);
    next.js_from_start = js_distance(trace.steps.front().probs, next.probs);
    const double checked =
        config.referent == JsReferent::consecutive ? next.js_from_prev : next.js_from_start;
    if (checked > config.t_js) {
      trace.stop_reason = StopReason::js_threshold;
      stopped = true;
    }
    trace.steps.push_back(std::move(next));
  }
  return trace;
}

FlowTrace run_flow(const ModelBundle& bundle, std::span<const double> x,
                   const StoppingConfig& config, std::uint64_t seed, std::string instance_id,
                   std::optional<std::size_t> gold) {
  const Vector phi = bundle.encode(x);
  return run_flow_features(bundle, phi, config, seed, std::move(instance_id), gold);
}

std::size_t flow_prediction(const FlowTrace& trace) {
  if (trace.steps.empty()) throw ContractError("flow_prediction: empty trace");
  return argmax(trace.steps.back().probs);
}

std::size_t truncated_stop_index(const FlowTrace& trace, std::size_t t_steps, double t_js,
                                 JsReferent referent) {
  if (trace.steps.empty()) throw ContractError("truncate: empty trace");
  const std::size_t last = trace.steps.size() - 1;
  if (last < t_steps && trace.stop_reason == StopReason::step_budget) {
    throw ContractError("truncate: trace ran " + std::to_string(last) +
                        " steps, fewer than the requested budget " + std::to_string(t_steps));
  }
  const std::size_t limit = std::min(t_steps, last);
  for (std::size_t i = 1; i <= limit; ++i) {
    const FlowStep& s = trace.steps[i];
    const double js = referent == JsReferent::consecutive ? s.js_from_prev : s.js_from_start;
    if (js > t_js) return i;
  }
  return limit;
}

FlowTrace truncate_trace(const FlowTrace& trace, std::size_t t_steps, double t_js,
                         JsReferent referent) {
  const std::size_t stop = truncated_stop_index(trace, t_steps, t_js, referent);
  FlowTrace out;
  out.instance_id = trace.instance_id;
  out.gold = trace.gold;
  out.steps.assign(trace.steps.begin(), trace.steps.begin() + static_cast<std::ptrdiff_t>(stop + 1));
  const FlowStep& final_step = out.steps.back();
  const double js =
      referent == JsReferent::consecutive ? final_step.js_from_prev : final_step.js_from_start;
  out.stop_reason = stop > 0 && js > t_js ? StopReason::js_threshold : StopReason::step_budget;
  return out;
}

nlohmann::json trace_to_json(const FlowTrace& trace) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    nlohmann::json step = {{"i", s.index},
                           {"probs", s.probs.values()},
                           {"s", s.score},
                           {"js_from_start", s.js_from_start},
                           {"js_from_prev", s.js_from_prev}};
    step["alpha"] = s.alpha ? nlohmann::json(*s.alpha) : nlohmann::json(nullptr);
    steps.push_back(std::move(step));
  }
  nlohmann::json j = {{"instance_id", trace.instance_id},
                      {"stop_reason", to_string(trace.stop_reason)},
                      {"steps", std::move(steps)}};
  j["gold"] = trace.gold ? nlohmann::json(*trace.gold) : nlohmann::json(nullptr);
  return j;
}

FlowTrace trace_from_json(const nlohmann::json& j) {
  FlowTrace trace;
  try {
    trace.instance_id = j.at("instance_id").get<std::string>();
    if (!j.at("gold").is_null()) trace.gold = j.at("gold").get<std::size_t>();
    trace.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    for (const auto& s : j.at("steps")) {
      FlowStep step;
      step.index = s.at("i").get<std::size_t>();
      step.probs = Vector(s.at("probs").get<std::vector<double>>());
      step.score = s.at("s").get<double>();
      step.js_from_start = s.at("js_from_start").get<double>();
      step.js_from_prev = s.at("js_from_prev").get<double>();
      if (!s.at("alpha").is_null()) step.alpha = s.at("alpha").get<double>();
      trace.steps.push_back(std::move(step));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("flow trace: ") + e.what());
  }
  return trace;
}

}  // namespace thoughtflow
