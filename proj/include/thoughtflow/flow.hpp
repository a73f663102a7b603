#pragma once

// Iterative self-correction of a prediction.
//
// Starting from the label logits z0 = f_label(phi(x)), each step moves the
// logits along the gradient of the correctness score s = f_corr([softmax(z);
// phi]) with a width chosen so that a unit probe step's L1 probability
// movement D is rescaled to delta:
//
//   alpha  = delta / (|| softmax(z) - softmax(z + g) ||_1 + eps)
//   z_next = z + alpha * g
//
// The loop stops after t_steps updates, or as soon as the Jensen-Shannon
// distance between consecutive distributions (or, optionally, between the
// current and the initial one) exceeds t_js. The violating step is kept.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "thoughtflow/model.hpp"
#include "thoughtflow/tensor.hpp"

namespace thoughtflow {

/// sqrt(ln 2): the largest Jensen-Shannon distance (natural log).
inline const double kMaxJsDistance = std::sqrt(std::log(2.0));

inline constexpr double kDefaultDelta = 0.001;
inline constexpr double kDefaultEpsilon = 1e-8;
inline constexpr std::size_t kDefaultMcSamples = 5;

enum class GradientMode { single, mcdrop };
enum class JsReferent { consecutive, initial };
enum class StopReason { step_budget, js_threshold };

std::string to_string(GradientMode mode);
std::string to_string(JsReferent referent);
std::string to_string(StopReason reason);
GradientMode parse_gradient_mode(std::string_view s);
JsReferent parse_js_referent(std::string_view s);
StopReason parse_stop_reason(std::string_view s);

struct StoppingConfig {
  std::size_t t_steps = 0;
  double t_js = kMaxJsDistance;
  double delta = kDefaultDelta;
  double epsilon = kDefaultEpsilon;
  std::size_t mc_samples = kDefaultMcSamples;
  GradientMode mode = GradientMode::single;
  JsReferent referent = JsReferent::consecutive;

  /// Rejects (never clamps) out-of-range values with a ConfigError.
  void validate() const;
};

struct FlowStep {
  std::size_t index = 0;
  Vector logits;
  Vector probs;
  /// Correctness score of this state (mean over MC samples in mcdrop mode).
  double score = 0.0;
  double js_from_start = 0.0;
  double js_from_prev = 0.0;
  /// Step width used to reach this state; absent for step 0.
  std::optional<double> alpha;
  /// L1 movement of the unit probe step that produced alpha; absent for step 0.
  std::optional<double> probe_l1;
};

struct FlowTrace {
  std::string instance_id;
  std::optional<std::size_t> gold;
  StopReason stop_reason = StopReason::step_budget;
  std::vector<FlowStep> steps;
};

/// sqrt(KL(p||m)/2 + KL(q||m)/2), m = (p+q)/2, natural log. Range [0, sqrt(ln 2)].
double js_distance(std::span<const double> p, std::span<const double> q);

/// Which dropout masks a gradient/score evaluation uses.
struct Sampling {
  GradientMode mode = GradientMode::single;
  std::size_t samples = 1;
  std::uint64_t flow_seed = 0;
  std::size_t step = 0;
};

/// Seed of MC sample `sample` at flow state `step`.
std::uint64_t mc_sample_seed(std::uint64_t flow_seed, std::size_t step, std::size_t sample);

struct ScoreGradient {
  double score = 0.0;
  Vector gradient;
};

/// d s / d z for one evaluation of the correction module under `mode`.
ScoreGradient correctness_gradient_once(const ModelBundle& bundle, std::span<const double> phi,
                                        std::span<const double> logits, ScoreMode mode);

/// Per-sample gradients: one deterministic entry in single mode, `samples`
/// seeded entries in mcdrop mode.
std::vector<ScoreGradient> correctness_gradient_samples(const ModelBundle& bundle,
                                                        std::span<const double> phi,
                                                        std::span<const double> logits,
                                                        const Sampling& sampling);

/// Mean score and mean gradient over correctness_gradient_samples(). The mean
/// is accumulated as x0 + sum(x_k - x0)/n, which is exact when all samples agree.
ScoreGradient correctness_gradient(const ModelBundle& bundle, std::span<const double> phi,
                                   std::span<const double> logits, const Sampling& sampling);

/// Score of a state, averaged like correctness_gradient(); no tape.
double state_score(const ModelBundle& bundle, std::span<const double> probs,
                   std::span<const double> phi, const Sampling& sampling);

struct StepResult {
  Vector next_logits;
  double alpha = 0.0;
  double probe_l1 = 0.0;
};

/// One update: probe = softmax(z + g), D = ||softmax(z) - probe||_1,
/// alpha = delta / (D + eps), z_next = z + alpha g.
StepResult flow_step(std::span<const double> logits, std::span<const double> gradient,
                     double delta, double epsilon);

/// Runs the flow from pre-extracted features.
FlowTrace run_flow_features(const ModelBundle& bundle, std::span<const double> phi,
                            const StoppingConfig& config, std::uint64_t seed,
                            std::string instance_id = {},
                            std::optional<std::size_t> gold = std::nullopt);

/// Encodes the raw input, then runs the flow.
FlowTrace run_flow(const ModelBundle& bundle, std::span<const double> x,
                   const StoppingConfig& config, std::uint64_t seed, std::string instance_id = {},
                   std::optional<std::size_t> gold = std::nullopt);

/// argmax of the final distribution, lowest index on ties.
std::size_t flow_prediction(const FlowTrace& trace);

/// Prefix of `trace` that run_flow would return under (t_steps, t_js).
/// Valid when `trace` ran with at least that budget and a threshold at least as loose.
FlowTrace truncate_trace(const FlowTrace& trace, std::size_t t_steps, double t_js,
                         JsReferent referent);

/// Index of the final state under (t_steps, t_js), without copying.
std::size_t truncated_stop_index(const FlowTrace& trace, std::size_t t_steps, double t_js,
                                 JsReferent referent);

/// {instance_id, gold, stop_reason, steps: [{i, probs, s, js_from_start, js_from_prev, alpha}]}
nlohmann::json trace_to_json(const FlowTrace& trace);
FlowTrace trace_from_json(const nlohmann::json& j);

}  // namespace thoughtflow
