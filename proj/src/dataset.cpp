#include "thoughtflow/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_set>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/rng.hpp"

namespace thoughtflow {

const Split& Dataset::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ContractError("dataset has no split named '" + name + "'");
}

Split& Dataset::split(const std::string& name) {
  for (auto& s : splits) {
    if (s.name == name) return s;
  }
  throw ContractError("dataset has no split named '" + name + "'");
}

bool Dataset::has_split(const std::string& name) const {
  return std::any_of(splits.begin(), splits.end(), [&](const Split& s) { return s.name == name; });
}

void Dataset::validate() const {
  if (manifest.input_dim == 0) throw FormatError("manifest: input_dim must be positive");
  if (manifest.num_classes < 2) throw FormatError("manifest: num_classes must be at least 2");
  if (!manifest.class_names.empty() && manifest.class_names.size() != manifest.num_classes) {
    throw FormatError("manifest: class_names has " + std::to_string(manifest.class_names.size()) +
                      " entries for " + std::to_string(manifest.num_classes) + " classes");
  }
  std::unordered_set<std::uint64_t> seen;
  for (const auto& s : splits) {
    for (std::size_t i = 0; i < s.records.size(); ++i) {
      const Record& r = s.records[i];
      const std::string where =
          "record " + std::to_string(r.id) + " (split '" + s.name + "', position " +
          std::to_string(i) + ")";
      if (r.label >= manifest.num_classes) {
        throw FormatError(where + ": label " + std::to_string(r.label) + " outside [0, " +
                          std::to_string(manifest.num_classes) + ")");
      }
      if (r.x.size() != manifest.input_dim) {
        throw FormatError(where + ": has " + std::to_string(r.x.size()) + " values, expected " +
                          std::to_string(manifest.input_dim));
      }
      for (double v : r.x) {
        if (!std::isfinite(v)) throw FormatError(where + ": non-finite value");
      }
      if (!seen.insert(r.id).second) throw FormatError(where + ": duplicate id");
    }
  }
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic spec: need at least two classes");
  if (input_dim == 0) throw ConfigError("synthetic spec: input_dim must be positive");
  if (train_size == 0 && val_size == 0 && test_size == 0) {
    throw ConfigError("synthetic spec: all split sizes are zero");
  }
  if (means.size() != num_classes || stddevs.size() != num_classes) {
    throw ConfigError("synthetic spec: need one mean and one stddev row per class");
  }
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (means[k].size() != input_dim || stddevs[k].size() != input_dim) {
      throw ConfigError("synthetic spec: class " + std::to_string(k) +
                        " mean/stddev length differs from input_dim");
    }
    for (double s : stddevs[k]) {
      if (!(s > 0.0) || !std::isfinite(s)) {
        throw ConfigError("synthetic spec: class " + std::to_string(k) +
                          " covariance is not positive definite");
      }
    }
  }
  if (!class_weights.empty()) {
    if (class_weights.size() != num_classes) {
      throw ConfigError("synthetic spec: class_weights length differs from num_classes");
    }
    double total = 0.0;
    for (double w : class_weights) {
      if (!(w >= 0.0)) throw ConfigError("synthetic spec: class weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw ConfigError("synthetic spec: class weights are all zero");
  }
}

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_classes", num_classes}, {"input_dim", input_dim},   {"means", means},
          {"stddevs", stddevs},         {"train_size", train_size}, {"val_size", val_size},
          {"test_size", test_size},     {"seed", seed},             {"class_weights", class_weights}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.num_classes = j.at("num_classes").get<std::size_t>();
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.means = j.at("means").get<std::vector<std::vector<double>>>();
    s.stddevs = j.at("stddevs").get<std::vector<std::vector<double>>>();
    s.train_size = j.value("train_size", std::size_t{0});
    s.val_size = j.value("val_size", std::size_t{0});
    s.test_size = j.value("test_size", std::size_t{0});
    s.seed = j.value("seed", std::uint64_t{0});
    s.class_weights = j.value("class_weights", std::vector<double>{});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticSpec SyntheticSpec::two_blobs(double separation, std::size_t input_dim, std::size_t train,
                                       std::size_t val, std::size_t test, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 2;
  s.input_dim = input_dim;
  s.means.assign(2, std::vector<double>(input_dim, 0.0));
  s.means[0][0] = -separation / 2.0;
  s.means[1][0] = separation / 2.0;
  s.stddevs.assign(2, std::vector<double>(input_dim, 1.0));
  s.train_size = train;
  s.val_size = val;
  s.test_size = test;
  s.seed = seed;
  return s;
}

SyntheticSpec SyntheticSpec::benchmark3(std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 3;
  s.input_dim = 6;
  const double radius = 1.6;
  s.means.assign(3, std::vector<double>(s.input_dim, 0.0));
  for (std::size_t k = 0; k < 3; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / 3.0;
    s.means[k][0] = radius * std::cos(angle);
    s.means[k][1] = radius * std::sin(angle);
  }
  s.stddevs = {{1.0, 1.0, 1.0, 1.0, 1.0, 1.0},
               {1.4, 0.7, 1.2, 0.8, 1.0, 1.0},
               {0.7, 1.3, 0.8, 1.2, 1.0, 1.0}};
  s.train_size = 2000;
  s.val_size = 1000;
  s.test_size = 2000;
  s.seed = seed;
  return s;
}

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<double> normalized_weights(const SyntheticSpec& spec) {
  std::vector<double> w = spec.class_weights;
  if (w.empty()) w.assign(spec.num_classes, 1.0);
  double total = 0.0;
  for (double v : w) total += v;
  for (double& v : w) v /= total;
  return w;
}

double log_density(const SyntheticSpec& spec, std::size_t k, const std::vector<double>& x) {
  double acc = 0.0;
  for (std::size_t j = 0; j < spec.input_dim; ++j) {
    const double s = spec.stddevs[k][j];
    const double u = (x[j] - spec.means[k][j]) / s;
    acc += -0.5 * u * u - std::log(s);
  }
  return acc;
}

}  // namespace

BayesAccuracy bayes_accuracy(const SyntheticSpec& spec) {
  spec.validate();
  const auto prior = normalized_weights(spec);
  if (spec.num_classes == 2 && spec.stddevs[0] == spec.stddevs[1] && prior[0] > 0.0 &&
      prior[1] > 0.0) {
    double mahalanobis2 = 0.0;
    for (std::size_t j = 0; j < spec.input_dim; ++j) {
      const double u = (spec.means[1][j] - spec.means[0][j]) / spec.stddevs[0][j];
      mahalanobis2 += u * u;
    }
    const double delta = std::sqrt(mahalanobis2);
    if (delta == 0.0) return {std::max(prior[0], prior[1]), "closed-form"};
    const double log_ratio = std::log(prior[0] / prior[1]);
    const double acc = prior[0] * normal_cdf(delta / 2.0 + log_ratio / delta) +
                       prior[1] * normal_cdf(delta / 2.0 - log_ratio / delta);
    return {acc, "closed-form"};
  }

  constexpr std::size_t kDraws = 200000;
  Rng rng(derive_seed(spec.seed, 0xbae5));
  std::discrete_distribution<std::size_t> pick_class(prior.begin(), prior.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> log_prior(spec.num_classes);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    log_prior[k] = prior[k] > 0.0 ? std::log(prior[k]) : -INFINITY;
  }
  std::vector<double> x(spec.input_dim);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < kDraws; ++n) {
    const std::size_t k = pick_class(rng);
    for (std::size_t j = 0; j < spec.input_dim; ++j) {
      x[j] = spec.means[k][j] + spec.stddevs[k][j] * normal(rng);
    }
    std::size_t best = 0;
    double best_score = -INFINITY;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
      const double score = log_prior[c] + log_density(spec, c, x);
      if (score > best_score) {
        best_score = score;
        best = c;
      }
    }
    correct += best == k ? 1 : 0;
  }
  return {static_cast<double>(correct) / static_cast<double>(kDraws), "monte-carlo"};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto prior = normalized_weights(spec);
  Dataset ds;
  ds.manifest.input_dim = spec.input_dim;
  ds.manifest.num_classes = spec.num_classes;
  const auto bayes = bayes_accuracy(spec);
  ds.manifest.info = {{"generator", "gaussian-diagonal"},
                      {"spec", spec.to_json()},
                      {"bayes_accuracy", bayes.value},
                      {"bayes_accuracy_method", bayes.method}};

  Rng rng(spec.seed);
  std::discrete_distribution<std::size_t> pick_class(prior.begin(), prior.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uint64_t next_id = 0;
  const std::pair<const char*, std::size_t> sizes[] = {
      {"train", spec.train_size}, {"val", spec.val_size}, {"test", spec.test_size}};
  for (const auto& [name, size] : sizes) {
    Split split{name, {}};
    split.records.reserve(size);
    for (std::size_t n = 0; n < size; ++n) {
      Record r;
      r.id = next_id++;
      r.label = pick_class(rng);
      r.x.resize(spec.input_dim);
      for (std::size_t j = 0; j < spec.input_dim; ++j) {
        r.x[j] = spec.means[r.label][j] + spec.stddevs[r.label][j] * normal(rng);
      }
      split.records.push_back(std::move(r));
    }
    ds.splits.push_back(std::move(split));
  }
  return ds;
}

std::vector<std::size_t> labels_of(const std::vector<Record>& records) {
  std::vector<std::size_t> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.label);
  return out;
}

std::vector<std::size_t> class_counts(const std::vector<Record>& records, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& r : records) {
    if (r.label < num_classes) ++counts[r.label];
  }
  return counts;
}

}  // namespace thoughtflow
