#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace thoughtflow {

struct Record {
  std::uint64_t id = 0;
  std::size_t label = 0;
  std::vector<double> x;
};

struct Split {
  std::string name;
  std::vector<Record> records;
};

struct DatasetManifest {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  /// True when records hold pre-extracted features phi(x) rather than raw inputs.
  bool features = false;
  std::vector<std::string> class_names;
  /// Free-form provenance (generator spec, Bayes accuracy, ...).
  nlohmann::json info = nlohmann::json::object();
};

class Dataset {
 public:
  DatasetManifest manifest;
  std::vector<Split> splits;

  /// Throws ContractError if no split is called `name`.
  const Split& split(const std::string& name) const;
  Split& split(const std::string& name);
  bool has_split(const std::string& name) const;

  /// Checks labels in range, record lengths, and id uniqueness across splits.
  /// Throws FormatError naming the first offending record.
  void validate() const;
};

/// Class-conditional Gaussians with diagonal covariance.
struct SyntheticSpec {
  std::size_t num_classes = 0;
  std::size_t input_dim = 0;
  std::vector<std::vector<double>> means;    // num_classes x input_dim
  std::vector<std::vector<double>> stddevs;  // num_classes x input_dim, all > 0
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
  std::uint64_t seed = 0;
  /// Class sampling weights; uniform when empty.
  std::vector<double> class_weights;

  void validate() const;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);

  /// Two-class spec with means at +-separation/2 along the first axis.
  static SyntheticSpec two_blobs(double separation, std::size_t input_dim, std::size_t train,
                                 std::size_t val, std::size_t test, std::uint64_t seed);

  /// The bundled 3-class benchmark: overlapping heteroscedastic Gaussians whose
  /// Bayes accuracy is about 0.87.
  static SyntheticSpec benchmark3(std::uint64_t seed);
};

struct BayesAccuracy {
  double value = 0.0;
  std::string method;  // "closed-form" or "monte-carlo"
};

/// Accuracy of the Bayes-optimal classifier of the generating mixture.
/// Closed form for two classes with a shared diagonal covariance; otherwise
/// a seeded Monte Carlo estimate over 200k draws.
BayesAccuracy bayes_accuracy(const SyntheticSpec& spec);

/// Deterministic given spec.seed. Splits are "train", "val", "test".
Dataset generate_synthetic(const SyntheticSpec& spec);

std::vector<std::size_t> labels_of(const std::vector<Record>& records);
std::vector<std::size_t> class_counts(const std::vector<Record>& records, std::size_t num_classes);

}  // namespace thoughtflow
