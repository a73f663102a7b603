#pragma once

// Small fixtures shared by the unit tests.

#include <cmath>
#include <vector>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/model.hpp"
#include "thoughtflow/rng.hpp"
#include "thoughtflow/trainer.hpp"

namespace tf_test {

using namespace thoughtflow;

inline Architecture small_arch(std::size_t m, std::size_t c, double dropout = 0.2) {
  Architecture a;
  a.input_dim = m;
  a.num_classes = c;
  a.feature_dim = 6;
  a.encoder_hidden = {8};
  a.label_hidden = 8;
  a.correction_hidden = 12;
  a.dropout_rate = dropout;
  return a;
}

/// Untrained bundle with random parameters everywhere.
inline ModelBundle random_bundle(std::uint64_t seed, std::size_t m = 4, std::size_t c = 3,
                                 double dropout = 0.2) {
  return ModelBundle::create(small_arch(m, c, dropout), seed);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

inline std::vector<double> random_probs(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double total = 0.0;
  for (auto& x : v) {
    x = -std::log(1.0 - uniform01(rng));
    total += x;
  }
  for (auto& x : v) x /= total;
  return v;
}

/// Benchmark data at reduced size with both phases trained. Built once per
/// test binary.
struct TrainedToy {
  Dataset data;
  ModelBundle bundle;
};

inline const TrainedToy& trained_toy() {
  static const TrainedToy toy = [] {
    auto spec = SyntheticSpec::benchmark3(21);
    spec.train_size = 800;
    spec.val_size = 300;
    spec.test_size = 300;
    TrainedToy t{generate_synthetic(spec), {}};
    Architecture arch;
    arch.input_dim = t.data.manifest.input_dim;
    arch.num_classes = t.data.manifest.num_classes;
    TrainConfig base;
    base.learning_rate = 3e-3;
    base.epochs = 15;
    base.seed = 5;
    t.bundle = train_base(t.data.split("train").records, arch, base);
    TrainConfig corr;
    corr.seed = 6;
    train_correction(t.bundle, t.data.split("train").records, corr);
    return t;
  }();
  return toy;
}

}  // namespace tf_test
