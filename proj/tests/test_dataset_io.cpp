#include <doctest.h>

#include <cmath>
#include <sstream>

#include "support.hpp"
#include "thoughtflow/dataset.hpp"
#include "thoughtflow/errors.hpp"
#include "thoughtflow/io.hpp"

using namespace thoughtflow;
using tf_test::random_bundle;
using tf_test::random_vector;

namespace {

std::string dataset_bytes(const Dataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

std::string bundle_bytes(const ModelBundle& b) {
  std::ostringstream out(std::ios::binary);
  write_bundle(out, b);
  return out.str();
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("synthetic: two blobs at +-3 have Bayes accuracy Phi(3)") {
  const auto spec = SyntheticSpec::two_blobs(6.0, 2, 1000, 0, 0, 1);
  const auto bayes = bayes_accuracy(spec);
  CHECK(bayes.method == "closed-form");
  CHECK(std::abs(bayes.value - 0.5 * std::erfc(-3.0 / std::sqrt(2.0))) < 1e-12);
  CHECK(bayes.value == doctest::Approx(0.9987).epsilon(1e-4));
  const Dataset ds = generate_synthetic(spec);
  CHECK(ds.manifest.info.at("bayes_accuracy").get<double>() == bayes.value);
}

TEST_CASE("synthetic: unequal priors shift the closed form") {
  auto spec = SyntheticSpec::two_blobs(2.0, 3, 100, 0, 0, 1);
  spec.class_weights = {0.8, 0.2};
  // Threshold of the likelihood ratio moves by ln(pi0/pi1)/Delta along the mean axis.
  const double delta = 2.0, shift = std::log(4.0) / delta;
  auto phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  const double expected = 0.8 * phi(delta / 2 + shift) + 0.2 * phi(delta / 2 - shift);
  CHECK(std::abs(bayes_accuracy(spec).value - expected) < 1e-12);
}

TEST_CASE("synthetic: benchmark Bayes accuracy sits in the overlapping regime") {
  const auto bayes = bayes_accuracy(SyntheticSpec::benchmark3(1));
  CHECK(bayes.method == "monte-carlo");
  CHECK(bayes.value > 0.70);
  CHECK(bayes.value < 0.90);
}

TEST_CASE("synthetic: degenerate weights put every record in class 0") {
  auto spec = SyntheticSpec::benchmark3(2);
  spec.class_weights = {1.0, 0.0, 0.0};
  spec.train_size = 300;
  spec.val_size = spec.test_size = 0;
  const Dataset ds = generate_synthetic(spec);
  for (const auto& r : ds.split("train").records) CHECK(r.label == 0);
}

TEST_CASE("synthetic: class frequencies within three sigma of the weights") {
  auto spec = SyntheticSpec::benchmark3(3);
  spec.class_weights = {0.5, 0.3, 0.2};
  spec.train_size = 5000;
  spec.val_size = spec.test_size = 0;
  const auto counts = class_counts(generate_synthetic(spec).split("train").records, 3);
  for (std::size_t k = 0; k < 3; ++k) {
    const double p = spec.class_weights[k];
    const double sigma = std::sqrt(5000.0 * p * (1.0 - p));
    CHECK(std::abs(static_cast<double>(counts[k]) - 5000.0 * p) < 3.0 * sigma);
  }
}

TEST_CASE("synthetic: same seed gives a bit-identical dataset") {
  const auto spec = SyntheticSpec::benchmark3(4);
  CHECK(dataset_bytes(generate_synthetic(spec)) == dataset_bytes(generate_synthetic(spec)));
  CHECK(dataset_bytes(generate_synthetic(spec)) !=
        dataset_bytes(generate_synthetic(SyntheticSpec::benchmark3(5))));
}

TEST_CASE("synthetic: invalid specs are rejected") {
  auto spec = SyntheticSpec::benchmark3(1);
  spec.stddevs[1][2] = 0.0;
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
  spec = SyntheticSpec::benchmark3(1);
  spec.train_size = spec.val_size = spec.test_size = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = SyntheticSpec::benchmark3(1);
  spec.class_weights = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("synthetic: spec json round trip") {
  auto spec = SyntheticSpec::benchmark3(6);
  spec.class_weights = {0.2, 0.3, 0.5};
  const auto back = SyntheticSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
  CHECK(dataset_bytes(generate_synthetic(back)) == dataset_bytes(generate_synthetic(spec)));
}

TEST_CASE("dataset file: save, load, save is byte-identical") {
  auto spec = SyntheticSpec::benchmark3(7);
  spec.train_size = 50;
  spec.val_size = 20;
  spec.test_size = 30;
  const std::string first = dataset_bytes(generate_synthetic(spec));
  std::istringstream in(first);
  const Dataset loaded = read_dataset(in);
  CHECK(dataset_bytes(loaded) == first);
  CHECK(loaded.split("val").records.size() == 20);
}

TEST_CASE("dataset file: corruption is reported") {
  auto spec = SyntheticSpec::benchmark3(8);
  spec.train_size = 10;
  spec.val_size = spec.test_size = 5;
  const std::string bytes = dataset_bytes(generate_synthetic(spec));

  std::istringstream truncated(bytes.substr(0, bytes.size() * 2 / 3));
  CHECK_THROWS_AS(read_dataset(truncated), FormatError);

  std::istringstream wrong_version("thoughtflow-dataset 9\n{}\n");
  CHECK(message_of([&] { read_dataset(wrong_version); }).find("version") != std::string::npos);

  std::istringstream not_ours("hello\n");
  CHECK_THROWS_AS(read_dataset(not_ours), FormatError);
}

TEST_CASE("dataset: label outside the class range names the record") {
  Dataset ds;
  ds.manifest.input_dim = 2;
  ds.manifest.num_classes = 3;
  ds.splits.push_back({"train", {{0, 1, {0.0, 1.0}}, {17, 5, {1.0, 2.0}}}});
  const std::string msg = message_of([&] { ds.validate(); });
  CHECK(msg.find("17") != std::string::npos);
  CHECK(msg.find("label 5") != std::string::npos);

  std::ostringstream out;
  Dataset ok = ds;
  ok.splits[0].records[1].label = 2;
  write_dataset(out, ok);
  std::string text = out.str();
  text.replace(text.rfind(",17,2,"), 6, ",17,5,");
  std::istringstream in(text);
  CHECK(message_of([&] { read_dataset(in); }).find("17") != std::string::npos);
}

TEST_CASE("dataset: duplicate ids across splits are rejected") {
  Dataset ds;
  ds.manifest.input_dim = 1;
  ds.manifest.num_classes = 2;
  ds.splits.push_back({"train", {{3, 0, {0.0}}}});
  ds.splits.push_back({"test", {{3, 1, {1.0}}}});
  CHECK_THROWS_AS(ds.validate(), FormatError);
}

TEST_CASE("model file: round trip reproduces bytes and forward outputs") {
  const ModelBundle b = random_bundle(9);
  const std::string first = bundle_bytes(b);
  std::istringstream in(first);
  const ModelBundle loaded = read_bundle(in);
  CHECK(bundle_bytes(loaded) == first);
  CHECK(loaded.backbone_checksum() == b.backbone_checksum());
  CHECK(loaded.correction_checksum() == b.correction_checksum());
  Rng rng(10);
  for (int k = 0; k < 10; ++k) {
    const auto x = random_vector(rng, 4);
    const Vector phi = b.encode(x);
    CHECK(loaded.encode(x) == phi);
    const Thought t = b.label_logits(phi);
    CHECK(loaded.label_logits(phi).logits == t.logits);
    CHECK(loaded.correctness_score(t.probs, phi, ScoreMode::sampled_with(4)) ==
          b.correctness_score(t.probs, phi, ScoreMode::sampled_with(4)));
  }
}

TEST_CASE("model file: every truncation point is an explicit error") {
  const std::string bytes = bundle_bytes(random_bundle(11));
  for (std::size_t cut : {std::size_t{0}, std::size_t{4}, std::size_t{10}, std::size_t{30},
                          bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    CHECK_THROWS_AS(read_bundle(in), FormatError);
  }
  std::istringstream mid(bytes.substr(0, bytes.size() / 2));
  CHECK(message_of([&] { read_bundle(mid); }).find("truncated while reading") != std::string::npos);
}

TEST_CASE("model file: magic and version are checked") {
  std::string bytes = bundle_bytes(random_bundle(12));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream a(bad_magic);
  CHECK(message_of([&] { read_bundle(a); }).find("magic") != std::string::npos);
  std::string bad_version = bytes;
  bad_version[8] = 7;
  std::istringstream b(bad_version);
  CHECK(message_of([&] { read_bundle(b); }).find("version") != std::string::npos);
}

TEST_CASE("doubles round trip through text") {
  Rng rng(13);
  for (int k = 0; k < 1000; ++k) {
    const double v = random_vector(rng, 1, 1e3)[0] * std::pow(10.0, static_cast<int>(uniform01(rng) * 40) - 20);
    CHECK(parse_double(format_double(v), "v") == v);
  }
  CHECK_THROWS_AS(parse_double("1.5x", "field"), FormatError);
}
