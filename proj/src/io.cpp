#include "thoughtflow/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "thoughtflow/errors.hpp"

namespace thoughtflow {

static_assert(std::endian::native == std::endian::little, "model files assume a little-endian host");

#ifndef THOUGHTFLOW_PROVENANCE
#define THOUGHTFLOW_PROVENANCE "thoughtflow-unknown"
#endif

std::string provenance() { return THOUGHTFLOW_PROVENANCE; }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view token, std::string_view field) {
  double v = 0.0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw FormatError(std::string(field) + ": cannot parse '" + std::string(token) +
                      "' as a number");
  }
  return v;
}

namespace {

template <typename T>
T parse_integer(std::string_view token, const std::string& field) {
  T v{};
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw FormatError(field + ": cannot parse '" + std::string(token) + "' as an integer");
  }
  return v;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  return in;
}

}  // namespace

// Dataset

void write_dataset(std::ostream& out, const Dataset& ds) {
  ds.validate();
  nlohmann::json manifest = {{"input_dim", ds.manifest.input_dim},
                             {"num_classes", ds.manifest.num_classes},
                             {"features", ds.manifest.features},
                             {"class_names", ds.manifest.class_names},
                             {"info", ds.manifest.info}};
  nlohmann::json splits = nlohmann::json::array();
  for (const auto& s : ds.splits) splits.push_back({{"name", s.name}, {"size", s.records.size()}});
  manifest["splits"] = splits;
  out << kDatasetMagic << ' ' << kDatasetVersion << '\n' << manifest.dump() << '\n';
  std::string line;
  for (const auto& s : ds.splits) {
    for (const auto& r : s.records) {
      line = s.name;
      line += ',' + std::to_string(r.id) + ',' + std::to_string(r.label);
      for (double v : r.x) {
        line += ',';
        line += format_double(v);
      }
      line += '\n';
      out << line;
    }
  }
  if (!out) throw FormatError("dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: empty file, missing header");
  {
    std::istringstream header(line);
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != kDatasetMagic) throw FormatError("dataset: bad magic header '" + line + "'");
    if (version != kDatasetVersion) {
      throw FormatError("dataset: unsupported version " + std::to_string(version) +
                        " (expected " + std::to_string(kDatasetVersion) + ")");
    }
  }
  if (!std::getline(in, line)) throw FormatError("dataset: truncated file, missing manifest");
  Dataset ds;
  std::vector<std::pair<std::string, std::size_t>> expected;
  try {
    auto j = nlohmann::json::parse(line);
    ds.manifest.input_dim = j.at("input_dim").get<std::size_t>();
    ds.manifest.num_classes = j.at("num_classes").get<std::size_t>();
    ds.manifest.features = j.value("features", false);
    ds.manifest.class_names = j.value("class_names", std::vector<std::string>{});
    ds.manifest.info = j.value("info", nlohmann::json::object());
    for (const auto& s : j.at("splits")) {
      expected.emplace_back(s.at("name").get<std::string>(), s.at("size").get<std::size_t>());
      ds.splits.push_back({expected.back().first, {}});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset manifest: ") + e.what());
  }

  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "dataset line " + std::to_string(line_no);
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() < 3) throw FormatError(where + ": expected split,id,label,values");
    Record r;
    r.id = parse_integer<std::uint64_t>(fields[1], where + " id");
    r.label = parse_integer<std::size_t>(fields[2], where + " label");
    r.x.reserve(fields.size() - 3);
    for (std::size_t k = 3; k < fields.size(); ++k) {
      r.x.push_back(parse_double(fields[k], where + " value " + std::to_string(k - 3)));
    }
    auto it = std::find_if(ds.splits.begin(), ds.splits.end(),
                           [&](const Split& s) { return s.name == fields[0]; });
    if (it == ds.splits.end()) {
      throw FormatError(where + ": split '" + std::string(fields[0]) + "' not in manifest");
    }
    it->records.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (ds.splits[i].records.size() != expected[i].second) {
      throw FormatError("dataset: split '" + expected[i].first + "' has " +
                        std::to_string(ds.splits[i].records.size()) +
                        " records, manifest declares " + std::to_string(expected[i].second) +
                        " (truncated file?)");
    }
  }
  ds.validate();
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  auto out = open_out(path, std::ios::out | std::ios::trunc);
  write_dataset(out, ds);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in);
  return read_dataset(in);
}

// Model bundle

namespace {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(std::string_view s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }
  void array(const std::string& name, std::size_t rows, std::size_t cols,
             std::span<const double> values) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    bytes(name);
    pod<std::uint64_t>(rows);
    pod<std::uint64_t>(cols);
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  template <typename T>
  T pod(const std::string& field) {
    T v{};
    read(reinterpret_cast<char*>(&v), sizeof(T), field);
    return v;
  }
  std::string bytes(std::size_t n, const std::string& field) {
    if (n > (std::size_t{1} << 30)) throw FormatError("model file: implausible length for " + field);
    std::string s(n, '\0');
    read(s.data(), n, field);
    return s;
  }
  void read(char* dst, std::size_t n, const std::string& field) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw FormatError("model file truncated while reading " + field);
    }
  }

  struct Array {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
  };

  Array array(const std::string& expected_name) {
    Array a;
    const auto name_len = pod<std::uint32_t>(expected_name + " name length");
    a.name = bytes(name_len, expected_name + " name");
    if (a.name != expected_name) {
      throw FormatError("model file: expected array '" + expected_name + "', found '" + a.name +
                        "'");
    }
    a.rows = pod<std::uint64_t>(expected_name + " rows");
    a.cols = pod<std::uint64_t>(expected_name + " cols");
    if (a.rows > (1u << 20) || a.cols > (1u << 20)) {
      throw FormatError("model file: implausible shape for " + expected_name);
    }
    a.values.resize(a.rows * a.cols);
    read(reinterpret_cast<char*>(a.values.data()), a.values.size() * sizeof(double),
         expected_name + " values");
    return a;
  }

 private:
  std::istream& in_;
};

void write_layer(BinaryWriter& w, const std::string& prefix, const DenseLayer& layer) {
  w.array(prefix + ".weights", layer.weights.rows(), layer.weights.cols(), layer.weights.span());
  w.array(prefix + ".bias", layer.bias.size(), 1, layer.bias.span());
}

DenseLayer read_layer(BinaryReader& r, const std::string& prefix) {
  auto w = r.array(prefix + ".weights");
  auto b = r.array(prefix + ".bias");
  if (b.cols != 1 || b.rows != w.rows) {
    throw FormatError("model file: " + prefix + ".bias shape does not match its weights");
  }
  try {
    return DenseLayer(Matrix(w.rows, w.cols, std::move(w.values)), Vector(std::move(b.values)));
  } catch (const DimensionError& e) {
    throw FormatError("model file: " + prefix + ": " + e.what());
  }
}

}  // namespace

void write_bundle(std::ostream& out, const ModelBundle& bundle) {
  const auto& meta = bundle.meta();
  nlohmann::json j = {{"input_dim", bundle.input_dim()},
                      {"feature_dim", bundle.feature_dim()},
                      {"num_classes", bundle.num_classes()},
                      {"encoder_layers", bundle.encoder().layers().size()},
                      {"dropout_rate", bundle.dropout_rate()},
                      {"base_seed", meta.base_seed},
                      {"correction_seed", meta.correction_seed},
                      {"base_trained", meta.base_trained},
                      {"correction_trained", meta.correction_trained},
                      {"provenance", meta.provenance}};
  const std::string text = j.dump();
  BinaryWriter w(out);
  w.bytes(std::string_view(kBundleMagic, sizeof(kBundleMagic)));
  w.pod<std::uint32_t>(kBundleVersion);
  w.pod<std::uint64_t>(text.size());
  w.bytes(text);
  const auto& layers = bundle.encoder().layers();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(2 * layers.size() + 10));
  for (std::size_t i = 0; i < layers.size(); ++i) {
    write_layer(w, "encoder." + std::to_string(i), layers[i]);
  }
  write_layer(w, "label.first", bundle.label().first());
  write_layer(w, "label.second", bundle.label().second());
  write_layer(w, "correction.first", bundle.correction().first());
  write_layer(w, "correction.second", bundle.correction().second());
  write_layer(w, "correction.output", bundle.correction().output());
  if (!out) throw FormatError("model file: write failed");
}

ModelBundle read_bundle(std::istream& in) {
  BinaryReader r(in);
  char magic[sizeof(kBundleMagic)];
  r.read(magic, sizeof(magic), "magic header");
  if (std::memcmp(magic, kBundleMagic, sizeof(magic)) != 0) {
    throw FormatError("model file: bad magic header (not a thoughtflow model)");
  }
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kBundleVersion) {
    throw FormatError("model file: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kBundleVersion) + ")");
  }
  const auto text_len = r.pod<std::uint64_t>("metadata length");
  const std::string text = r.bytes(text_len, "metadata");
  nlohmann::json j;
  std::size_t encoder_layers = 0;
  std::size_t input_dim = 0;
  double dropout_rate = 0.0;
  BundleMetadata meta;
  try {
    j = nlohmann::json::parse(text);
    input_dim = j.at("input_dim").get<std::size_t>();
    encoder_layers = j.at("encoder_layers").get<std::size_t>();
    dropout_rate = j.at("dropout_rate").get<double>();
    meta.base_seed = j.at("base_seed").get<std::uint64_t>();
    meta.correction_seed = j.at("correction_seed").get<std::uint64_t>();
    meta.base_trained = j.at("base_trained").get<bool>();
    meta.correction_trained = j.at("correction_trained").get<bool>();
    meta.provenance = j.at("provenance").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model file metadata: ") + e.what());
  }
  const auto count = r.pod<std::uint32_t>("array count");
  if (count != 2 * encoder_layers + 10) {
    throw FormatError("model file: array count " + std::to_string(count) +
                      " inconsistent with encoder_layers " + std::to_string(encoder_layers));
  }
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i < encoder_layers; ++i) {
    layers.push_back(read_layer(r, "encoder." + std::to_string(i)));
  }
  auto l1 = read_layer(r, "label.first");
  auto l2 = read_layer(r, "label.second");
  auto c1 = read_layer(r, "correction.first");
  auto c2 = read_layer(r, "correction.second");
  auto c3 = read_layer(r, "correction.output");
  try {
    Encoder encoder(input_dim, std::move(layers));
    LabelModule label(std::move(l1), std::move(l2));
    const std::size_t c = label.num_classes();
    const std::size_t d = label.feature_dim();
    CorrectionModule correction(c, d, std::move(c1), std::move(c2), std::move(c3), dropout_rate);
    ModelBundle bundle(std::move(encoder), std::move(label), std::move(correction), meta);
    if (bundle.feature_dim() != j.at("feature_dim").get<std::size_t>() ||
        bundle.num_classes() != j.at("num_classes").get<std::size_t>()) {
      throw FormatError("model file: metadata dimensions disagree with parameter arrays");
    }
    return bundle;
  } catch (const DimensionError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle) {
  auto out = open_out(path, std::ios::out | std::ios::binary | std::ios::trunc);
  write_bundle(out, bundle);
}

ModelBundle load_bundle(const std::filesystem::path& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  return read_bundle(in);
}

}  // namespace thoughtflow
