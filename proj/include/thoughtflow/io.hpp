#pragma once

// On-disk formats.
//
// Dataset (text, lossless):
//   line 1   "thoughtflow-dataset 1"
//   line 2   manifest as single-line JSON: input_dim, num_classes, features,
//            class_names, info, splits [{name, size}] in file order
//   line 3+  one record per line: split,id,label,x_0,...,x_{m-1}
//   Doubles use the shortest representation that round-trips exactly.
//
// Model bundle (binary, little-endian):
//   "TFLOWMDL" | u32 version | u64 n | n bytes of metadata JSON |
//   u32 array count | per array: u32 name length, name, u64 rows, u64 cols,
//   rows*cols IEEE-754 doubles.
//   Arrays appear in declared order: encoder layers, label module, correction module.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "thoughtflow/dataset.hpp"
#include "thoughtflow/model.hpp"

namespace thoughtflow {

inline constexpr char kDatasetMagic[] = "thoughtflow-dataset";
inline constexpr int kDatasetVersion = 1;
inline constexpr char kBundleMagic[8] = {'T', 'F', 'L', 'O', 'W', 'M', 'D', 'L'};
inline constexpr std::uint32_t kBundleVersion = 1;

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

void write_bundle(std::ostream& out, const ModelBundle& bundle);
ModelBundle read_bundle(std::istream& in);
void save_bundle(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Shortest round-trip decimal form of `v`.
std::string format_double(double v);
/// Parses a full token as a double; throws FormatError naming `field` otherwise.
double parse_double(std::string_view token, std::string_view field);

/// Provenance string baked in at configure time.
std::string provenance();

}  // namespace thoughtflow
