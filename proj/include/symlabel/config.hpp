#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "symlabel/ipdf.hpp"
#include "symlabel/labeler.hpp"
#include "symlabel/network.hpp"
#include "symlabel/symmetry.hpp"

namespace symlabel {

inline constexpr const char* kVersion = "0.1.0";

struct EvalConfig {
  int grid_level = 3;
  double threshold = 1e-3;
  int symmetry_samples = 200;  // per continuous axis
};

/// Every tunable in one document. Sections: seed, labeler (with global and
/// icp), labels_per_frame, symmetry, network, training, eval. The global
/// seed is copied into training.seed on resolve.
struct Config {
  std::uint64_t seed = 1;
  LabelerConfig labeler;
  int labels_per_frame = 5;
  SymmetryOptions symmetry;
  NetworkSpec network;
  TrainingConfig training;
  EvalConfig eval;
};

nlohmann::json to_json(const Config& c);
/// Overlays `j` on `base`. Unknown keys (at any level) throw kInvalidArgument.
Config config_from_json(const nlohmann::json& j, Config base = {});
/// Defaults, then the optional file, then SYMLABEL_SEED when set.
Config resolve_config(const std::optional<std::filesystem::path>& path);

/// 64-bit FNV-1a, as 16 hex digits.
std::string content_hash(std::string_view bytes);
std::string file_hash(const std::filesystem::path& path);

/// Run record written beside an output: command line, resolved config and
/// its hash, input and output file hashes.
struct Manifest {
  std::string command;
  nlohmann::json config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

nlohmann::json to_json(const Manifest& m);
/// Writes <first output>.manifest.json, or manifest.json inside a directory
/// output. Returns the manifest path.
std::filesystem::path write_manifest(const Manifest& m);

}  // namespace symlabel
