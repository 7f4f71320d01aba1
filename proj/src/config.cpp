#include "symlabel/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "symlabel/error.hpp"

namespace symlabel {
namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

template <class T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

void overlay(const json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) fail(ErrorKind::kInvalidArgument, "config section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const auto it = setters.find(key);
    const std::string where = section.empty() ? key : section + "." + key;
    if (it == setters.end()) fail(ErrorKind::kInvalidArgument, "unknown config key '" + where + "'");
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kInvalidArgument, "config key '" + where + "': " + e.what());
    }
  }
}

json to_json(const GlobalRegistrationConfig& c) {
  return {{"max_corr_dist", c.max_corr_dist}, {"tuple_scale", c.tuple_scale},
          {"max_tuples", c.max_tuples},       {"trials_per_corr", c.trials_per_corr},
          {"gnc_iters", c.gnc_iters},         {"anneal_every", c.anneal_every},
          {"anneal_factor", c.anneal_factor}, {"min_correspondences", c.min_correspondences},
          {"hub_k", c.hub_k}};
}

json to_json(const IcpConfig& c) {
  return {{"max_corr_dist", c.max_corr_dist}, {"max_iter", c.max_iter}, {"convergence", c.convergence}};
}

json to_json(const LabelerConfig& c) {
  return {{"attempts", c.attempts},
          {"accept_score", c.accept_score},
          {"voxel_size", c.voxel_size},
          {"fpfh_radius", c.fpfh_radius},
          {"normal_neighbours", c.normal_neighbours},
          {"fpfh_min_normal_dot", c.fpfh_min_normal_dot},
          {"icp_corr_voxels", c.icp_corr_voxels},
          {"silhouette_penalty", c.silhouette_penalty},
          {"global", to_json(c.global)},
          {"icp", to_json(c.icp)}};
}

json to_json(const SymmetryOptions& o) {
  return {{"grid_level", o.grid_level},     {"tolerance", o.tolerance},
          {"sample_count", o.sample_count}, {"ring_min", o.ring_min},
          {"axis_tolerance_deg", o.axis_tolerance_deg}};
}

json to_json(const EvalConfig& e) {
  return {{"grid_level", e.grid_level}, {"threshold", e.threshold}, {"symmetry_samples", e.symmetry_samples}};
}

}  // namespace

json to_json(const Config& c) {
  json training = to_json(c.training);
  training.erase("seed");
  return {{"seed", c.seed},
          {"labeler", to_json(c.labeler)},
          {"labels_per_frame", c.labels_per_frame},
          {"symmetry", to_json(c.symmetry)},
          {"network", to_json(c.network)},
          {"training", training},
          {"eval", to_json(c.eval)}};
}

Config config_from_json(const json& j, Config c) {
  LabelerConfig& l = c.labeler;
  overlay(j, "",
          {{"seed", set(c.seed)},
           {"labels_per_frame", set(c.labels_per_frame)},
           {"labeler",
            [&](const json& v) {
              overlay(v, "labeler",
                      {{"attempts", set(l.attempts)},
                       {"accept_score", set(l.accept_score)},
                       {"voxel_size", set(l.voxel_size)},
                       {"fpfh_radius", set(l.fpfh_radius)},
                       {"normal_neighbours", set(l.normal_neighbours)},
                       {"fpfh_min_normal_dot", set(l.fpfh_min_normal_dot)},
                       {"icp_corr_voxels", set(l.icp_corr_voxels)},
                       {"silhouette_penalty", set(l.silhouette_penalty)},
                       {"global",
                        [&](const json& g) {
                          overlay(g, "labeler.global",
                                  {{"max_corr_dist", set(l.global.max_corr_dist)},
                                   {"tuple_scale", set(l.global.tuple_scale)},
                                   {"max_tuples", set(l.global.max_tuples)},
                                   {"trials_per_corr", set(l.global.trials_per_corr)},
                                   {"gnc_iters", set(l.global.gnc_iters)},
                                   {"anneal_every", set(l.global.anneal_every)},
                                   {"anneal_factor", set(l.global.anneal_factor)},
                                   {"min_correspondences", set(l.global.min_correspondences)},
                                   {"hub_k", set(l.global.hub_k)}});
                        }},
                       {"icp", [&](const json& g) {
                          overlay(g, "labeler.icp",
                                  {{"max_corr_dist", set(l.icp.max_corr_dist)},
                                   {"max_iter", set(l.icp.max_iter)},
                                   {"convergence", set(l.icp.convergence)}});
                        }}});
            }},
           {"symmetry",
            [&](const json& v) {
              overlay(v, "symmetry",
                      {{"grid_level", set(c.symmetry.grid_level)},
                       {"tolerance", set(c.symmetry.tolerance)},
                       {"sample_count", set(c.symmetry.sample_count)},
                       {"ring_min", set(c.symmetry.ring_min)},
                       {"axis_tolerance_deg", set(c.symmetry.axis_tolerance_deg)}});
            }},
           {"network",
            [&](const json& v) {
              overlay(v, "network",
                      {{"extractor", set(c.network.extractor)},
                       {"image_size", set(c.network.image_size)},
                       {"conv_channels", set(c.network.conv_channels)},
                       {"feature_dim", set(c.network.feature_dim)},
                       {"hidden", set(c.network.hidden)},
                       {"n_freq", set(c.network.n_freq)}});
            }},
           {"training",
            [&](const json& v) {
              if (v.is_object() && v.contains("seed"))
                fail(ErrorKind::kInvalidArgument, "unknown config key 'training.seed' (use the global seed)");
              c.training = training_config_from_json(v, c.training);
            }},
           {"eval", [&](const json& v) {
              overlay(v, "eval",
                      {{"grid_level", set(c.eval.grid_level)},
                       {"threshold", set(c.eval.threshold)},
                       {"symmetry_samples", set(c.eval.symmetry_samples)}});
            }}});
  c.training.seed = c.seed;
  require(c.labels_per_frame >= 1, "labels_per_frame must be positive");
  require(c.labeler.attempts >= 1 && c.labeler.accept_score > 0.0, "labeler attempts and accept_score must be positive");
  require(c.eval.grid_level >= 0 && c.eval.grid_level <= kMaxGridLevel, "eval.grid_level out of range");
  require(c.eval.threshold > 0.0 && c.eval.symmetry_samples >= 1, "eval threshold and symmetry_samples must be positive");
  c.network.validate();
  c.training.validate();
  return c;
}

Config resolve_config(const std::optional<std::filesystem::path>& path) {
  Config c;
  if (path) {
    std::ifstream is(*path);
    if (!is) fail(ErrorKind::kIo, "cannot read config " + path->string());
    json j;
    try {
      j = json::parse(is);
    } catch (const json::exception& e) {
      fail(ErrorKind::kInvalidArgument, path->string() + ": " + e.what());
    }
    c = config_from_json(j, c);
  }
  if (const char* env = std::getenv("SYMLABEL_SEED"); env && *env) {
    try {
      std::size_t used = 0;
      c.seed = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, std::string("SYMLABEL_SEED is not an unsigned integer: ") + env);
    }
  }
  c.training.seed = c.seed;
  return c;
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(fs::relative(e.path(), path));
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += f.generic_string() + ":" + file_hash(path / f) + "\n";
    return content_hash(acc);
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return content_hash(ss.str());
}

json to_json(const Manifest& m) {
  json j;
  j["version"] = kVersion;
  j["command"] = m.command;
  j["config"] = m.config;
  j["config_hash"] = content_hash(m.config.dump());
  j["inputs"] = json::array();
  for (const auto& p : m.inputs) j["inputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}});
  j["outputs"] = json::array();
  for (const auto& p : m.outputs) j["outputs"].push_back({{"path", p.string()}, {"hash", file_hash(p)}});
  return j;
}

std::filesystem::path write_manifest(const Manifest& m) {
  require(!m.outputs.empty(), "manifest needs at least one output");
  const std::filesystem::path& first = m.outputs.front();
  const std::filesystem::path path =
      std::filesystem::is_directory(first) ? first / "manifest.json" : std::filesystem::path(first.string() + ".manifest.json");
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << to_json(m).dump(2) << "\n";
  return path;
}

}  // namespace symlabel
