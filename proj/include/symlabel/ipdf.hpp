#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "symlabel/network.hpp"
#include "symlabel/rng.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/so3.hpp"

namespace symlabel {

using ImplicitModel = Network<float>;

struct OcclusionConfig {
  double probability = 0.8;
  double min_fraction = 0.1;
  double max_fraction = 0.5;
  void validate() const;
};

struct PreprocessResult {
  std::vector<float> image;  // planar RGB in [0, 1], out_size x out_size
  bool occluded = false;
  double occluded_fraction = 0.0;
};

/// Square crop around the mask bounding box (side crop_size, or 1.1x the
/// larger box side when crop_size <= 0), background zeroed, bilinear resize to
/// out_size. Throws kData on an empty mask.
std::vector<float> crop_frame(const RgbdFrame& frame, int crop_size, int out_size);
/// Zeroes a random axis-aligned rectangle covering a fraction in
/// [min_fraction, max_fraction] of the image, with the configured probability.
void apply_occlusion(std::span<float> image, int size, const OcclusionConfig& config, Rng& rng, bool* occluded = nullptr,
                     double* fraction = nullptr);
PreprocessResult preprocess(const RgbdFrame& frame, int crop_size, int out_size, const OcclusionConfig& occlusion,
                            Rng& rng);

struct OrientationDistribution {
  std::vector<Rotation> rotations;
  std::vector<double> log_probs;  // log density, so sum exp(log_probs) * cell_volume = 1
  double cell_volume = 0.0;
  int grid_level = -1;

  double total_mass() const;
  double probability(std::size_t i) const;  // density * cell volume
};

/// log P_i = F_i - logsumexp(F) - log(cell volume).
OrientationDistribution normalize(std::span<const double> values, const EquivolumetricGrid& grid);
double log_sum_exp(std::span<const double> values);

/// -log P(gt) with gt appended to the grid as an extra cell of volume
/// pi^2/(N+1). When `grad` is given, the parameter gradient is added to it.
template <class T>
T nll_loss(const Network<T>& net, std::span<const T> image, const Rotation& gt, const std::vector<Rotation>& grid,
           std::vector<T>* grad = nullptr);

/// log P(R | I) for each R in `queries`, each appended to the grid on its own.
std::vector<double> log_likelihoods(std::span<const double> grid_logits, std::span<const double> query_logits);

enum class LabelMode { kPseudo, kSingle, kAnalytic };
std::string to_string(LabelMode m);
LabelMode label_mode_from_string(const std::string& s);

struct TrainingConfig {
  int epochs = 50;
  int iterations_per_epoch = 200;
  int batch_size = 64;
  int train_grid_level = 2;
  int eval_grid_level = 3;
  double learning_rate = 1e-3;
  std::string lr_schedule = "cosine";  // constant | cosine
  double lr_final_fraction = 0.1;      // cosine end point relative to learning_rate
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool rotate_grid = true;  // fresh random rotation of the train grid every iteration
  OcclusionConfig occlusion;
  int crop_size = 0;
  int patience = 5;  // epochs without validation improvement before stopping; 0 = off
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainingConfig& c);
/// Unknown keys are rejected.
TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig base = {});

/// One preprocessed frame with its training targets.
struct TrainingSample {
  std::string frame_id;
  std::vector<float> image;          // unoccluded crop
  std::vector<Rotation> labels;      // sampled uniformly per visit
};

struct ValidationSample {
  std::string frame_id;
  std::vector<float> image;
  std::vector<Rotation> gt;          // LLH is averaged over these
};

struct TrainingHistory {
  std::vector<double> epoch_loss;
  std::vector<double> val_llh;
  int best_epoch = -1;
  bool stopped_early = false;
};

/// Adam over mean batch NLL. Each iteration draws batch_size samples
/// uniformly, one label per sample, occludes with the configured augmentation
/// and evaluates the loss against a freshly rotated train grid. Validation
/// LLH uses the eval grid. With patience > 0 the parameters of the best
/// validation epoch are returned.
TrainingHistory train(ImplicitModel& model, const std::vector<TrainingSample>& train_set,
                      const std::vector<ValidationSample>& val_set, const TrainingConfig& config,
                      const std::function<void(int epoch, double loss, double val_llh)>& on_epoch = {});

/// Mean LLH over samples and their GT rotations on the given grid.
double mean_llh(const ImplicitModel& model, const std::vector<ValidationSample>& samples,
                const std::vector<Rotation>& grid);

OrientationDistribution predict_distribution(const ImplicitModel& model, std::span<const float> image, int grid_level);
OrientationDistribution predict_distribution(const ImplicitModel& model, std::span<const float> image,
                                             const EquivolumetricGrid& grid);

struct ModeSearchConfig {
  int init_grid_level = 2;
  int top_k = 8;
  int steps = 50;
  double step_size = 0.05;  // radians
  double backtrack = 0.5;
  int max_backtracks = 12;
};

struct ModeResult {
  Rotation rotation;
  double logit = 0.0;
  std::vector<std::vector<double>> trajectories;  // F after every accepted step, per seed
};

/// Riemannian gradient ascent on F from the top_k grid cells.
ModeResult predict_mode(const ImplicitModel& model, std::span<const float> image, const ModeSearchConfig& config = {});

/// "IPDF", u32 version, u32 header length, JSON header, f32 parameters.
void write_model(const std::filesystem::path& path, const ImplicitModel& model, const nlohmann::json& meta = {});
ImplicitModel read_model(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace symlabel
