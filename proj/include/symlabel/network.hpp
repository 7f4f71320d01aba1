#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "symlabel/so3.hpp"

namespace symlabel {

/// Architecture of the implicit model. The extractor maps a planar RGB image
/// (3 x image_size x image_size) to a feature vector; the head is an MLP over
/// [feature, positional encoding of R] with a scalar output.
///
/// Extractors: "conv" = stride-2 3x3 convolutions with the given channel
/// counts, then a dense layer; "pool" = 8x8 average pooling, then a dense
/// layer.
struct NetworkSpec {
  std::string extractor = "conv";
  int image_size = 64;
  std::vector<int> conv_channels = {16, 32, 32};
  int feature_dim = 64;
  std::vector<int> hidden = {64, 64};
  int n_freq = kDefaultFrequencies;

  void validate() const;
  int input_values() const { return 3 * image_size * image_size; }
  int encoding_dim() const { return encoding_size(n_freq); }
};

nlohmann::json to_json(const NetworkSpec& spec);
NetworkSpec network_spec_from_json(const nlohmann::json& j);

/// One weight matrix (rows x cols, column-major) plus bias, as offsets into
/// the flat parameter vector.
struct LayerSlot {
  std::string name;
  int rows = 0, cols = 0;
  std::size_t weight = 0, bias = 0;
};

template <class T>
class Network {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<Vec>;
  using ConstVecMap = Eigen::Map<const Vec>;

  explicit Network(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerSlot>& layers() const { return layers_; }
  std::size_t param_count() const { return params_.size(); }
  std::vector<T>& params() { return params_; }
  const std::vector<T>& params() const { return params_; }

  /// He-normal weights, zero biases.
  void init_random(std::uint64_t seed);

  struct ExtractCache {
    std::vector<Mat> inputs;   // per conv layer: im2col matrix
    std::vector<Mat> outputs;  // per conv layer: post-ReLU activations (C x HW)
    Vec flat;                  // input of the dense layer
    Vec feature;               // post-ReLU feature
  };

  Vec extract(std::span<const T> image, ExtractCache* cache = nullptr) const;
  /// Accumulates extractor gradients for dL/dfeature into grad.
  void extract_backward(const ExtractCache& cache, const Vec& grad_feature, std::span<T> grad) const;

  /// Rotation part of the first head layer, W_r * E, for encodings E
  /// (encoding_dim x n).
  Mat project_rotations(const Mat& encodings) const;
  /// Feature part of the first head layer, W_f * f + b.
  Vec head_offset(const Vec& feature) const;

  struct HeadCache {
    std::vector<Mat> act;  // post-ReLU activations of every hidden layer
  };

  /// Logits for the columns of `projected` (h1 x n), shifted by `offset`.
  RowVec head(const Mat& projected, const Vec& offset, HeadCache* cache = nullptr) const;
  /// Back-propagates dL/dlogits through the head above the first layer and
  /// returns dL/dz1 (h1 x n). Gradients of the upper layers are accumulated.
  Mat head_backward(const HeadCache& cache, const RowVec& grad_logits, std::span<T> grad) const;
  /// First-layer gradients for dL/dz1 of columns with encodings E and feature
  /// f. Returns dL/df.
  Vec first_layer_backward(const Mat& grad_z1, const Mat& encodings, const Vec& feature, std::span<T> grad) const;

  /// Rotation-weight gradient of the first layer only: grad_z1 * E^T.
  void rotation_weight_backward(const Mat& grad_z1, const Mat& encodings, std::span<T> grad) const;

  /// Logits for a list of rotations (features computed once).
  std::vector<T> forward(std::span<const T> image, const std::vector<Rotation>& rotations) const;
  /// Logits for given features; evaluated in chunks of `chunk` rotations.
  std::vector<T> logits(const Vec& feature, const std::vector<Rotation>& rotations, std::size_t chunk = 8192) const;
  /// F(R) and dF/dM for the rotation matrix entries.
  T logit_and_gradient(const Vec& feature, const Eigen::Matrix3d& m, Eigen::Matrix3d& grad_m) const;

  const LayerSlot& slot(const std::string& name) const;

 private:
  NetworkSpec spec_;
  std::vector<LayerSlot> layers_;
  std::vector<int> conv_sizes_;  // spatial size of each conv input
  std::vector<T> params_;

  ConstMatMap weight(const LayerSlot& s) const { return ConstMatMap(params_.data() + s.weight, s.rows, s.cols); }
  ConstVecMap bias(const LayerSlot& s) const { return ConstVecMap(params_.data() + s.bias, s.rows); }
  const LayerSlot& first_slot() const { return layers_[first_head_]; }
  std::size_t first_head_ = 0;
};

/// Encodings of rotations as columns (encoding_dim x n).
template <class T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> encode_rotations(const std::vector<Rotation>& rotations,
                                                                  int n_freq);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace symlabel
