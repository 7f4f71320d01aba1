#include "symlabel/network.hpp"

#include <cmath>

#include "symlabel/error.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {

void NetworkSpec::validate() const {
  require(extractor == "conv" || extractor == "pool", "unknown extractor '" + extractor + "' (conv|pool)");
  require(image_size >= 8 && image_size % 8 == 0, "image_size must be a positive multiple of 8");
  if (extractor == "conv") {
    require(!conv_channels.empty(), "conv extractor needs at least one layer");
    require(image_size % (1 << conv_channels.size()) == 0, "image_size must be divisible by 2^conv layers");
    for (int c : conv_channels) require(c > 0, "conv channel counts must be positive");
  }
  require(feature_dim > 0, "feature_dim must be positive");
  require(!hidden.empty(), "head needs at least one hidden layer");
  for (int h : hidden) require(h > 0, "hidden widths must be positive");
  require(n_freq >= 1 && n_freq <= 12, "n_freq must be in [1, 12]");
}

nlohmann::json to_json(const NetworkSpec& spec) {
  return {{"extractor", spec.extractor},         {"image_size", spec.image_size},
          {"conv_channels", spec.conv_channels}, {"feature_dim", spec.feature_dim},
          {"hidden", spec.hidden},               {"n_freq", spec.n_freq}};
}

NetworkSpec network_spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.extractor = j.at("extractor").get<std::string>();
  s.image_size = j.at("image_size").get<int>();
  s.conv_channels = j.at("conv_channels").get<std::vector<int>>();
  s.feature_dim = j.at("feature_dim").get<int>();
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.n_freq = j.at("n_freq").get<int>();
  s.validate();
  return s;
}

namespace {

// 3x3, stride 2, zero padding 1. `in` is C x (H*W) with pixel index y*W + x.
template <class M>
M im2col(const M& in, int channels, int size) {
  const int out = size / 2;
  M cols = M::Zero(channels * 9, out * out);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int r = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < out; ++oy) {
          const int y = 2 * oy + ky - 1;
          if (y < 0 || y >= size) continue;
          for (int ox = 0; ox < out; ++ox) {
            const int x = 2 * ox + kx - 1;
            if (x < 0 || x >= size) continue;
            cols(r, oy * out + ox) = in(c, y * size + x);
          }
        }
      }
  return cols;
}

template <class M>
M col2im(const M& cols, int channels, int size) {
  const int out = size / 2;
  M in = M::Zero(channels, size * size);
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int r = c * 9 + ky * 3 + kx;
        for (int oy = 0; oy < out; ++oy) {
          const int y = 2 * oy + ky - 1;
          if (y < 0 || y >= size) continue;
          for (int ox = 0; ox < out; ++ox) {
            const int x = 2 * ox + kx - 1;
            if (x < 0 || x >= size) continue;
            in(c, y * size + x) += cols(r, oy * out + ox);
          }
        }
      }
  return in;
}

}  // namespace

template <class T>
Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> encode_rotations(const std::vector<Rotation>& rotations,
                                                                  int n_freq) {
  Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic> e(encoding_size(n_freq), static_cast<Eigen::Index>(rotations.size()));
  for (std::size_t i = 0; i < rotations.size(); ++i) {
    positional_encode<T>(rotations[i].matrix(), n_freq, std::span<T>(e.col(static_cast<Eigen::Index>(i)).data(), e.rows()));
  }
  return e;
}

template <class T>
Network<T>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t offset = 0;
  auto add = [&](const std::string& name, int rows, int cols) {
    LayerSlot s{name, rows, cols, offset, offset + static_cast<std::size_t>(rows) * cols};
    offset = s.bias + static_cast<std::size_t>(rows);
    layers_.push_back(s);
  };
  int flat = 0;
  if (spec_.extractor == "conv") {
    int channels = 3, size = spec_.image_size;
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      conv_sizes_.push_back(size);
      add("conv" + std::to_string(i), spec_.conv_channels[i], channels * 9);
      channels = spec_.conv_channels[i];
      size /= 2;
    }
    flat = channels * size * size;
  } else {
    const int cells = spec_.image_size / 8;
    flat = 3 * cells * cells;
  }
  add("dense", spec_.feature_dim, flat);
  first_head_ = layers_.size();
  int in = spec_.feature_dim + spec_.encoding_dim();
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    add("head" + std::to_string(i), spec_.hidden[i], in);
    in = spec_.hidden[i];
  }
  add("out", 1, in);
  params_.assign(offset, T(0));
}

template <class T>
const LayerSlot& Network<T>::slot(const std::string& name) const {
  for (const auto& s : layers_)
    if (s.name == name) return s;
  fail(ErrorKind::kInvalidArgument, "no layer named " + name);
}

template <class T>
void Network<T>::init_random(std::uint64_t seed) {
  Rng rng(seed);
  std::fill(params_.begin(), params_.end(), T(0));
  for (const auto& s : layers_) {
    const double stddev = std::sqrt(2.0 / s.cols);
    for (std::size_t i = 0; i < static_cast<std::size_t>(s.rows) * s.cols; ++i) {
      params_[s.weight + i] = static_cast<T>(stddev * rng.normal());
    }
  }
}

template <class T>
typename Network<T>::Vec Network<T>::extract(std::span<const T> image, ExtractCache* cache) const {
  require(image.size() == static_cast<std::size_t>(spec_.input_values()), "image has the wrong size");
  const int s = spec_.image_size;
  Vec flat;
  if (spec_.extractor == "conv") {
    Mat act = ConstMatMap(image.data(), s * s, 3).transpose();
    int channels = 3;
    for (std::size_t i = 0; i < spec_.conv_channels.size(); ++i) {
      const LayerSlot& l = layers_[i];
      Mat cols = im2col(act, channels, conv_sizes_[i]);
      Mat out = weight(l) * cols;
      out.colwise() += bias(l);
      act = out.cwiseMax(T(0));
      channels = l.rows;
      if (cache) {
        cache->inputs.push_back(std::move(cols));
        cache->outputs.push_back(act);
      }
    }
    flat = Eigen::Map<const Vec>(act.data(), act.size());
  } else {
    const int cells = s / 8;
    flat = Vec::Zero(3 * cells * cells);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x)
          flat[(c * cells + y / 8) * cells + x / 8] += image[static_cast<std::size_t>(c) * s * s + y * s + x] / T(64);
  }
  const LayerSlot& d = layers_[first_head_ - 1];
  Vec feature = (weight(d) * flat + bias(d)).cwiseMax(T(0));
  if (cache) {
    cache->flat = flat;
    cache->feature = feature;
  }
  return feature;
}

template <class T>
void Network<T>::extract_backward(const ExtractCache& cache, const Vec& grad_feature, std::span<T> grad) const {
  require(grad.size() == params_.size(), "gradient buffer size");
  const LayerSlot& d = layers_[first_head_ - 1];
  const Vec gz = grad_feature.cwiseProduct((cache.feature.array() > T(0)).matrix().template cast<T>());
  MatMap(grad.data() + d.weight, d.rows, d.cols).noalias() += gz * cache.flat.transpose();
  VecMap(grad.data() + d.bias, d.rows) += gz;
  if (spec_.extractor != "conv") return;

  Vec gflat = weight(d).transpose() * gz;
  const std::size_t n_conv = spec_.conv_channels.size();
  Mat gact = Eigen::Map<const Mat>(gflat.data(), cache.outputs.back().rows(), cache.outputs.back().cols());
  for (std::size_t k = n_conv; k-- > 0;) {
    const LayerSlot& l = layers_[k];
    const Mat gout = gact.cwiseProduct((cache.outputs[k].array() > T(0)).matrix().template cast<T>());
    MatMap(grad.data() + l.weight, l.rows, l.cols).noalias() += gout * cache.inputs[k].transpose();
    const Vec gb = gout.rowwise().sum();  // see head_backward
    VecMap(grad.data() + l.bias, l.rows) += gb;
    if (k == 0) break;
    const Mat gcols = weight(l).transpose() * gout;
    gact = col2im(gcols, l.cols / 9, conv_sizes_[k]);
  }
}

template <class T>
typename Network<T>::Mat Network<T>::project_rotations(const Mat& encodings) const {
  const LayerSlot& l = first_slot();
  require(encodings.rows() == spec_.encoding_dim(), "encoding has the wrong size");
  return weight(l).rightCols(spec_.encoding_dim()) * encodings;
}

template <class T>
typename Network<T>::Vec Network<T>::head_offset(const Vec& feature) const {
  const LayerSlot& l = first_slot();
  return weight(l).leftCols(spec_.feature_dim) * feature + bias(l);
}

template <class T>
typename Network<T>::RowVec Network<T>::head(const Mat& projected, const Vec& offset, HeadCache* cache) const {
  HeadCache local;
  HeadCache& c = cache ? *cache : local;
  c.act.resize(layers_.size() - first_head_ - 1);
  Mat& a0 = c.act[0];
  a0 = (projected.colwise() + offset).cwiseMax(T(0));
  for (std::size_t k = first_head_ + 1; k + 1 < layers_.size(); ++k) {
    const LayerSlot& l = layers_[k];
    Mat& a = c.act[k - first_head_];
    a.noalias() = weight(l) * c.act[k - first_head_ - 1];
    a = (a.colwise() + bias(l)).cwiseMax(T(0));
  }
  const LayerSlot& o = layers_.back();
  RowVec out;
  out.noalias() = weight(o) * c.act.back();
  out.array() += params_[o.bias];
  return out;
}

template <class T>
typename Network<T>::Mat Network<T>::head_backward(const HeadCache& cache, const RowVec& grad_logits,
                                                   std::span<T> grad) const {
  const bool accumulate = !grad.empty();
  require(!accumulate || grad.size() == params_.size(), "gradient buffer size");
  const LayerSlot& o = layers_.back();
  if (accumulate) {
    MatMap(grad.data() + o.weight, 1, o.cols).noalias() += grad_logits * cache.act.back().transpose();
    grad[o.bias] += grad_logits.sum();
  }
  // ReLU mask from the activations: act > 0 exactly where the pre-activation was.
  Mat gz;
  gz.noalias() = weight(o).transpose() * grad_logits;
  gz = gz.cwiseProduct((cache.act.back().array() > T(0)).matrix().template cast<T>());
  Mat ga;
  for (std::size_t h = cache.act.size() - 1; h > 0; --h) {
    const LayerSlot& l = layers_[first_head_ + h];
    if (accumulate) {
      MatMap(grad.data() + l.weight, l.rows, l.cols).noalias() += gz * cache.act[h - 1].transpose();
      // Evaluated first: a lazy row sum takes a different summation path
      // depending on the alignment of the destination.
      const Vec gb = gz.rowwise().sum();
      VecMap(grad.data() + l.bias, l.rows) += gb;
    }
    ga.noalias() = weight(l).transpose() * gz;
    gz = ga.cwiseProduct((cache.act[h - 1].array() > T(0)).matrix().template cast<T>());
  }
  return gz;
}

template <class T>
typename Network<T>::Vec Network<T>::first_layer_backward(const Mat& grad_z1, const Mat& encodings,
                                                          const Vec& feature, std::span<T> grad) const {
  require(grad.size() == params_.size(), "gradient buffer size");
  const LayerSlot& l = first_slot();
  const Vec g = grad_z1.rowwise().sum();
  MatMap w(grad.data() + l.weight, l.rows, l.cols);
  w.leftCols(spec_.feature_dim).noalias() += g * feature.transpose();
  if (encodings.cols() > 0) w.rightCols(spec_.encoding_dim()).noalias() += grad_z1 * encodings.transpose();
  VecMap(grad.data() + l.bias, l.rows) += g;
  return weight(l).leftCols(spec_.feature_dim).transpose() * g;
}

template <class T>
void Network<T>::rotation_weight_backward(const Mat& grad_z1, const Mat& encodings, std::span<T> grad) const {
  require(grad.size() == params_.size(), "gradient buffer size");
  const LayerSlot& l = first_slot();
  MatMap(grad.data() + l.weight, l.rows, l.cols).rightCols(spec_.encoding_dim()).noalias() +=
      grad_z1 * encodings.transpose();
}

template <class T>
std::vector<T> Network<T>::forward(std::span<const T> image, const std::vector<Rotation>& rotations) const {
  return logits(extract(image), rotations);
}

template <class T>
std::vector<T> Network<T>::logits(const Vec& feature, const std::vector<Rotation>& rotations, std::size_t chunk) const {
  std::vector<T> out(rotations.size());
  const Vec offset = head_offset(feature);
  for (std::size_t begin = 0; begin < rotations.size(); begin += chunk) {
    const std::size_t end = std::min(rotations.size(), begin + chunk);
    const std::vector<Rotation> part(rotations.begin() + static_cast<std::ptrdiff_t>(begin),
                                     rotations.begin() + static_cast<std::ptrdiff_t>(end));
    const RowVec l = head(project_rotations(encode_rotations<T>(part, spec_.n_freq)), offset);
    for (std::size_t i = begin; i < end; ++i) out[i] = l[static_cast<Eigen::Index>(i - begin)];
  }
  return out;
}

template <class T>
T Network<T>::logit_and_gradient(const Vec& feature, const Eigen::Matrix3d& m, Eigen::Matrix3d& grad_m) const {
  const int enc = spec_.encoding_dim();
  Mat e(enc, 1);
  positional_encode<T>(m, spec_.n_freq, std::span<T>(e.data(), static_cast<std::size_t>(enc)));
  HeadCache cache;
  const RowVec l = head(project_rotations(e), head_offset(feature), &cache);
  RowVec one(1);
  one[0] = T(1);
  const Mat gz1 = head_backward(cache, one, {});
  const Vec ge = weight(first_slot()).rightCols(enc).transpose() * gz1;
  grad_m.setZero();
  for (int f = 0; f < spec_.n_freq; ++f) {
    const double scale = std::ldexp(1.0, f);
    for (int k = 0; k < 9; ++k) {
      const double v = scale * m(k / 3, k % 3);
      grad_m(k / 3, k % 3) += scale * (std::cos(v) * static_cast<double>(ge[18 * f + 2 * k]) -
                                       std::sin(v) * static_cast<double>(ge[18 * f + 2 * k + 1]));
    }
  }
  return l[0];
}

template Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic> encode_rotations<float>(const std::vector<Rotation>&, int);
template Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic> encode_rotations<double>(const std::vector<Rotation>&, int);
template class Network<float>;
template class Network<double>;

}  // namespace symlabel
