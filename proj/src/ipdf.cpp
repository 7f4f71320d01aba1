#include "symlabel/ipdf.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>

#include "symlabel/binary_io.hpp"
#include "symlabel/error.hpp"

namespace symlabel {
namespace {

constexpr double kPi2 = std::numbers::pi * std::numbers::pi;

double log_cell_volume(std::size_t cells) { return std::log(kPi2 / static_cast<double>(cells)); }

template <class T>
double lse(const Eigen::Matrix<T, 1, Eigen::Dynamic>& v) {
  const double m = static_cast<double>(v.maxCoeff());
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) s += std::exp(static_cast<double>(v[i]) - m);
  return m + std::log(s);
}

}  // namespace

void OcclusionConfig::validate() const {
  require(probability >= 0.0 && probability <= 1.0, "occlusion probability must be in [0, 1]");
  require(min_fraction > 0.0 && min_fraction <= max_fraction && max_fraction < 1.0,
          "occlusion fraction range must satisfy 0 < min <= max < 1");
}

std::vector<float> crop_frame(const RgbdFrame& frame, int crop_size, int out_size) {
  require(out_size > 0, "out_size must be positive");
  const Mask& mask = frame.mask;
  require(frame.rgb.width == mask.width && frame.rgb.height == mask.height, "rgb and mask sizes differ");
  int u0 = mask.width, u1 = -1, v0 = mask.height, v1 = -1;
  for (int v = 0; v < mask.height; ++v)
    for (int u = 0; u < mask.width; ++u)
      if (mask.at(u, v)) {
        u0 = std::min(u0, u);
        u1 = std::max(u1, u);
        v0 = std::min(v0, v);
        v1 = std::max(v1, v);
      }
  if (u1 < 0) fail(ErrorKind::kData, frame.frame_id + ": empty mask, nothing to crop");
  const double side = crop_size > 0 ? crop_size : 1.1 * std::max(u1 - u0 + 1, v1 - v0 + 1);
  const double cu = 0.5 * (u0 + u1), cv = 0.5 * (v0 + v1);
  const double x0 = cu - 0.5 * side + 0.5, y0 = cv - 0.5 * side + 0.5;  // continuous coords, pixel centers at +0.5
  const double scale = side / out_size;

  auto sample = [&](int u, int v, int c) -> double {
    if (u < 0 || v < 0 || u >= mask.width || v >= mask.height || !mask.at(u, v)) return 0.0;
    return frame.rgb.px(u, v)[c] / 255.0;
  };
  const std::size_t plane = static_cast<std::size_t>(out_size) * out_size;
  std::vector<float> out(3 * plane, 0.0f);
  for (int j = 0; j < out_size; ++j) {
    const double y = y0 + (j + 0.5) * scale - 1.0;  // back to pixel-center coordinates
    const int yi = static_cast<int>(std::floor(y));
    const double fy = y - yi;
    for (int i = 0; i < out_size; ++i) {
      const double x = x0 + (i + 0.5) * scale - 1.0;
      const int xi = static_cast<int>(std::floor(x));
      const double fx = x - xi;
      for (int c = 0; c < 3; ++c) {
        const double val = (1 - fy) * ((1 - fx) * sample(xi, yi, c) + fx * sample(xi + 1, yi, c)) +
                           fy * ((1 - fx) * sample(xi, yi + 1, c) + fx * sample(xi + 1, yi + 1, c));
        out[c * plane + static_cast<std::size_t>(j) * out_size + i] = static_cast<float>(val);
      }
    }
  }
  return out;
}

void apply_occlusion(std::span<float> image, int size, const OcclusionConfig& config, Rng& rng, bool* occluded,
                     double* fraction) {
  config.validate();
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  require(image.size() == 3 * plane, "image size mismatch");
  if (occluded) *occluded = false;
  if (fraction) *fraction = 0.0;
  if (!(rng.uniform() < config.probability)) return;

  const double area = static_cast<double>(plane);
  const double f = rng.uniform(config.min_fraction, config.max_fraction);
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  int w = std::clamp(static_cast<int>(std::lround(std::sqrt(f * area * aspect))), 1, size);
  // Integer sides: keep the covered fraction inside the configured range.
  const int h_lo = static_cast<int>(std::ceil(config.min_fraction * area / w - 1e-9));
  const int h_hi = static_cast<int>(std::floor(config.max_fraction * area / w + 1e-9));
  int h = static_cast<int>(std::lround(f * area / w));
  h = std::clamp(h, std::max(1, h_lo), std::min(size, h_hi));
  if (h > size || h * w < config.min_fraction * area - 1e-9) {
    w = size;
    h = std::clamp(static_cast<int>(std::lround(f * size)), 1, size);
  }
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - w + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(size - h + 1)));
  for (int c = 0; c < 3; ++c)
    for (int y = y0; y < y0 + h; ++y)
      std::fill_n(image.begin() + static_cast<std::ptrdiff_t>(c * plane + static_cast<std::size_t>(y) * size + x0), w, 0.0f);
  if (occluded) *occluded = true;
  if (fraction) *fraction = static_cast<double>(w) * h / area;
}

PreprocessResult preprocess(const RgbdFrame& frame, int crop_size, int out_size, const OcclusionConfig& occlusion,
                            Rng& rng) {
  PreprocessResult r;
  r.image = crop_frame(frame, crop_size, out_size);
  apply_occlusion(r.image, out_size, occlusion, rng, &r.occluded, &r.occluded_fraction);
  return r;
}

double OrientationDistribution::total_mass() const {
  double s = 0.0;
  for (double l : log_probs) s += std::exp(l) * cell_volume;
  return s;
}

double OrientationDistribution::probability(std::size_t i) const { return std::exp(log_probs[i]) * cell_volume; }

double log_sum_exp(std::span<const double> values) {
  require(!values.empty(), "log_sum_exp of an empty set");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

OrientationDistribution normalize(std::span<const double> values, const EquivolumetricGrid& grid) {
  require(values.size() == grid.size(), "normalize: value count differs from grid size");
  OrientationDistribution d;
  d.rotations = grid.rotations;
  d.cell_volume = grid.cell_volume;
  d.grid_level = grid.level;
  const double z = log_sum_exp(values) + std::log(grid.cell_volume);
  d.log_probs.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) d.log_probs[i] = values[i] - z;
  return d;
}

std::vector<double> log_likelihoods(std::span<const double> grid_logits, std::span<const double> query_logits) {
  const double lse_grid = log_sum_exp(grid_logits);
  const double log_v = log_cell_volume(grid_logits.size() + 1);
  std::vector<double> out;
  out.reserve(query_logits.size());
  for (double q : query_logits) {
    const double m = std::max(lse_grid, q);
    const double l = m + std::log(std::exp(lse_grid - m) + std::exp(q - m));
    out.push_back(q - l - log_v);
  }
  return out;
}

template <class T>
T nll_loss(const Network<T>& net, std::span<const T> image, const Rotation& gt, const std::vector<Rotation>& grid,
           std::vector<T>* grad) {
  using Net = Network<T>;
  typename Net::ExtractCache ec;
  const typename Net::Vec f = net.extract(image, grad ? &ec : nullptr);
  std::vector<Rotation> all = grid;
  all.push_back(gt);
  const typename Net::Mat e = encode_rotations<T>(all, net.spec().n_freq);
  typename Net::HeadCache hc;
  const typename Net::RowVec logits = net.head(net.project_rotations(e), net.head_offset(f), grad ? &hc : nullptr);
  const double z = lse(logits);
  const std::size_t n = all.size();
  const double loss = z - static_cast<double>(logits[static_cast<Eigen::Index>(n - 1)]) + log_cell_volume(n);
  if (grad) {
    require(grad->size() == net.param_count(), "gradient buffer size");
    typename Net::RowVec g(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) g[i] = static_cast<T>(std::exp(static_cast<double>(logits[i]) - z));
    g[static_cast<Eigen::Index>(n - 1)] -= T(1);
    const typename Net::Mat gz1 = net.head_backward(hc, g, *grad);
    const typename Net::Vec gf = net.first_layer_backward(gz1, e, f, *grad);
    net.extract_backward(ec, gf, *grad);
  }
  return static_cast<T>(loss);
}

template float nll_loss<float>(const Network<float>&, std::span<const float>, const Rotation&,
                               const std::vector<Rotation>&, std::vector<float>*);
template double nll_loss<double>(const Network<double>&, std::span<const double>, const Rotation&,
                                 const std::vector<Rotation>&, std::vector<double>*);

std::string to_string(LabelMode m) {
  switch (m) {
    case LabelMode::kPseudo: return "pseudo";
    case LabelMode::kSingle: return "single";
    case LabelMode::kAnalytic: return "analytic";
  }
  return "pseudo";
}

LabelMode label_mode_from_string(const std::string& s) {
  if (s == "pseudo") return LabelMode::kPseudo;
  if (s == "single") return LabelMode::kSingle;
  if (s == "analytic") return LabelMode::kAnalytic;
  fail(ErrorKind::kInvalidArgument, "unknown label mode '" + s + "' (pseudo|single|analytic)");
}

void TrainingConfig::validate() const {
  require(epochs >= 1 && iterations_per_epoch >= 1 && batch_size >= 1, "epochs, iterations and batch must be positive");
  require(train_grid_level >= 0 && train_grid_level <= kMaxGridLevel, "train_grid_level out of range");
  require(eval_grid_level >= 0 && eval_grid_level <= kMaxGridLevel, "eval_grid_level out of range");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(lr_schedule == "constant" || lr_schedule == "cosine", "lr_schedule must be constant or cosine");
  require(lr_final_fraction >= 0.0 && lr_final_fraction <= 1.0, "lr_final_fraction must be in [0, 1]");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam betas in [0, 1)");
  require(adam_epsilon > 0.0, "adam_epsilon must be positive");
  require(patience >= 0, "patience must be non-negative");
  occlusion.validate();
}

nlohmann::json to_json(const TrainingConfig& c) {
  return {{"epochs", c.epochs},
          {"iterations_per_epoch", c.iterations_per_epoch},
          {"batch_size", c.batch_size},
          {"train_grid_level", c.train_grid_level},
          {"eval_grid_level", c.eval_grid_level},
          {"learning_rate", c.learning_rate},
          {"lr_schedule", c.lr_schedule},
          {"lr_final_fraction", c.lr_final_fraction},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"rotate_grid", c.rotate_grid},
          {"occlusion_probability", c.occlusion.probability},
          {"occlusion_min_fraction", c.occlusion.min_fraction},
          {"occlusion_max_fraction", c.occlusion.max_fraction},
          {"crop_size", c.crop_size},
          {"patience", c.patience},
          {"seed", c.seed}};
}

TrainingConfig training_config_from_json(const nlohmann::json& j, TrainingConfig c) {
  require(j.is_object(), "training config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "iterations_per_epoch") c.iterations_per_epoch = value.get<int>();
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "train_grid_level") c.train_grid_level = value.get<int>();
      else if (key == "eval_grid_level") c.eval_grid_level = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "lr_schedule") c.lr_schedule = value.get<std::string>();
      else if (key == "lr_final_fraction") c.lr_final_fraction = value.get<double>();
      else if (key == "adam_beta1") c.adam_beta1 = value.get<double>();
      else if (key == "adam_beta2") c.adam_beta2 = value.get<double>();
      else if (key == "adam_epsilon") c.adam_epsilon = value.get<double>();
      else if (key == "rotate_grid") c.rotate_grid = value.get<bool>();
      else if (key == "occlusion_probability") c.occlusion.probability = value.get<double>();
      else if (key == "occlusion_min_fraction") c.occlusion.min_fraction = value.get<double>();
      else if (key == "occlusion_max_fraction") c.occlusion.max_fraction = value.get<double>();
      else if (key == "crop_size") c.crop_size = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else fail(ErrorKind::kInvalidArgument, "unknown training config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kInvalidArgument, "training config key '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

double mean_llh(const ImplicitModel& model, const std::vector<ValidationSample>& samples,
                const std::vector<Rotation>& grid) {
  require(!samples.empty(), "mean_llh needs samples");
  double total = 0.0;
  for (const auto& s : samples) {
    require(!s.gt.empty(), "validation sample without ground truth: " + s.frame_id);
    const ImplicitModel::Vec f = model.extract(s.image);
    const std::vector<float> gl = model.logits(f, grid);
    const std::vector<float> ql = model.logits(f, s.gt);
    const std::vector<double> g(gl.begin(), gl.end()), q(ql.begin(), ql.end());
    const std::vector<double> ll = log_likelihoods(g, q);
    total += std::accumulate(ll.begin(), ll.end(), 0.0) / static_cast<double>(ll.size());
  }
  return total / static_cast<double>(samples.size());
}

TrainingHistory train(ImplicitModel& model, const std::vector<TrainingSample>& train_set,
                      const std::vector<ValidationSample>& val_set, const TrainingConfig& config,
                      const std::function<void(int, double, double)>& on_epoch) {
  using Mat = ImplicitModel::Mat;
  using Vec = ImplicitModel::Vec;
  using RowVec = ImplicitModel::RowVec;
  config.validate();
  require(!train_set.empty(), "training set is empty");
  for (const auto& s : train_set) {
    require(!s.labels.empty(), "training sample without labels: " + s.frame_id);
    require(s.image.size() == static_cast<std::size_t>(model.spec().input_values()),
            "training image size does not match the model: " + s.frame_id);
  }

  const EquivolumetricGrid base = generate_grid(config.train_grid_level);
  const std::size_t n = base.size();
  const EquivolumetricGrid val_grid = generate_grid(val_set.empty() ? 0 : config.eval_grid_level);
  const double log_v = log_cell_volume(n + 1);
  const int size = model.spec().image_size;
  const int h1 = model.spec().hidden.front();
  const std::size_t np = model.param_count();

  std::vector<float> grad(np), m(np, 0.0f), v(np, 0.0f);
  std::vector<float> best_params;
  double best_llh = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  TrainingHistory history;
  const long total_steps = static_cast<long>(config.epochs) * config.iterations_per_epoch;
  long step = 0;
  std::vector<float> image;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (int it = 0; it < config.iterations_per_epoch; ++it, ++step) {
      Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(step)));
      std::vector<Rotation> grid = base.rotations;
      if (config.rotate_grid) {
        const Rotation r = random_rotation(rng);
        for (auto& g : grid) g = r * g;
      }
      const Mat e_grid = encode_rotations<float>(grid, model.spec().n_freq);
      const Mat p_grid = model.project_rotations(e_grid);
      std::fill(grad.begin(), grad.end(), 0.0f);
      Mat g_grid = Mat::Zero(h1, static_cast<Eigen::Index>(n));
      Mat p_all(h1, static_cast<Eigen::Index>(n + 1));
      p_all.leftCols(static_cast<Eigen::Index>(n)) = p_grid;

      double batch_loss = 0.0;
      for (int b = 0; b < config.batch_size; ++b) {
        const TrainingSample& s = train_set[rng.below(train_set.size())];
        const Rotation& label = s.labels[rng.below(s.labels.size())];
        image = s.image;
        apply_occlusion(image, size, config.occlusion, rng);

        ImplicitModel::ExtractCache ec;
        const Vec f = model.extract(image, &ec);
        const Mat e_gt = encode_rotations<float>({label}, model.spec().n_freq);
        p_all.col(static_cast<Eigen::Index>(n)) = model.project_rotations(e_gt);
        ImplicitModel::HeadCache hc;
        const RowVec logits = model.head(p_all, model.head_offset(f), &hc);
        const double z = lse(logits);
        batch_loss += z - static_cast<double>(logits[static_cast<Eigen::Index>(n)]) + log_v;

        RowVec g = (logits.array() - static_cast<float>(z)).exp().matrix();
        g[static_cast<Eigen::Index>(n)] -= 1.0f;
        const Mat gz1 = model.head_backward(hc, g, grad);
        const Vec gf = model.first_layer_backward(gz1, Mat(), f, grad);
        model.rotation_weight_backward(gz1.col(static_cast<Eigen::Index>(n)), e_gt, grad);
        g_grid += gz1.leftCols(static_cast<Eigen::Index>(n));
        model.extract_backward(ec, gf, grad);
      }
      model.rotation_weight_backward(g_grid, e_grid, grad);
      loss_sum += batch_loss / config.batch_size;

      const double t = static_cast<double>(step + 1);
      double lr = config.learning_rate;
      if (config.lr_schedule == "cosine") {
        const double progress = static_cast<double>(step) / static_cast<double>(std::max(1L, total_steps - 1));
        lr *= config.lr_final_fraction +
              (1.0 - config.lr_final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      }
      const double c1 = 1.0 - std::pow(config.adam_beta1, t);
      const double c2 = 1.0 - std::pow(config.adam_beta2, t);
      const float b1 = static_cast<float>(config.adam_beta1), b2 = static_cast<float>(config.adam_beta2);
      const float inv_b = 1.0f / static_cast<float>(config.batch_size);
      std::vector<float>& p = model.params();
      for (std::size_t k = 0; k < np; ++k) {
        const float gk = grad[k] * inv_b;
        m[k] = b1 * m[k] + (1.0f - b1) * gk;
        v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
        const double mh = m[k] / c1, vh = v[k] / c2;
        p[k] -= static_cast<float>(lr * mh / (std::sqrt(vh) + config.adam_epsilon));
      }
    }
    const double epoch_loss = loss_sum / config.iterations_per_epoch;
    if (!std::isfinite(epoch_loss)) fail(ErrorKind::kNumeric, "training loss diverged at epoch " + std::to_string(epoch + 1));
    history.epoch_loss.push_back(epoch_loss);
    double llh = std::numeric_limits<double>::quiet_NaN();
    if (!val_set.empty()) {
      llh = mean_llh(model, val_set, val_grid.rotations);
      history.val_llh.push_back(llh);
      if (llh > best_llh) {
        best_llh = llh;
        history.best_epoch = epoch;
        since_best = 0;
        if (config.patience > 0) best_params = model.params();
      } else {
        ++since_best;
      }
    }
    if (on_epoch) on_epoch(epoch, epoch_loss, llh);
    if (config.patience > 0 && since_best >= config.patience) {
      history.stopped_early = true;
      break;
    }
  }
  if (config.patience > 0 && !best_params.empty()) model.params() = best_params;
  return history;
}

OrientationDistribution predict_distribution(const ImplicitModel& model, std::span<const float> image,
                                             const EquivolumetricGrid& grid) {
  const ImplicitModel::Vec f = model.extract(image);
  const std::vector<float> l = model.logits(f, grid.rotations);
  const std::vector<double> values(l.begin(), l.end());
  return normalize(values, grid);
}

OrientationDistribution predict_distribution(const ImplicitModel& model, std::span<const float> image, int grid_level) {
  return predict_distribution(model, image, generate_grid(grid_level));
}

ModeResult predict_mode(const ImplicitModel& model, std::span<const float> image, const ModeSearchConfig& config) {
  require(config.top_k >= 1 && config.steps >= 0 && config.step_size > 0.0, "invalid mode search config");
  require(config.backtrack > 0.0 && config.backtrack < 1.0, "backtrack factor must be in (0, 1)");
  const ImplicitModel::Vec f = model.extract(image);
  const EquivolumetricGrid grid = generate_grid(config.init_grid_level);
  const std::vector<float> l = model.logits(f, grid.rotations);
  std::vector<std::size_t> order(l.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(config.top_k), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::size_t a, std::size_t b) { return l[a] > l[b] || (l[a] == l[b] && a < b); });

  auto value = [&](const Rotation& r) { return static_cast<double>(model.logits(f, {r})[0]); };
  ModeResult best;
  best.logit = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < k; ++s) {
    Rotation r = grid.rotations[order[s]];
    double fr = value(r);
    std::vector<double> trace{fr};
    for (int it = 0; it < config.steps; ++it) {
      Eigen::Matrix3d gm;
      const Eigen::Matrix3d rm = r.matrix();
      model.logit_and_gradient(f, rm, gm);
      // Right-trivialised gradient: d/dw F(R exp([w]x)) at w = 0.
      Eigen::Vector3d g;
      for (int a = 0; a < 3; ++a) {
        Eigen::Matrix3d hat = Eigen::Matrix3d::Zero();
        const int b = (a + 1) % 3, c = (a + 2) % 3;
        hat(c, b) = 1.0;
        hat(b, c) = -1.0;
        g[a] = (gm.array() * (rm * hat).array()).sum();
      }
      const double norm = g.norm();
      if (!(norm > 1e-12)) break;
      double alpha = config.step_size;
      bool moved = false;
      for (int bt = 0; bt <= config.max_backtracks; ++bt, alpha *= config.backtrack) {
        const Rotation cand = r * exp_map(g * (alpha / norm));
        const double fc = value(cand);
        if (fc >= fr) {
          r = cand;
          fr = fc;
          moved = true;
          break;
        }
      }
      if (!moved) break;
      trace.push_back(fr);
    }
    if (fr > best.logit) {
      best.logit = fr;
      best.rotation = r;
    }
    best.trajectories.push_back(std::move(trace));
  }
  return best;
}

void write_model(const std::filesystem::path& path, const ImplicitModel& model, const nlohmann::json& meta) {
  nlohmann::json header;
  header["spec"] = to_json(model.spec());
  header["param_count"] = model.param_count();
  header["layers"] = nlohmann::json::array();
  for (const auto& l : model.layers()) header["layers"].push_back({{"name", l.name}, {"rows", l.rows}, {"cols", l.cols}});
  header["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  binio::write_magic(os, "IPDF");
  binio::write_le<std::uint32_t>(os, 1);
  binio::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (float p : model.params()) binio::write_le(os, p);
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

ImplicitModel read_model(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  binio::expect_magic(is, "IPDF");
  const auto version = binio::read_le<std::uint32_t>(is);
  if (version != 1) fail(ErrorKind::kData, path.string() + ": unsupported model version " + std::to_string(version));
  const auto len = binio::read_le<std::uint32_t>(is);
  std::string text(len, '\0');
  is.read(text.data(), len);
  if (!is) fail(ErrorKind::kData, path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ImplicitModel model(network_spec_from_json(header.at("spec")));
    if (header.at("param_count").get<std::size_t>() != model.param_count()) {
      fail(ErrorKind::kData, path.string() + ": parameter count does not match the architecture");
    }
    for (float& p : model.params()) p = binio::read_le<float>(is);
    for (float p : model.params())
      if (!std::isfinite(p)) fail(ErrorKind::kData, path.string() + ": non-finite parameter");
    if (meta) *meta = header.value("meta", nlohmann::json::object());
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, path.string() + ": bad header: " + e.what());
  }
}

}  // namespace symlabel
