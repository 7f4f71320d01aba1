#include "symlabel/evalviz.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "symlabel/error.hpp"
#include "symlabel/parallel.hpp"

namespace symlabel {
namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Matrix4Xd quaternion_columns(const std::vector<Rotation>& rots) {
  Eigen::Matrix4Xd q(4, static_cast<Eigen::Index>(rots.size()));
  for (std::size_t i = 0; i < rots.size(); ++i) {
    const auto& c = rots[i].quaternion();
    q.col(static_cast<Eigen::Index>(i)) << c.w(), c.x(), c.y(), c.z();
  }
  return q;
}

double angle_from_dot(double d) { return 2.0 * std::acos(std::min(1.0, std::abs(d))); }

// Largest |<q_a, q_b>| over b for every a, i.e. the nearest-member distance.
Eigen::VectorXd max_abs_dot(const Eigen::Matrix4Xd& a, const Eigen::Matrix4Xd& b) {
  Eigen::VectorXd best = Eigen::VectorXd::Zero(a.cols());
  constexpr Eigen::Index kChunk = 4096;
  for (Eigen::Index s = 0; s < a.cols(); s += kChunk) {
    const Eigen::Index n = std::min(kChunk, a.cols() - s);
    const Eigen::MatrixXd d = (a.middleCols(s, n).transpose() * b).cwiseAbs();
    best.segment(s, n) = d.rowwise().maxCoeff();
  }
  return best;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string hsl_color(double hue) {
  // Full saturation, mid lightness.
  const double h = hue / 60.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h) % 6) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>(std::lround(r * 255)),
                static_cast<int>(std::lround(g * 255)), static_cast<int>(std::lround(b * 255)));
  return buf;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
  return {{"llh", r.llh},
          {"maad", r.maad},
          {"recall_maad", r.recall_maad},
          {"n_frames", r.n_frames},
          {"grid_level", r.grid_level},
          {"threshold", r.threshold},
          {"recall_empty_frames", r.recall_empty_frames}};
}

double maad(const OrientationDistribution& dist, const std::vector<Rotation>& gt) {
  require(!gt.empty(), "maad: empty ground-truth set");
  require(dist.rotations.size() == dist.log_probs.size(), "maad: malformed distribution");
  const Eigen::VectorXd near = max_abs_dot(quaternion_columns(dist.rotations), quaternion_columns(gt));
  double sum = 0.0;
  for (std::size_t i = 0; i < dist.rotations.size(); ++i)
    sum += dist.probability(i) * angle_from_dot(near[static_cast<Eigen::Index>(i)]);
  return sum * 180.0 / kPi;
}

RecallResult recall_maad(const OrientationDistribution& dist, const std::vector<Rotation>& gt, double threshold) {
  require(!gt.empty(), "recall_maad: empty ground-truth set");
  require(threshold > 0.0, "recall_maad: threshold must be positive");
  std::vector<Rotation> kept;
  for (std::size_t i = 0; i < dist.rotations.size(); ++i)
    if (dist.probability(i) > threshold) kept.push_back(dist.rotations[i]);
  RecallResult r;
  if (kept.empty()) return r;
  const Eigen::VectorXd near = max_abs_dot(quaternion_columns(gt), quaternion_columns(kept));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < near.size(); ++i) sum += angle_from_dot(near[i]);
  r.degrees = sum / static_cast<double>(near.size()) * 180.0 / kPi;
  r.empty = false;
  return r;
}

MetricsReport evaluate(const ImplicitModel& model, const std::vector<ValidationSample>& samples, int grid_level,
                       double threshold, int jobs, std::vector<FrameMetrics>* per_frame) {
  require(!samples.empty(), "evaluate: no frames");
  const EquivolumetricGrid grid = generate_grid(grid_level);
  std::vector<FrameMetrics> frames(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const ValidationSample& s = samples[i];
    require(!s.gt.empty(), "evaluate: frame without ground truth: " + s.frame_id);
    const ImplicitModel::Vec f = model.extract(s.image);
    const std::vector<float> gl = model.logits(f, grid.rotations);
    const std::vector<float> ql = model.logits(f, s.gt);
    const std::vector<double> g(gl.begin(), gl.end()), q(ql.begin(), ql.end());
    const std::vector<double> ll = log_likelihoods(g, q);
    const OrientationDistribution dist = normalize(g, grid);
    const RecallResult rec = recall_maad(dist, s.gt, threshold);
    FrameMetrics& m = frames[i];
    m.frame_id = s.frame_id;
    m.llh = std::accumulate(ll.begin(), ll.end(), 0.0) / static_cast<double>(ll.size());
    m.maad = maad(dist, s.gt);
    m.recall_maad = rec.degrees;
    m.recall_empty = rec.empty;
  });
  MetricsReport r;
  r.n_frames = static_cast<int>(samples.size());
  r.grid_level = grid_level;
  r.threshold = threshold;
  for (const auto& m : frames) {
    r.llh += m.llh;
    r.maad += m.maad;
    r.recall_maad += m.recall_maad;
    r.recall_empty_frames += m.recall_empty ? 1 : 0;
  }
  r.llh /= r.n_frames;
  r.maad /= r.n_frames;
  r.recall_maad /= r.n_frames;
  if (per_frame) *per_frame = std::move(frames);
  return r;
}

Eigen::Vector2d mollweide(double longitude, double latitude) {
  // Solve 2t + sin 2t = pi sin(lat) for the auxiliary angle t.
  double t = latitude;
  if (std::abs(std::abs(latitude) - kPi / 2) > 1e-12) {
    const double target = kPi * std::sin(latitude);
    for (int it = 0; it < 20; ++it) {
      const double f = 2 * t + std::sin(2 * t) - target;
      const double df = 2 + 2 * std::cos(2 * t);
      if (df < 1e-15) break;
      const double step = f / df;
      t -= step;
      if (std::abs(step) < 1e-10) break;
    }
  }
  return {2.0 * std::numbers::sqrt2 / kPi * longitude * std::cos(t), std::numbers::sqrt2 * std::sin(t)};
}

ProjectedRotation project_rotation(const Rotation& r) {
  const Eigen::Matrix3d m = r.matrix();
  const Eigen::Vector3d d = m.col(2);
  ProjectedRotation p;
  const double colat = std::acos(std::clamp(d.z(), -1.0, 1.0));
  p.longitude = (std::abs(d.x()) < 1e-12 && std::abs(d.y()) < 1e-12) ? 0.0 : std::atan2(d.y(), d.x());
  p.latitude = kPi / 2 - colat;
  p.xy = mollweide(p.longitude, p.latitude);
  const Eigen::Matrix3d ref = (Eigen::AngleAxisd(p.longitude, Eigen::Vector3d::UnitZ()) *
                               Eigen::AngleAxisd(colat, Eigen::Vector3d::UnitY()))
                                  .toRotationMatrix();
  const Eigen::Matrix3d rel = ref.transpose() * m;
  p.tilt = std::atan2(rel(1, 0), rel(0, 0));
  if (p.tilt < 0) p.tilt += 2 * kPi;
  return p;
}

double tilt_hue(double tilt) {
  double h = std::fmod(tilt * 180.0 / kPi, 360.0);
  if (h < 0) h += 360.0;
  return h;
}

std::string mollweide_svg(const OrientationDistribution& dist, const std::vector<Rotation>& gt,
                          const SvgOptions& options) {
  require(options.width > 0, "svg width must be positive");
  const double w = options.width;
  const double h = w / 2.0 + (options.title.empty() ? 0.0 : 24.0);
  const double top = options.title.empty() ? 0.0 : 24.0;
  const double scale = (w / 2.0 - 10.0) / (2.0 * std::numbers::sqrt2);
  const double cx = w / 2.0, cy = top + w / 4.0;
  auto to_px = [&](const Eigen::Vector2d& xy) { return Eigen::Vector2d(cx + scale * xy.x(), cy - scale * xy.y()); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(w) + "\" height=\"" + fmt(h) +
                    "\" viewBox=\"0 0 " + fmt(w) + " " + fmt(h) + "\">\n";
  if (!options.title.empty())
    svg += "<text x=\"" + fmt(cx) + "\" y=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">" +
           options.title + "</text>\n";
  svg += "<ellipse cx=\"" + fmt(cx) + "\" cy=\"" + fmt(cy) + "\" rx=\"" + fmt(2 * std::numbers::sqrt2 * scale) +
         "\" ry=\"" + fmt(std::numbers::sqrt2 * scale) + "\" fill=\"#f4f4f4\" stroke=\"#444\" stroke-width=\"1\"/>\n";
  for (int lat = -60; lat <= 60; lat += 30) {
    const Eigen::Vector2d a = to_px(mollweide(-kPi, lat * kPi / 180)), b = to_px(mollweide(kPi, lat * kPi / 180));
    svg += "<line x1=\"" + fmt(a.x()) + "\" y1=\"" + fmt(a.y()) + "\" x2=\"" + fmt(b.x()) + "\" y2=\"" + fmt(b.y()) +
           "\" stroke=\"#ccc\" stroke-width=\"0.5\"/>\n";
  }

  std::vector<std::size_t> shown;
  double pmax = 0.0;
  for (std::size_t i = 0; i < dist.rotations.size(); ++i) {
    const double p = dist.probability(i);
    if (p > options.threshold) {
      shown.push_back(i);
      pmax = std::max(pmax, p);
    }
  }
  // Small markers last so they stay visible on top of large ones.
  std::stable_sort(shown.begin(), shown.end(),
                   [&](std::size_t a, std::size_t b) { return dist.log_probs[a] > dist.log_probs[b]; });
  svg += "<g id=\"cells\" stroke=\"none\">\n";
  for (std::size_t i : shown) {
    const ProjectedRotation pr = project_rotation(dist.rotations[i]);
    const Eigen::Vector2d px = to_px(pr.xy);
    const double r = std::max(1.0, options.max_marker * std::sqrt(dist.probability(i) / pmax));
    svg += "<circle cx=\"" + fmt(px.x()) + "\" cy=\"" + fmt(px.y()) + "\" r=\"" + fmt(r) + "\" fill=\"" +
           hsl_color(tilt_hue(pr.tilt)) + "\" fill-opacity=\"0.8\"/>\n";
  }
  svg += "</g>\n<g id=\"gt\" fill=\"none\" stroke-width=\"1.5\">\n";
  for (const Rotation& g : gt) {
    const ProjectedRotation pr = project_rotation(g);
    const Eigen::Vector2d px = to_px(pr.xy);
    svg += "<circle cx=\"" + fmt(px.x()) + "\" cy=\"" + fmt(px.y()) + "\" r=\"" + fmt(options.max_marker + 3) +
           "\" stroke=\"" + hsl_color(tilt_hue(pr.tilt)) + "\"/>\n";
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace symlabel
