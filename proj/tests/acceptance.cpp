// Acceptance run: one PASS/FAIL line per criterion, details on the lines
// below it. Exit status is non-zero when any criterion fails.
//
//   acceptance [--only 1,2,...] [--cli path/to/symlabel] [--work dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "symlabel/config.hpp"
#include "symlabel/error.hpp"
#include "symlabel/evalviz.hpp"
#include "symlabel/fpfh.hpp"
#include "symlabel/ipdf.hpp"
#include "symlabel/labeler.hpp"
#include "symlabel/parallel.hpp"
#include "symlabel/pipeline.hpp"
#include "symlabel/register.hpp"
#include "symlabel/rng.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/symmetry.hpp"

namespace fs = std::filesystem;
using namespace symlabel;

namespace {

constexpr double kPi = std::numbers::pi;

double deg(double rad) { return rad * 180.0 / kPi; }

class Timer {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
  void info(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

double min_distance_to(const Rotation& r, const std::vector<Rotation>& set) {
  double best = 1e9;
  for (const Rotation& s : set) best = std::min(best, geodesic_distance(r, s));
  return best;
}

struct Context {
  std::string cli;
  fs::path work;
  int jobs = 1;
};

// ---------------------------------------------------------------------------

Outcome grid_exactness(const Context&) {
  Outcome o;
  const std::size_t expected[] = {72, 4608, 294912};
  const int levels[] = {0, 2, 4};
  for (int i = 0; i < 3; ++i) {
    Timer t;
    const EquivolumetricGrid g = generate_grid(levels[i]);
    const double s = t.seconds();
    o.check(g.size() == expected[i], "S=" + std::to_string(levels[i]) + ": " + std::to_string(g.size()) +
                                         " rotations (expected " + std::to_string(expected[i]) + ")");
    if (levels[i] == 4) o.check(s < 10.0, fmt("S=4 generated in %.2f s (< 10 s)", s));
  }
  for (int level = 0; level <= 2; ++level) {
    const EquivolumetricGrid g = generate_grid(level);
    Eigen::Matrix4Xd q(4, static_cast<Eigen::Index>(g.size()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto& c = g.rotations[i].quaternion();
      q.col(static_cast<Eigen::Index>(i)) << c.w(), c.x(), c.y(), c.z();
    }
    // Nearest neighbour through the largest |<q_i, q_j>| with j != i.
    Eigen::MatrixXd d = (q.transpose() * q).cwiseAbs();
    d.diagonal().setZero();
    std::vector<double> nn(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      nn[i] = 2.0 * std::acos(std::min(1.0, d.col(static_cast<Eigen::Index>(i)).maxCoeff()));
    double mean = 0.0, var = 0.0;
    for (double x : nn) mean += x / static_cast<double>(nn.size());
    for (double x : nn) var += (x - mean) * (x - mean) / static_cast<double>(nn.size());
    const double cv = std::sqrt(var) / mean;
    o.check(cv < 0.35, fmt("S=%.0f nearest-neighbour CV %.3f (< 0.35), mean spacing %.2f deg", level, cv, deg(mean)));
  }
  return o;
}

Outcome normalization(const Context&) {
  Outcome o;
  Rng rng(2);
  double worst = 0.0;
  for (int level = 0; level <= 3; ++level) {
    const EquivolumetricGrid g = generate_grid(level);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<double> v(g.size());
      const double scale = std::pow(10.0, trial - 1);
      for (auto& x : v) x = scale * rng.normal();
      worst = std::max(worst, std::abs(normalize(v, g).total_mass() - 1.0));
    }
  }
  o.check(worst <= 1e-6, fmt("max |sum P V - 1| = %.2e over 20 random distributions (<= 1e-6)", worst));

  // Uniform logits: every GT lands in a flat distribution, LLH = -log(pi^2).
  NetworkSpec s;
  s.extractor = "pool";
  s.image_size = 16;
  s.feature_dim = 4;
  s.hidden = {8};
  ImplicitModel zero(s);
  std::vector<ValidationSample> samples;
  for (int i = 0; i < 4; ++i)
    samples.push_back({"f", std::vector<float>(static_cast<std::size_t>(s.input_values()), 0.25f),
                       {random_rotation(rng), random_rotation(rng)}});
  const double analytic = -2.0 * std::log(kPi);
  for (int level : {1, 3}) {
    const double llh = mean_llh(zero, samples, generate_grid(level).rotations);
    o.check(std::abs(llh - analytic) <= 1e-6,
            fmt("uniform LLH at S=%.0f: %.9f vs -2 ln pi = %.9f", level, llh, analytic));
  }
  return o;
}

Outcome gradients(const Context&) {
  Outcome o;
  Timer t;
  Rng rng(41);
  int probes = 0, bad = 0;
  double worst = 0.0;
  for (int model = 0; model < 10; ++model) {
    NetworkSpec s;
    s.extractor = model % 2 ? "pool" : "conv";
    s.image_size = 16;
    s.conv_channels = {3, 4};
    s.feature_dim = 5;
    s.hidden = {6, 5};
    s.n_freq = 2;
    Network<double> net(s);
    net.init_random(1000 + model);
    std::vector<double> img(static_cast<std::size_t>(s.input_values()));
    for (auto& x : img) x = rng.uniform();
    const Rotation gt = random_rotation(rng);
    const auto grid = generate_grid(0).rotations;
    std::vector<double> grad(net.param_count(), 0.0);
    nll_loss<double>(net, img, gt, grid, &grad);
    for (int p = 0; p < 10; ++p, ++probes) {
      const std::size_t k = rng.below(net.param_count());
      const double keep = net.params()[k], h = 1e-5;
      net.params()[k] = keep + h;
      const double a = nll_loss<double>(net, img, gt, grid);
      net.params()[k] = keep - h;
      const double b = nll_loss<double>(net, img, gt, grid);
      net.params()[k] = keep;
      const double fd = (a - b) / (2 * h);
      const double rel = std::abs(fd - grad[k]) / std::max(std::abs(fd) + std::abs(grad[k]), 1e-8);
      worst = std::max(worst, rel);
      bad += rel > 1e-4;
    }
  }
  const double s = t.seconds();
  o.check(probes == 100 && bad == 0, fmt("%.0f probes, %.0f above 1e-4, worst relative error %.2e", probes, bad, worst));
  o.check(s < 30.0, fmt("runtime %.1f s (< 30 s)", s));
  return o;
}

// Asymmetric object: box with a corner block.
TriangleMesh lumpy() {
  TriangleMesh m = make_box(0.06, 0.09, 0.12);
  const TriangleMesh b = make_box(0.03, 0.03, 0.03);
  const int off = static_cast<int>(m.vertices.size());
  for (const auto& v : b.vertices) m.vertices.push_back(v + Eigen::Vector3d(0.03, 0.045, 0.06));
  for (const auto& t : b.triangles) m.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
  return m;
}

Outcome registration(const Context&) {
  Outcome o;
  Timer t;
  const TriangleMesh mesh = lumpy();
  const double voxel = 0.006, radius = 0.03;
  const PointCloud target = voxel_downsample(sample_surface(mesh, 6000, 1), voxel);
  const FpfhDescriptorSet ft = compute_fpfh(target, radius);
  Rng rng(2024);
  int ok = 0, thrown = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose truth(random_rotation(rng), Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),
                                                           rng.uniform(-0.2, 0.2)));
    // Full overlap, but an independent surface sample so no point pairs exactly.
    const PointCloud source = transform(voxel_downsample(sample_surface(mesh, 6000, 500 + trial), voxel), truth.inverse());
    GlobalRegistrationConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(trial);
    try {
      const RegistrationResult g = global_register(source, target, compute_fpfh(source, radius), ft, cfg);
      const RegistrationResult r = icp_refine(source, target, g.pose, {});
      const double rot = deg(geodesic_distance(r.pose.rotation, truth.rotation));
      const double trans = (r.pose.translation - truth.translation).norm();
      ok += rot <= 3.0 && trans <= 0.01;
    } catch (const Error&) {
      ++thrown;
    }
  }
  const double s = t.seconds();
  o.info(fmt("%.0f registrations threw", thrown));
  o.check(ok >= 90, fmt("%.0f/100 recovered within 3 deg / 1 cm (>= 90)", ok));
  o.check(s < 60.0, fmt("runtime %.1f s (< 60 s)", s));
  return o;
}

Outcome label_accuracy(const Context& ctx) {
  Outcome o;
  Timer t;
  const LabelerConfig cfg;
  for (Shape shape : {Shape::kCan, Shape::kBox, Shape::kBowl}) {
    const TriangleMesh mesh = make_mesh(shape);
    const std::vector<Rotation> sym = discretize(analytic_symmetries(shape), 200);
    DatasetConfig dc;
    dc.shape = shape;
    dc.n_frames = 50;
    dc.seed = 505;
    const auto frames = synthesize_frames(dc, mesh, default_camera());
    const LabelModel model(mesh, cfg);
    std::vector<double> err(frames.size(), -1.0);
    Timer ts;
    parallel_for(frames.size(), ctx.jobs, [&](std::size_t i) {
      const auto& [rec, frame] = frames[i];
      try {
        const PoseLabel l = label_frame(frame, model, cfg, label_seed(5, rec.id, 0));
        err[i] = deg(min_distance_to(l.pose.rotation, symmetric_orientations(rec.gt_pose.rotation, sym)));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kLabelRejected) throw;
      }
    });
    int accepted = 0;
    double sum = 0.0, worst = 0.0;
    for (double e : err)
      if (e >= 0) {
        ++accepted;
        sum += e;
        worst = std::max(worst, e);
      }
    const double m = accepted ? sum / accepted : 180.0;
    const std::string name = to_string(shape);
    o.check(m <= 5.0, name + fmt(": symmetry-aware MAAD %.2f deg over accepted labels (<= 5), worst %.2f deg", m, worst));
    o.check(accepted >= 40, name + fmt(": accepted %.0f/50 (>= 80%%), %.1f s", accepted, ts.seconds()));
  }
  const double s = t.seconds();
  o.check(s < 600.0, fmt("runtime %.0f s (< 600 s)", s));
  return o;
}

Outcome multimodality(const Context& ctx) {
  Outcome o;
  LabelerConfig cfg;
  const int n_frames = 10, per_frame = 5;
  for (Shape shape : {Shape::kCan, Shape::kBox}) {
    const fs::path dir = ctx.work / ("multimodal_" + to_string(shape));
    DatasetConfig dc;
    dc.shape = shape;
    dc.n_frames = n_frames;
    dc.val_fraction = 0.0;
    dc.seed = 606;
    generate_dataset(dc, dir);
    const Dataset ds(dir);
    LabelRunSummary summary;
    const auto sets = build_label_set(ds, ds.frames(), ds.mesh(), per_frame, cfg, 6, ctx.jobs, &summary);
    o.info(to_string(shape) + ": " + std::to_string(summary.labels) + " labels on " +
           std::to_string(summary.labeled_frames) + "/" + std::to_string(n_frames) + " frames");
    if (shape == Shape::kCan) {
      int spanning = 0, multi = 0;
      double smallest = 180.0;
      for (const auto& set : sets) {
        if (set.labels.size() < 2) continue;
        ++multi;
        double span = 0.0;
        for (std::size_t i = 0; i < set.labels.size(); ++i)
          for (std::size_t j = i + 1; j < set.labels.size(); ++j)
            span = std::max(span, geodesic_distance(set.labels[i].pose.rotation, set.labels[j].pose.rotation));
        spanning += deg(span) >= 90.0;
        smallest = std::min(smallest, deg(span));
      }
      o.check(multi > 0 && spanning == multi,
              fmt("can: %.0f/%.0f frames with max pairwise label distance >= 90 deg (smallest %.1f deg)", spanning,
                  multi, smallest));
    } else {
      const std::vector<Rotation> sym = discretize(analytic_symmetries(shape));
      int total = 0, near = 0;
      double worst = 0.0;
      std::set<int> members;
      for (const auto& set : sets) {
        const Rotation gt = ds.record(set.frame_id).gt_pose.rotation;
        const std::vector<Rotation> modes = symmetric_orientations(gt, sym);
        for (const auto& l : set.labels) {
          ++total;
          double best = 1e9;
          int which = -1;
          for (std::size_t k = 0; k < modes.size(); ++k) {
            const double d = geodesic_distance(l.pose.rotation, modes[k]);
            if (d < best) {
              best = d;
              which = static_cast<int>(k);
            }
          }
          near += deg(best) <= 5.0;
          worst = std::max(worst, deg(best));
          members.insert(which);
        }
      }
      o.check(total > 0 && near == total,
              fmt("box: %.0f/%.0f labels within 5 deg of a symmetry rotation (worst %.2f deg)", near, total, worst));
      o.info("box: labels hit " + std::to_string(members.size()) + " of the 4 symmetry rotations");
    }
  }
  return o;
}

// Toy labeling budget: 5 labels per frame, 3 registration attempts each.
constexpr int kToyLabelsPerFrame = 5;
constexpr int kToyAttempts = 3;

// Shared toy setup for the training criteria.
struct Toy {
  bool ready = false;
  fs::path dir;
  std::vector<PoseLabelSet> labels;
  std::vector<ValidationSample> val;
  MetricsReport pseudo, single;
  TrainingHistory pseudo_history, single_history;
  double pseudo_seconds = 0.0, single_seconds = 0.0, label_seconds = 0.0;
  int label_count = 0;
};

Toy& toy(const Context& ctx) {
  static Toy t;
  if (t.ready) return t;
  t.ready = true;
  Config c;
  t.dir = ctx.work / "toy_can";
  DatasetConfig dc;
  dc.shape = Shape::kCan;
  dc.n_frames = 500;
  dc.appearance = Appearance::kTexture;
  dc.seed = 3;
  generate_dataset(dc, t.dir);
  const Dataset ds(t.dir);
  const auto train_frames = ds.split("train");
  const auto val_frames = ds.split("val");

  Timer tl;
  LabelRunSummary summary;
  LabelerConfig lc = c.labeler;
  lc.attempts = kToyAttempts;
  t.labels = build_label_set(ds, train_frames, ds.mesh(), kToyLabelsPerFrame, lc, 3, ctx.jobs, &summary);
  t.label_count = summary.labels;
  t.label_seconds = tl.seconds();

  const std::vector<Rotation> sym = discretize(analytic_symmetries(Shape::kCan), c.eval.symmetry_samples);
  t.val = make_eval_set(ds, val_frames, sym, c.training.crop_size, c.network.image_size, ctx.jobs);

  TrainingConfig tc = c.training;
  tc.epochs = 20;
  tc.seed = 3;
  for (LabelMode mode : {LabelMode::kPseudo, LabelMode::kSingle}) {
    Timer tt;
    const auto train_set =
        make_training_set(ds, train_frames, mode, t.labels, {}, tc.crop_size, c.network.image_size, ctx.jobs);
    ImplicitModel model(c.network);
    model.init_random(mix_seed(3, 17));
    (mode == LabelMode::kPseudo ? t.pseudo_history : t.single_history) = train(model, train_set, t.val, tc);
    const MetricsReport r = evaluate(model, t.val, c.eval.grid_level, c.eval.threshold, ctx.jobs);
    (mode == LabelMode::kPseudo ? t.pseudo : t.single) = r;
    (mode == LabelMode::kPseudo ? t.pseudo_seconds : t.single_seconds) = tt.seconds();
  }
  return t;
}

Outcome toy_training(const Context& ctx) {
  Outcome o;
  const Toy& t = toy(ctx);
  const double uniform = -2.0 * std::log(kPi);
  o.info(fmt("%.0f pseudo labels on %.0f train frames, labeling took %.0f s", t.label_count,
             static_cast<double>(t.labels.size()), t.label_seconds));
  o.check(t.pseudo.llh >= uniform + 1.0,
          fmt("pseudo-GT model: validation LLH %.3f (>= %.3f = uniform + 1)", t.pseudo.llh, uniform + 1.0));
  o.check(t.pseudo.recall_maad <= 15.0,
          fmt("pseudo-GT model: Recall MAAD %.2f deg at S=3 (<= 15), MAAD %.2f deg", t.pseudo.recall_maad, t.pseudo.maad));
  o.info(fmt("frames with no cell above the threshold: %.0f", t.pseudo.recall_empty_frames));
  o.info(fmt("kept epoch %.0f of %.0f run", t.pseudo_history.best_epoch + 1.0,
             static_cast<double>(t.pseudo_history.val_llh.size())));
  o.check(t.pseudo_seconds < 1800.0, fmt("training + evaluation %.0f s (< 1800 s)", t.pseudo_seconds));
  return o;
}

Outcome ablation(const Context& ctx) {
  Outcome o;
  const Toy& t = toy(ctx);
  o.info(fmt("single-GT model: LLH %.3f, MAAD %.2f deg, Recall MAAD %.2f deg", t.single.llh, t.single.maad,
             t.single.recall_maad));
  o.info(fmt("pseudo-GT model: LLH %.3f, MAAD %.2f deg, Recall MAAD %.2f deg", t.pseudo.llh, t.pseudo.maad,
             t.pseudo.recall_maad));
  o.check(t.single.recall_maad >= 5.0 * t.pseudo.recall_maad,
          fmt("Recall MAAD single %.2f >= 5 x pseudo %.2f", t.single.recall_maad, t.pseudo.recall_maad));
  o.check(t.single.maad <= t.pseudo.maad + 5.0,
          fmt("MAAD single %.2f <= pseudo %.2f + 5", t.single.maad, t.pseudo.maad));
  o.info(fmt("single-GT kept epoch %.0f of %.0f run", t.single_history.best_epoch + 1.0,
             static_cast<double>(t.single_history.val_llh.size())));
  o.info(fmt("single-GT training + evaluation %.0f s", t.single_seconds));
  return o;
}

// Brute-force oracle for discrete groups: score every grid rotation, take
// the best cell of each residual basin, polish it locally and keep the
// polished rotations whose residual is within `tol`.
std::vector<Rotation> scan_members(const TriangleMesh& mesh, int level, double tol) {
  const SymmetryScorer scorer(mesh, 2000, 1);
  std::vector<std::pair<double, Rotation>> all;
  for (const Rotation& r : generate_grid(level).rotations) all.emplace_back(scorer.residual(r), r);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<Rotation> seeds, found;
  for (const auto& [res, r] : all) {
    if (seeds.size() == 24) break;
    bool far = true;
    for (const Rotation& p : seeds) far = far && geodesic_distance(r, p) >= kPi / 6;
    if (!far) continue;
    seeds.push_back(r);
    const Rotation polished = scorer.refine(r);
    if (scorer.residual(polished) > tol) continue;
    bool fresh = true;
    for (const Rotation& f : found) fresh = fresh && geodesic_distance(f, polished) > kPi / 180;
    if (fresh) found.push_back(polished);
  }
  return found;
}

// Every scanned member has a detected partner within 1 degree and vice versa.
bool same_members(const std::vector<Rotation>& a, const std::vector<Rotation>& b) {
  if (a.size() != b.size()) return false;
  for (const Rotation& r : a)
    if (deg(min_distance_to(r, b)) > 1.0) return false;
  return true;
}

Outcome symmetry_detection(const Context&) {
  Outcome o;
  Timer t;
  const SymmetryOptions opt;
  const int scan_level = 2;

  // Box: exactly four members, matching the four best scan basins.
  const SymmetrySet box = detect_symmetries(make_mesh(Shape::kBox), opt);
  o.check(box.kind == SymmetryKind::kDiscrete && box.rotations.size() == 4 && box.axes.empty(),
          "box: " + to_string(box.kind) + " with " + std::to_string(box.rotations.size()) + " rotations");
  const std::vector<Rotation> bs = scan_members(make_mesh(Shape::kBox), scan_level, box.tolerance);
  o.check(same_members(bs, box.rotations),
          "box scan: " + std::to_string(bs.size()) + " polished basins within tolerance, all matching detected members");

  // Can: a continuous z axis plus the flip; every scan rotation that maps the
  // axis onto +-z scores low, every other one high.
  const TriangleMesh can = make_mesh(Shape::kCan);
  const SymmetrySet cs = detect_symmetries(can, opt);
  const bool axis_ok = cs.axes.size() == 1 && std::abs(std::abs(cs.axes[0].z()) - 1.0) < 1e-3;
  bool flip = false;
  for (const Rotation& r : cs.rotations) flip = flip || (r.matrix().col(2).z() < -0.999);
  o.check(cs.kind == SymmetryKind::kMixed && axis_ok && flip,
          "can: " + to_string(cs.kind) + ", " + std::to_string(cs.axes.size()) + " axis, flip " + (flip ? "found" : "missing"));
  {
    const SymmetryScorer scorer(can, 2000, 1);
    const std::vector<Rotation> members = discretize(cs, 200);
    double on_max = 0.0, off_min = 1e9;
    for (const Rotation& r : generate_grid(scan_level).rotations) {
      const double res = scorer.residual(r);
      const double near = deg(min_distance_to(r, members));
      if (near < 2.0) on_max = std::max(on_max, res);
      if (near > 20.0) off_min = std::min(off_min, res);
    }
    o.check(on_max < off_min, fmt("can scan: residual <= %.4f within 2 deg of the set, >= %.4f beyond 20 deg", on_max,
                                  off_min));
  }

  // Asymmetric: identity only; the best scan basin is the identity and the
  // second is far worse.
  const TriangleMesh lump = lumpy();
  const SymmetrySet as = detect_symmetries(lump, opt);
  o.check(as.kind == SymmetryKind::kDiscrete && as.rotations.size() == 1 && as.axes.empty() &&
              as.rotations[0].angle() < 1e-6,
          "asymmetric: " + to_string(as.kind) + " with " + std::to_string(as.rotations.size()) + " rotation(s)");
  const std::vector<Rotation> ascan = scan_members(lump, scan_level, as.tolerance);
  o.check(same_members(ascan, as.rotations),
          "asymmetric scan: " + std::to_string(ascan.size()) + " polished basin(s) within tolerance, matching the identity");

  const double s = t.seconds();
  o.check(s < 120.0, fmt("runtime %.1f s (< 120 s)", s));
  return o;
}

int run_cli(const Context& ctx, const std::string& args) {
  const std::string cmd = ctx.cli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.emplace_back(fs::relative(e.path(), dir).generic_string(), slurp(e.path()));
  std::sort(files.begin(), files.end());
  return files;
}

Outcome determinism(const Context& ctx) {
  Outcome o;
  if (ctx.cli.empty() || !fs::exists(ctx.cli)) {
    o.check(false, "CLI binary not found: '" + ctx.cli + "'");
    return o;
  }
  const fs::path dir = ctx.work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir / "run");
  const std::string d = dir.string(), r = (dir / "run").string();
  std::ofstream(dir / "cfg.json") << R"({"network": {"image_size": 32, "conv_channels": [8, 8], "feature_dim": 16,
    "hidden": [32, 32]}, "training": {"train_grid_level": 1, "batch_size": 8}, "eval": {"grid_level": 2}})";
  const std::string cfg = "--config " + d + "/cfg.json --seed 11 --jobs 1 ";
  if (run_cli(ctx, cfg + "synth --shape can --n 12 --appearance texture --out " + d + "/ds") != 0) {
    o.check(false, "synth failed");
    return o;
  }
  const std::string frame = frame_id_for(Shape::kCan, 11);
  const std::vector<std::pair<std::string, std::string>> steps = {
      {"label", "label --dataset " + d + "/ds --split all --labels-per-frame 2 --out " + r + "/labels.jsonl"},
      {"train", "train --dataset " + d + "/ds --labels " + r + "/labels.jsonl --epochs 2 --iterations 5 --out " + r +
                    "/model.ipdf"},
      {"eval", "eval --model " + r + "/model.ipdf --dataset " + d + "/ds --split all --per-frame --out " + r +
                   "/metrics.json"},
      {"viz", "viz --model " + r + "/model.ipdf --dataset " + d + "/ds --frame " + frame + " --gt analytic --out " + r +
                  "/frame.svg"},
  };
  std::vector<std::vector<std::pair<std::string, std::string>>> runs;
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& [name, args] : steps)
      if (int code = run_cli(ctx, cfg + args); code != 0) {
        o.check(false, name + " exited with " + std::to_string(code));
        return o;
      }
    runs.push_back(snapshot(dir / "run"));
  }
  for (const auto& [name, args] : steps) {
    bool same = runs[0].size() == runs[1].size();
    int files = 0;
    for (std::size_t i = 0; same && i < runs[0].size(); ++i) {
      const std::string& f = runs[0][i].first;
      const bool mine = (name == "label" && f.rfind("labels", 0) == 0) || (name == "train" && f.rfind("model", 0) == 0) ||
                        (name == "eval" && f.rfind("metrics", 0) == 0) || (name == "viz" && f.rfind("frame", 0) == 0);
      if (!mine) continue;
      ++files;
      same = runs[1][i].first == f && runs[1][i].second == runs[0][i].second;
    }
    o.check(same && files > 0, name + ": " + std::to_string(files) + " output files byte-identical across reruns");
  }
  // Label output does not depend on the thread count.
  const std::string labels_j1 = slurp(dir / "run" / "labels.jsonl");
  run_cli(ctx, "--config " + d + "/cfg.json --seed 11 --jobs 3 label --dataset " + d +
                   "/ds --split all --labels-per-frame 2 --out " + d + "/labels_j3.jsonl");
  o.check(slurp(dir / "labels_j3.jsonl") == labels_j1, "label: identical with --jobs 1 and --jobs 3");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(const Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
#ifdef SYMLABEL_CLI
  ctx.cli = SYMLABEL_CLI;
#endif
  ctx.work = fs::temp_directory_path() / "symlabel_acceptance";
  ctx.jobs = default_jobs();
  std::set<int> only;
  std::string report_path = "acceptance_report.txt";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--cli" && i + 1 < argc) {
      ctx.cli = argv[++i];
    } else if (a == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (a == "--report" && i + 1 < argc) {
      report_path = argv[++i];
    } else {
      std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--cli path] [--work dir] [--report file]\n");
      return 2;
    }
  }
  fs::create_directories(ctx.work);
  std::ofstream report(report_path);

  const std::vector<Criterion> criteria = {
      {1, "grid exactness", grid_exactness},
      {2, "normalization", normalization},
      {3, "gradient correctness", gradients},
      {4, "registration recovery", registration},
      {5, "pseudo-label accuracy", label_accuracy},
      {6, "label multi-modality", multimodality},
      {7, "toy training", toy_training},
      {8, "ground-truth ablation ordering", ablation},
      {9, "symmetry detection", symmetry_detection},
      {10, "determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Timer t;
    Outcome o;
    try {
      o = c.run(ctx);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    char head[160];
    std::snprintf(head, sizeof(head), "%s %d %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, t.seconds());
    std::string text = head;
    for (const auto& n : o.notes) text += "    " + n + "\n";
    std::fputs(text.c_str(), stdout);
    std::fflush(stdout);
    report << text << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
