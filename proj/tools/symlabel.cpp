#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "symlabel/config.hpp"
#include "symlabel/error.hpp"
#include "symlabel/evalviz.hpp"
#include "symlabel/ipdf.hpp"
#include "symlabel/labeler.hpp"
#include "symlabel/parallel.hpp"
#include "symlabel/pipeline.hpp"
#include "symlabel/scenegen.hpp"
#include "symlabel/symmetry.hpp"

namespace fs = std::filesystem;
using namespace symlabel;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kDataError = 3, kNumericError = 4 };

struct Common {
  std::string config_path;
  int jobs = default_jobs();
  std::optional<std::uint64_t> seed;
  std::string command_line;
};

void log(const std::string& msg) { std::cerr << "[symlabel] " << msg << "\n"; }

Config load(const Common& common) {
  Config c = resolve_config(common.config_path.empty() ? std::nullopt
                                                       : std::optional<fs::path>(common.config_path));
  if (common.seed) {
    c.seed = *common.seed;
    c.training.seed = *common.seed;
  }
  return c;
}

void log_config(const Config& c) { log("config " + to_json(c).dump()); }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << text;
}

std::vector<FrameRecord> frames_for(const Dataset& ds, const std::string& split, int limit) {
  std::vector<FrameRecord> frames = split == "all" ? ds.frames() : ds.split(split);
  if (frames.empty()) fail(ErrorKind::kData, "dataset has no '" + split + "' frames");
  if (limit > 0 && static_cast<std::size_t>(limit) < frames.size()) frames.resize(static_cast<std::size_t>(limit));
  return frames;
}

/// "analytic" (shape group of the dataset), "pose" (render pose only) or a
/// symmetry JSON file; continuous axes discretized.
std::vector<Rotation> gt_symmetries(const std::string& gt, const Dataset& ds, int samples) {
  if (gt == "pose") return {Rotation::identity()};
  const SymmetrySet set = gt == "analytic" ? analytic_symmetries(ds.shape()) : read_symmetry_file(gt);
  return discretize(set, samples);
}

int run_grid(const Common& common, int level, const std::string& out) {
  const Config c = load(common);
  log_config(c);
  const auto t0 = std::chrono::steady_clock::now();
  const EquivolumetricGrid grid = generate_grid(level);
  write_grid(out, grid);
  log("grid level " + std::to_string(level) + ": " + std::to_string(grid.size()) + " rotations in " +
      std::to_string(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()) + " s");
  write_manifest({common.command_line, to_json(c), {}, {out}});
  return kOk;
}

int run_synth(const Common& common, DatasetConfig dc, const std::string& shape, const std::string& appearance,
              const std::string& out) {
  const Config c = load(common);
  log_config(c);
  dc.shape = shape_from_string(shape);
  dc.appearance = appearance_from_string(appearance);
  dc.seed = c.seed;
  generate_dataset(dc, out);
  log("wrote " + std::to_string(dc.n_frames) + " " + shape + " frames to " + out);
  json cfg = to_json(c);
  cfg["synth"] = {{"shape", shape}, {"appearance", appearance}, {"n", dc.n_frames},
                  {"val_fraction", dc.val_fraction}, {"depth_noise", dc.depth_noise_sigma}};
  write_manifest({common.command_line, cfg, {}, {out}});
  return kOk;
}

int run_symmetries(const Common& common, const std::string& mesh_path, const std::string& shape, bool analytic,
                   const std::string& out) {
  const Config c = load(common);
  log_config(c);
  SymmetrySet set;
  std::vector<fs::path> inputs;
  if (analytic) {
    if (shape.empty()) fail(ErrorKind::kInvalidArgument, "--analytic needs --shape");
    set = analytic_symmetries(shape_from_string(shape));
  } else {
    TriangleMesh mesh;
    if (!mesh_path.empty()) {
      mesh = read_obj(mesh_path);
      inputs.push_back(mesh_path);
    } else if (!shape.empty()) {
      mesh = make_mesh(shape_from_string(shape));
    } else {
      fail(ErrorKind::kInvalidArgument, "give --mesh or --shape");
    }
    set = detect_symmetries(mesh, c.symmetry);
  }
  write_symmetry_file(out, set);
  log("symmetry " + to_string(set.kind) + ": " + std::to_string(set.rotations.size()) + " discrete, " +
      std::to_string(set.axes.size()) + " axes");
  write_manifest({common.command_line, to_json(c), inputs, {out}});
  return kOk;
}

int run_label(const Common& common, const std::string& dataset, const std::string& mesh_path, const std::string& split,
              int limit, std::optional<int> per_frame, std::optional<int> attempts, const std::string& out) {
  Config c = load(common);
  if (per_frame) c.labels_per_frame = *per_frame;
  if (attempts) c.labeler.attempts = *attempts;
  log_config(c);
  const Dataset ds(dataset);
  const std::vector<FrameRecord> frames = frames_for(ds, split, limit);
  LabelRunSummary summary;
  std::vector<fs::path> inputs{fs::path(dataset) / "index.json"};
  TriangleMesh mesh = ds.mesh();
  if (!mesh_path.empty()) {
    mesh = read_obj(mesh_path);
    inputs.push_back(mesh_path);
  }
  const auto sets = build_label_set(ds, frames, mesh, c.labels_per_frame, c.labeler, c.seed, common.jobs, &summary);
  write_labels(out, sets);
  log("labeled " + std::to_string(summary.labeled_frames) + "/" + std::to_string(summary.frames) + " frames, " +
      std::to_string(summary.labels) + " labels, " + std::to_string(summary.rejected) + " rejected runs");
  write_manifest({common.command_line, to_json(c), inputs, {out}});
  return kOk;
}

int run_train(const Common& common, const std::string& dataset, const std::string& labels_path,
              const std::string& mode_name, const std::string& symmetry, std::optional<int> epochs,
              std::optional<int> iterations, std::optional<int> batch, std::optional<int> limit,
              const std::string& out) {
  Config c = load(common);
  if (epochs) c.training.epochs = *epochs;
  if (iterations) c.training.iterations_per_epoch = *iterations;
  if (batch) c.training.batch_size = *batch;
  c.training.validate();
  log_config(c);
  const LabelMode mode = label_mode_from_string(mode_name);
  const Dataset ds(dataset);
  const std::vector<FrameRecord> train_frames = frames_for(ds, "train", limit.value_or(0));
  const std::vector<FrameRecord> val_frames = ds.split("val");

  std::vector<fs::path> inputs{fs::path(dataset) / "index.json"};
  std::vector<PoseLabelSet> labels;
  if (mode == LabelMode::kPseudo) {
    if (labels_path.empty()) fail(ErrorKind::kInvalidArgument, "--gt-mode pseudo needs --labels");
    labels = read_labels(labels_path);
    inputs.push_back(labels_path);
  }
  const std::vector<Rotation> sym = gt_symmetries(symmetry, ds, c.eval.symmetry_samples);
  const int size = c.network.image_size;
  const auto train_set = make_training_set(ds, train_frames, mode, labels, sym, c.training.crop_size, size, common.jobs);
  const auto val_set = make_eval_set(ds, val_frames, sym, c.training.crop_size, size, common.jobs);
  log(std::to_string(train_set.size()) + " training frames (" + mode_name + "), " + std::to_string(val_set.size()) +
      " validation frames");

  ImplicitModel model(c.network);
  model.init_random(mix_seed(c.seed, 17));
  const TrainingHistory h = train(model, train_set, val_set, c.training, [](int e, double loss, double llh) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "epoch %d loss %.4f val_llh %.4f", e + 1, loss, llh);
    log(buf);
  });
  const json history = {{"epoch_loss", h.epoch_loss},
                        {"val_llh", h.val_llh},
                        {"best_epoch", h.best_epoch},
                        {"stopped_early", h.stopped_early}};
  json meta = {{"gt_mode", mode_name}, {"dataset", dataset}, {"training", to_json(c.training)}};
  write_model(out, model, meta);
  const fs::path history_path = out + ".history.json";
  write_text(history_path, history.dump(2) + "\n");
  write_manifest({common.command_line, to_json(c), inputs, {out, history_path}});
  return kOk;
}

int run_eval(const Common& common, const std::string& model_path, const std::string& dataset, const std::string& gt,
             const std::string& split, std::optional<int> grid_level, int limit, const std::string& out,
             bool per_frame) {
  Config c = load(common);
  if (grid_level) c.eval.grid_level = *grid_level;
  log_config(c);
  const ImplicitModel model = read_model(model_path);
  const Dataset ds(dataset);
  const auto frames = frames_for(ds, split, limit);
  const std::vector<Rotation> sym = gt_symmetries(gt, ds, c.eval.symmetry_samples);
  const auto samples = make_eval_set(ds, frames, sym, c.training.crop_size, model.spec().image_size, common.jobs);
  std::vector<FrameMetrics> frame_metrics;
  const MetricsReport r = evaluate(model, samples, c.eval.grid_level, c.eval.threshold, common.jobs, &frame_metrics);
  json report = to_json(r);
  report["gt"] = gt;
  report["split"] = split;
  if (per_frame) {
    report["frames"] = json::array();
    for (const auto& m : frame_metrics)
      report["frames"].push_back({{"frame_id", m.frame_id},
                                  {"llh", m.llh},
                                  {"maad", m.maad},
                                  {"recall_maad", m.recall_maad},
                                  {"recall_empty", m.recall_empty}});
  }
  const std::string text = report.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    write_manifest({common.command_line, to_json(c), {model_path, fs::path(dataset) / "index.json"}, {out}});
  }
  if (r.recall_empty_frames > 0)
    log(std::to_string(r.recall_empty_frames) + " frames had no cell above the threshold (recall reported as 180)");
  return kOk;
}

int run_viz(const Common& common, const std::string& model_path, const std::string& dataset, const std::string& frame,
            const std::string& gt, std::optional<int> grid_level, const std::string& out) {
  Config c = load(common);
  if (grid_level) c.eval.grid_level = *grid_level;
  log_config(c);
  const ImplicitModel model = read_model(model_path);
  const Dataset ds(dataset);
  const FrameRecord& rec = ds.record(frame);
  const std::vector<float> image = crop_frame(ds.load(rec), c.training.crop_size, model.spec().image_size);
  const OrientationDistribution dist = predict_distribution(model, image, c.eval.grid_level);
  std::vector<Rotation> gt_rots;
  if (!gt.empty()) gt_rots = symmetric_orientations(rec.gt_pose.rotation, gt_symmetries(gt, ds, c.eval.symmetry_samples));
  SvgOptions opt;
  opt.threshold = c.eval.threshold;
  opt.title = frame;
  write_text(out, mollweide_svg(dist, gt_rots, opt));
  write_manifest({common.command_line, to_json(c), {model_path, fs::path(dataset) / "index.json"}, {out}});
  return kOk;
}

int run_infer(const Common& common, const std::string& model_path, const std::string& dataset,
              const std::string& frame, bool distribution, std::optional<int> grid_level, const std::string& out) {
  Config c = load(common);
  if (grid_level) c.eval.grid_level = *grid_level;
  log_config(c);
  const ImplicitModel model = read_model(model_path);
  const Dataset ds(dataset);
  const FrameRecord& rec = ds.record(frame);
  const std::vector<float> image = crop_frame(ds.load(rec), c.training.crop_size, model.spec().image_size);
  json result = {{"frame_id", frame}};
  if (distribution) {
    const OrientationDistribution dist = predict_distribution(model, image, c.eval.grid_level);
    result["grid_level"] = dist.grid_level;
    result["cell_volume"] = dist.cell_volume;
    result["log_probs"] = dist.log_probs;
  } else {
    const ModeResult m = predict_mode(model, image);
    const auto& q = m.rotation.quaternion();
    result["rotation_wxyz"] = {q.w(), q.x(), q.y(), q.z()};
    result["logit"] = m.logit;
  }
  const std::string text = result.dump(distribution ? -1 : 2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    write_manifest({common.command_line, to_json(c), {model_path, fs::path(dataset) / "index.json"}, {out}});
  }
  return kOk;
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return kUsage;
    case ErrorKind::kNumeric: return kNumericError;
    default: return kDataError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Symmetry-aware pseudo pose labels and implicit SO(3) distributions"};
  app.require_subcommand(1);
  Common common;
  for (int i = 0; i < argc; ++i) common.command_line += (i ? " " : "") + std::string(argv[i]);
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--jobs", common.jobs, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "global seed (overrides config and SYMLABEL_SEED)");

  std::function<int()> action;

  auto* grid = app.add_subcommand("grid", "write an equivolumetric SO(3) grid");
  int level = 2;
  std::string out;
  grid->add_option("--level", level)->check(CLI::Range(0, kMaxGridLevel));
  grid->add_option("--out", out)->required();
  grid->callback([&] { action = [&] { return run_grid(common, level, out); }; });

  auto* synth = app.add_subcommand("synth", "render a synthetic RGB-D dataset");
  DatasetConfig dc;
  std::string shape = "can", appearance = "uniform";
  synth->add_option("--shape", shape)->check(CLI::IsMember({"can", "box", "bowl"}));
  synth->add_option("--n", dc.n_frames)->check(CLI::PositiveNumber);
  synth->add_option("--appearance", appearance)->check(CLI::IsMember({"uniform", "texture"}));
  synth->add_option("--val-fraction", dc.val_fraction)->check(CLI::Range(0.0, 1.0));
  synth->add_option("--depth-noise", dc.depth_noise_sigma, "depth noise sigma in meters")->check(CLI::NonNegativeNumber);
  synth->add_option("--out", out)->required();
  synth->callback([&] { action = [&] { return run_synth(common, dc, shape, appearance, out); }; });

  auto* sym = app.add_subcommand("symmetries", "detect the proper symmetries of a mesh");
  std::string mesh_path, sym_shape;
  bool analytic = false;
  sym->add_option("--mesh", mesh_path)->check(CLI::ExistingFile);
  sym->add_option("--shape", sym_shape)->check(CLI::IsMember({"can", "box", "bowl"}));
  sym->add_flag("--analytic", analytic, "write the construction-time group of --shape instead");
  sym->add_option("--out", out)->required();
  sym->callback([&] { action = [&] { return run_symmetries(common, mesh_path, sym_shape, analytic, out); }; });

  auto* label = app.add_subcommand("label", "generate pseudo ground-truth pose labels");
  std::string dataset, split = "train";
  int limit = 0;
  std::optional<int> per_frame, attempts;
  label->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  label->add_option("--mesh", mesh_path, "OBJ mesh (default: the dataset mesh)")->check(CLI::ExistingFile);
  label->add_option("--attempts", attempts, "registration restarts per label")->check(CLI::PositiveNumber);
  label->add_option("--split", split)->check(CLI::IsMember({"train", "val", "all"}));
  label->add_option("--limit", limit, "first N frames only")->check(CLI::NonNegativeNumber);
  label->add_option("--labels-per-frame", per_frame)->check(CLI::PositiveNumber);
  label->add_option("--out", out)->required();
  label->callback([&] { action = [&] { return run_label(common, dataset, mesh_path, split, limit, per_frame, attempts, out); }; });

  auto* tr = app.add_subcommand("train", "train the implicit orientation model");
  std::string labels_path, gt_mode = "pseudo", symmetry = "analytic";
  std::optional<int> epochs, iterations, batch, train_limit;
  tr->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  tr->add_option("--labels", labels_path, "label file (pseudo mode)")->check(CLI::ExistingFile);
  tr->add_option("--gt-mode", gt_mode)->check(CLI::IsMember({"pseudo", "single", "analytic"}));
  tr->add_option("--symmetry", symmetry, "analytic | pose | symmetry file; validation GT and analytic labels");
  tr->add_option("--epochs", epochs)->check(CLI::PositiveNumber);
  tr->add_option("--iterations", iterations, "iterations per epoch")->check(CLI::PositiveNumber);
  tr->add_option("--batch", batch)->check(CLI::PositiveNumber);
  tr->add_option("--limit", train_limit, "first N training frames only")->check(CLI::PositiveNumber);
  tr->add_option("--out", out)->required();
  tr->callback([&] {
    action = [&] {
      return run_train(common, dataset, labels_path, gt_mode, symmetry, epochs, iterations, batch, train_limit, out);
    };
  });

  auto* ev = app.add_subcommand("eval", "LLH, MAAD and Recall MAAD of a model");
  std::string model_path, gt = "analytic";
  std::optional<int> grid_level;
  bool frames_flag = false;
  std::string eval_split = "val";
  ev->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  ev->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  ev->add_option("--gt", gt, "analytic | pose | symmetry file");
  ev->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "all"}));
  ev->add_option("--grid-level", grid_level)->check(CLI::Range(0, kMaxGridLevel));
  ev->add_option("--limit", limit)->check(CLI::NonNegativeNumber);
  ev->add_flag("--per-frame", frames_flag);
  ev->add_option("--out", out);
  ev->callback([&] {
    action = [&] { return run_eval(common, model_path, dataset, gt, eval_split, grid_level, limit, out, frames_flag); };
  });

  auto* viz = app.add_subcommand("viz", "Mollweide SVG of a predicted distribution");
  std::string frame, viz_gt;
  viz->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  viz->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  viz->add_option("--frame", frame)->required();
  viz->add_option("--gt", viz_gt, "overlay: analytic | pose | symmetry file");
  viz->add_option("--grid-level", grid_level)->check(CLI::Range(0, kMaxGridLevel));
  viz->add_option("--out", out)->required();
  viz->callback([&] { action = [&] { return run_viz(common, model_path, dataset, frame, viz_gt, grid_level, out); }; });

  auto* inf = app.add_subcommand("infer", "predict the mode or the full distribution for one frame");
  bool want_mode = false, want_dist = false;
  inf->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  inf->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  inf->add_option("--frame", frame)->required();
  auto* mode_flag = inf->add_flag("--mode", want_mode);
  inf->add_flag("--distribution", want_dist)->excludes(mode_flag);
  inf->add_option("--grid-level", grid_level)->check(CLI::Range(0, kMaxGridLevel));
  inf->add_option("--out", out);
  inf->callback([&] {
    action = [&] { return run_infer(common, model_path, dataset, frame, want_dist, grid_level, out); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  try {
    return action();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}
