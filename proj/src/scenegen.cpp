#include "symlabel/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "symlabel/error.hpp"
#include "symlabel/rng.hpp"

namespace symlabel {
namespace {

constexpr double kPi = std::numbers::pi;

// Appends a triangle whose winding makes its normal point along `outward`.
void add_oriented(TriangleMesh& mesh, int a, int b, int c, const Eigen::Vector3d& outward) {
  const Eigen::Vector3d n =
      (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
  if (n.dot(outward) < 0.0) std::swap(b, c);
  mesh.triangles.push_back({a, b, c});
}

Eigen::Vector3d tri_center(const TriangleMesh& m, int a, int b, int c) {
  return (m.vertices[a] + m.vertices[b] + m.vertices[c]) / 3.0;
}

Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Eigen::Vector3d rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb + Eigen::Vector3d::Constant(v - c);
}

// Albedo of the symmetry-breaking texture at an object-frame point: hue
// follows the azimuth about z, brightness differs between the two halves
// along z, and a thin dark stripe marks azimuth 0.
Eigen::Vector3d texture_albedo(const Eigen::Vector3d& p) {
  const double az = std::atan2(p.y(), p.x());
  const double hue = (az + kPi) / (2.0 * kPi);
  const double value = p.z() >= 0.0 ? 1.0 : 0.55;
  Eigen::Vector3d c = hsv_to_rgb(hue, 0.85, value);
  if (std::abs(az) < 0.12) c *= 0.15;
  return c;
}

const Eigen::Vector3d kUniformAlbedo(0.85, 0.35, 0.25);
const Eigen::Vector3d kLightDir = Eigen::Vector3d(-0.3, -0.5, -1.0).normalized();

}  // namespace

std::string to_string(Shape s) {
  switch (s) {
    case Shape::kCan: return "can";
    case Shape::kBox: return "box";
    case Shape::kBowl: return "bowl";
  }
  return "can";
}

std::string to_string(Appearance a) { return a == Appearance::kUniform ? "uniform" : "texture"; }

Shape shape_from_string(const std::string& s) {
  if (s == "can") return Shape::kCan;
  if (s == "box") return Shape::kBox;
  if (s == "bowl") return Shape::kBowl;
  fail(ErrorKind::kInvalidArgument, "unknown shape '" + s + "' (can|box|bowl)");
}

Appearance appearance_from_string(const std::string& s) {
  if (s == "uniform") return Appearance::kUniform;
  if (s == "texture") return Appearance::kTexture;
  fail(ErrorKind::kInvalidArgument, "unknown appearance '" + s + "' (uniform|texture)");
}

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.data.data()), static_cast<std::streamsize>(image.data.size()));
  if (!os) fail(ErrorKind::kIo, "write failed: " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    fail(ErrorKind::kData, path.string() + ": expected binary 8-bit PPM (P6)");
  }
  is.get();  // single whitespace after the header
  RgbImage img(w, h);
  is.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!is) fail(ErrorKind::kData, path.string() + ": truncated PPM");
  return img;
}

TriangleMesh make_can(double radius, double height, int segments) {
  require(radius > 0 && height > 0, "can dimensions must be positive");
  require(segments >= 3, "can needs at least 3 segments");
  TriangleMesh m;
  const double hz = 0.5 * height;
  for (int j = 0; j < segments; ++j) {
    const double a = 2.0 * kPi * j / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), -hz);
  }
  for (int j = 0; j < segments; ++j) {
    const double a = 2.0 * kPi * j / segments;
    m.vertices.emplace_back(radius * std::cos(a), radius * std::sin(a), hz);
  }
  const int bottom = static_cast<int>(m.vertices.size());
  m.vertices.emplace_back(0, 0, -hz);
  const int top = bottom + 1;
  m.vertices.emplace_back(0, 0, hz);
  for (int j = 0; j < segments; ++j) {
    const int j1 = (j + 1) % segments;
    const int b0 = j, b1 = j1, t0 = segments + j, t1 = segments + j1;
    Eigen::Vector3d out = tri_center(m, b0, b1, t1);
    out.z() = 0;
    add_oriented(m, b0, b1, t1, out);
    add_oriented(m, b0, t1, t0, out);
    add_oriented(m, bottom, b0, b1, -Eigen::Vector3d::UnitZ());
    add_oriented(m, top, t0, t1, Eigen::Vector3d::UnitZ());
  }
  return m;
}

TriangleMesh make_box(double sx, double sy, double sz) {
  require(sx > 0 && sy > 0 && sz > 0, "box dimensions must be positive");
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1 ? 0.5 : -0.5) * sx, (i & 2 ? 0.5 : -0.5) * sy, (i & 4 ? 0.5 : -0.5) * sz);
  }
  // Each face: four corners sharing one coordinate sign.
  const int faces[6][4] = {{0, 2, 6, 4}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 3, 7, 6}, {0, 1, 3, 2}, {4, 5, 7, 6}};
  for (const auto& f : faces) {
    const Eigen::Vector3d out = (m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]] + m.vertices[f[3]]) / 4.0;
    add_oriented(m, f[0], f[1], f[2], out);
    add_oriented(m, f[0], f[2], f[3], out);
  }
  return m;
}

TriangleMesh make_bowl(double radius, double thickness, int segments, int rings) {
  require(radius > 0 && thickness > 0 && thickness < radius, "bowl needs 0 < thickness < radius");
  require(segments >= 3 && rings >= 1, "bowl tessellation too coarse");
  TriangleMesh m;
  // Shell layer 0 = outer, 1 = inner. Ring k at polar angle k/rings * pi/2
  // from the bottom pole; ring 0 is the pole itself.
  auto build_layer = [&](double r) {
    const int pole = static_cast<int>(m.vertices.size());
    m.vertices.emplace_back(0, 0, -r);
    for (int k = 1; k <= rings; ++k) {
      const double alpha = 0.5 * kPi * k / rings;
      for (int j = 0; j < segments; ++j) {
        const double phi = 2.0 * kPi * j / segments;
        m.vertices.emplace_back(r * std::sin(alpha) * std::cos(phi), r * std::sin(alpha) * std::sin(phi),
                                -r * std::cos(alpha));
      }
    }
    return pole;
  };
  const int outer = build_layer(radius);
  const int inner = build_layer(radius - thickness);
  auto ring_vertex = [&](int layer_pole, int k, int j) { return layer_pole + 1 + (k - 1) * segments + (j % segments); };
  for (int layer = 0; layer < 2; ++layer) {
    const int pole = layer == 0 ? outer : inner;
    const double sign = layer == 0 ? 1.0 : -1.0;  // outer faces away from the center, inner towards it
    for (int j = 0; j < segments; ++j) {
      const int a = ring_vertex(pole, 1, j), b = ring_vertex(pole, 1, j + 1);
      add_oriented(m, pole, a, b, sign * tri_center(m, pole, a, b));
    }
    for (int k = 1; k < rings; ++k) {
      for (int j = 0; j < segments; ++j) {
        const int a = ring_vertex(pole, k, j), b = ring_vertex(pole, k, j + 1);
        const int c = ring_vertex(pole, k + 1, j + 1), d = ring_vertex(pole, k + 1, j);
        add_oriented(m, a, b, c, sign * tri_center(m, a, b, c));
        add_oriented(m, a, c, d, sign * tri_center(m, a, c, d));
      }
    }
  }
  for (int j = 0; j < segments; ++j) {  // rim annulus at z = 0
    const int o0 = ring_vertex(outer, rings, j), o1 = ring_vertex(outer, rings, j + 1);
    const int i0 = ring_vertex(inner, rings, j), i1 = ring_vertex(inner, rings, j + 1);
    add_oriented(m, o0, o1, i1, Eigen::Vector3d::UnitZ());
    add_oriented(m, o0, i1, i0, Eigen::Vector3d::UnitZ());
  }
  return m;
}

TriangleMesh make_mesh(Shape shape, std::span<const double> dims) {
  switch (shape) {
    case Shape::kCan:
      require(dims.size() == 2, "can dims: radius height");
      return centered(make_can(dims[0], dims[1]));
    case Shape::kBox:
      require(dims.size() == 3, "box dims: sx sy sz");
      return centered(make_box(dims[0], dims[1], dims[2]));
    case Shape::kBowl:
      require(dims.size() == 2, "bowl dims: radius thickness");
      return centered(make_bowl(dims[0], dims[1]));
  }
  fail(ErrorKind::kInvalidArgument, "unknown shape");
}

TriangleMesh make_mesh(Shape shape) {
  switch (shape) {
    case Shape::kCan: { const double d[] = {0.035, 0.11}; return make_mesh(shape, d); }
    case Shape::kBox: { const double d[] = {0.05, 0.1, 0.15}; return make_mesh(shape, d); }
    case Shape::kBowl: { const double d[] = {0.07, 0.006}; return make_mesh(shape, d); }
  }
  fail(ErrorKind::kInvalidArgument, "unknown shape");
}

SymmetrySet analytic_symmetries(Shape shape) {
  SymmetrySet set;
  const double pi = std::numbers::pi;
  switch (shape) {
    case Shape::kCan:
      set.kind = SymmetryKind::kMixed;
      set.rotations.push_back(Rotation::from_axis_angle(Eigen::Vector3d::UnitX(), pi));
      set.axes.push_back(Eigen::Vector3d::UnitZ());
      break;
    case Shape::kBox:
      set.kind = SymmetryKind::kDiscrete;
      for (int axis = 0; axis < 3; ++axis)
        set.rotations.push_back(Rotation::from_axis_angle(Eigen::Vector3d::Unit(axis), pi));
      break;
    case Shape::kBowl:
      set.kind = SymmetryKind::kContinuousAxis;
      set.axes.push_back(Eigen::Vector3d::UnitZ());
      break;
  }
  return set;
}

CameraIntrinsics default_camera() {
  CameraIntrinsics cam;
  cam.width = 320;
  cam.height = 240;
  cam.fx = cam.fy = 360.0;
  cam.cx = 159.5;
  cam.cy = 119.5;
  return cam;
}

RgbdFrame render_frame(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam,
                       const RenderOptions& options, const std::string& frame_id) {
  const Raster raster = rasterize(mesh, pose, cam);
  RgbdFrame frame;
  frame.frame_id = frame_id;
  frame.intrinsics = cam;
  frame.gt_pose = pose;
  frame.depth = raster.depth;
  frame.mask = Mask(cam.width, cam.height);
  frame.rgb = RgbImage(cam.width, cam.height);

  const Pose inv = pose.inverse();
  Rng noise(mix_seed(options.seed, 0x6e6f697365ULL));
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const int tri = raster.triangle[static_cast<std::size_t>(v) * cam.width + u];
      if (tri < 0) continue;
      frame.mask.at(u, v) = 1;
      const double d = raster.depth.at(u, v);
      const Eigen::Vector3d pc((u - cam.cx) * d / cam.fx, (v - cam.cy) * d / cam.fy, d);
      Eigen::Vector3d n = pose.rotation * mesh.triangle_normal(static_cast<std::size_t>(tri));
      if (n.dot(pc) > 0.0) n = -n;  // two-sided: shade the side facing the camera
      const double shade = 0.25 + 0.75 * std::max(0.0, n.dot(kLightDir));
      const Eigen::Vector3d albedo =
          options.appearance == Appearance::kUniform ? kUniformAlbedo : texture_albedo(inv * pc);
      const Eigen::Vector3d c = (255.0 * shade * albedo).cwiseMin(255.0).cwiseMax(0.0);
      std::uint8_t* p = frame.rgb.px(u, v);
      for (int k = 0; k < 3; ++k) p[k] = static_cast<std::uint8_t>(std::lround(c[k]));
      if (options.depth_noise_sigma > 0.0) {
        float& dn = frame.depth.at(u, v);
        dn = std::max(1e-4f, static_cast<float>(dn + options.depth_noise_sigma * noise.normal()));
      }
    }
  }
  if (frame.mask.count() == 0) fail(ErrorKind::kData, "object is outside the image: " + frame_id);
  return frame;
}

std::string frame_id_for(Shape shape, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%05d", to_string(shape).c_str(), index);
  return buf;
}

Pose sample_frame_pose(const DatasetConfig& config, int index, int retry) {
  Rng rng(mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(index)), static_cast<std::uint64_t>(retry)));
  const Rotation r = random_rotation(rng);
  const Eigen::Vector3d t(rng.uniform(-config.lateral_offset, config.lateral_offset),
                          rng.uniform(-config.lateral_offset, config.lateral_offset),
                          rng.uniform(config.min_distance, config.max_distance));
  return Pose(r, t);
}

std::vector<std::pair<FrameRecord, RgbdFrame>> synthesize_frames(const DatasetConfig& config,
                                                                 const TriangleMesh& mesh,
                                                                 const CameraIntrinsics& cam) {
  require(config.n_frames >= 1, "dataset needs at least one frame");
  require(config.val_fraction >= 0.0 && config.val_fraction < 1.0, "val_fraction must be in [0, 1)");
  const int n_val = static_cast<int>(std::floor(config.n_frames * config.val_fraction + 1e-9));
  std::vector<std::pair<FrameRecord, RgbdFrame>> out;
  out.reserve(config.n_frames);
  for (int i = 0; i < config.n_frames; ++i) {
    FrameRecord rec;
    rec.id = frame_id_for(config.shape, i);
    rec.split = i >= config.n_frames - n_val ? "val" : "train";
    RenderOptions ro;
    ro.appearance = config.appearance;
    ro.depth_noise_sigma = config.depth_noise_sigma;
    ro.seed = mix_seed(config.seed, static_cast<std::uint64_t>(i));
    for (int retry = 0;; ++retry) {
      rec.gt_pose = sample_frame_pose(config, i, retry);
      try {
        RgbdFrame frame = render_frame(mesh, rec.gt_pose, cam, ro, rec.id);
        out.emplace_back(rec, std::move(frame));
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kData || retry > 100) throw;
      }
    }
  }
  return out;
}

void generate_dataset(const DatasetConfig& config, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  if (ec) fail(ErrorKind::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  const TriangleMesh mesh = make_mesh(config.shape);
  const CameraIntrinsics cam = default_camera();
  const auto frames = synthesize_frames(config, mesh, cam);

  nlohmann::json index;
  index["shape"] = to_string(config.shape);
  index["appearance"] = to_string(config.appearance);
  index["seed"] = config.seed;
  index["mesh"] = "mesh.obj";
  index["intrinsics"] = {{"fx", cam.fx}, {"fy", cam.fy}, {"cx", cam.cx}, {"cy", cam.cy},
                         {"width", cam.width}, {"height", cam.height}};
  index["frames"] = nlohmann::json::array();
  for (const auto& [rec, frame] : frames) {
    write_ppm(out_dir / "frames" / (rec.id + ".ppm"), frame.rgb);
    write_depth(out_dir / "frames" / (rec.id + ".depth"), frame.depth);
    write_mask(out_dir / "frames" / (rec.id + ".mask"), frame.mask);
    index["frames"].push_back({{"id", rec.id}, {"split", rec.split}, {"pose", rec.gt_pose.row_major()}});
  }
  write_obj(out_dir / "mesh.obj", mesh);
  std::ofstream os(out_dir / "index.json");
  if (!os) fail(ErrorKind::kIo, "cannot write index.json");
  os << index.dump(1) << '\n';
}

Dataset::Dataset(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::ifstream is(dir_ / "index.json");
  if (!is) fail(ErrorKind::kIo, "cannot read " + (dir_ / "index.json").string());
  try {
    const nlohmann::json index = nlohmann::json::parse(is);
    shape_ = shape_from_string(index.at("shape").get<std::string>());
    appearance_ = appearance_from_string(index.at("appearance").get<std::string>());
    const auto& in = index.at("intrinsics");
    intrinsics_.fx = in.at("fx");
    intrinsics_.fy = in.at("fy");
    intrinsics_.cx = in.at("cx");
    intrinsics_.cy = in.at("cy");
    intrinsics_.width = in.at("width");
    intrinsics_.height = in.at("height");
    intrinsics_.validate();
    const std::string mesh_file = index.at("mesh").get<std::string>();
    mesh_ = read_obj(dir_ / mesh_file);
    mesh_id_ = to_string(shape_);
    for (const auto& f : index.at("frames")) {
      FrameRecord rec;
      rec.id = f.at("id").get<std::string>();
      rec.split = f.at("split").get<std::string>();
      rec.gt_pose = Pose::from_row_major(f.at("pose").get<std::vector<double>>());
      frames_.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kData, (dir_ / "index.json").string() + ": " + e.what());
  }
}

std::vector<FrameRecord> Dataset::split(const std::string& name) const {
  std::vector<FrameRecord> out;
  for (const auto& f : frames_)
    if (f.split == name) out.push_back(f);
  return out;
}

const FrameRecord& Dataset::record(const std::string& id) const {
  for (const auto& f : frames_)
    if (f.id == id) return f;
  fail(ErrorKind::kData, "unknown frame id '" + id + "'");
}

RgbdFrame Dataset::load(const FrameRecord& record) const {
  RgbdFrame frame;
  frame.frame_id = record.id;
  frame.intrinsics = intrinsics_;
  frame.gt_pose = record.gt_pose;
  const auto base = dir_ / "frames" / record.id;
  frame.rgb = read_ppm(base.string() + ".ppm");
  frame.depth = read_depth(base.string() + ".depth");
  frame.mask = read_mask(base.string() + ".mask");
  if (frame.depth.width != intrinsics_.width || frame.mask.width != intrinsics_.width ||
      frame.rgb.width != intrinsics_.width || frame.depth.height != intrinsics_.height) {
    fail(ErrorKind::kData, "frame " + record.id + " has inconsistent raster sizes");
  }
  return frame;
}

}  // namespace symlabel
