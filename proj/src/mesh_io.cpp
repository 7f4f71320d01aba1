#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "symlabel/error.hpp"
#include "symlabel/geom.hpp"

namespace symlabel {

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  TriangleMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Eigen::Vector3d v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        fail(ErrorKind::kData, path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        // "i", "i/t", "i//n", "i/t/n"; negative indices are relative.
        int i = std::stoi(tok.substr(0, tok.find('/')));
        if (i < 0) i = static_cast<int>(mesh.vertices.size()) + i + 1;
        idx.push_back(i - 1);
      }
      if (idx.size() < 3) {
        fail(ErrorKind::kData, path.string() + ":" + std::to_string(line_no) + ": face needs 3 vertices");
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  try {
    mesh.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kData, path.string() + ": " + e.what());
  }
  return mesh;
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << std::setprecision(17);
  for (const auto& v : mesh.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::kIo, "cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  if (line.rfind("ply", 0) != 0) fail(ErrorKind::kData, path.string() + ": not a PLY file");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") fail(ErrorKind::kData, path.string() + ": only ASCII PLY is supported");
    } else if (tag == "element") {
      std::string name;
      ls >> name;
      in_vertex = name == "vertex";
      if (in_vertex) ls >> count;
    } else if (tag == "property" && in_vertex) {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (tag == "end_header") {
      break;
    }
  }
  auto find = [&](const std::string& n) {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i] == n) return static_cast<int>(i);
    return -1;
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int inx = find("nx"), iny = find("ny"), inz = find("nz");
  if (ix < 0 || iy < 0 || iz < 0) fail(ErrorKind::kData, path.string() + ": missing x/y/z");
  const bool has_n = inx >= 0 && iny >= 0 && inz >= 0;

  PointCloud cloud;
  Points normals;
  std::vector<double> vals(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (auto& v : vals) {
      if (!(is >> v)) fail(ErrorKind::kData, path.string() + ": truncated vertex list");
    }
    cloud.points.emplace_back(vals[ix], vals[iy], vals[iz]);
    if (has_n) normals.emplace_back(Eigen::Vector3d(vals[inx], vals[iny], vals[inz]).normalized());
  }
  if (has_n) cloud.normals = std::move(normals);
  return cloud;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path);
  if (!os) fail(ErrorKind::kIo, "cannot write " + path.string());
  os << "ply\nformat ascii 1.0\nelement vertex " << cloud.size() << "\n"
     << "property double x\nproperty double y\nproperty double z\n";
  if (cloud.normals) os << "property double nx\nproperty double ny\nproperty double nz\n";
  os << "end_header\n" << std::setprecision(17);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    os << p.x() << ' ' << p.y() << ' ' << p.z();
    if (cloud.normals) {
      const auto& n = (*cloud.normals)[i];
      os << ' ' << n.x() << ' ' << n.y() << ' ' << n.z();
    }
    os << '\n';
  }
}

}  // namespace symlabel
