#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

#include "symlabel/error.hpp"
#include "symlabel/geom.hpp"

namespace symlabel {
namespace {

constexpr int kLeafSize = 8;

bool hit_less(const KdTree::Hit& a, const KdTree::Hit& b) {
  return a.dist_sq < b.dist_sq || (a.dist_sq == b.dist_sq && a.index < b.index);
}

}  // namespace

KdTree::KdTree(Points points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * points_.size() / kLeafSize + 2);
  if (!points_.empty()) build(0, static_cast<int>(points_.size()));
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

  const int mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double va = points_[a][axis], vb = points_[b][axis];
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

KdTree::Hit KdTree::nearest(const Eigen::Vector3d& q) const {
  require(!points_.empty(), "nearest() on an empty tree");
  Hit best{-1, std::numeric_limits<double>::infinity()};
  // Explicit stack: (node, lower bound on squared distance).
  std::pair<int, double> stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  while (top > 0) {
    const auto [id, bound] = stack[--top];
    if (bound > best.dist_sq) continue;
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const Hit h{idx, (points_[idx] - q).squaredNorm()};
        if (hit_less(h, best)) best = h;
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    stack[top++] = {far, std::max(bound, diff * diff)};
    stack[top++] = {near, bound};
  }
  return best;
}

std::vector<KdTree::Hit> KdTree::knn(const Eigen::Vector3d& q, int k) const {
  require(k >= 1, "knn needs k >= 1");
  auto cmp = [](const Hit& a, const Hit& b) { return hit_less(a, b); };
  std::priority_queue<Hit, std::vector<Hit>, decltype(cmp)> heap(cmp);  // max-heap
  std::pair<int, double> stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  auto worst = [&] {
    return static_cast<int>(heap.size()) < k ? std::numeric_limits<double>::infinity()
                                             : heap.top().dist_sq;
  };
  while (top > 0 && !points_.empty()) {
    const auto [id, bound] = stack[--top];
    if (bound > worst()) continue;
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const Hit h{idx, (points_[idx] - q).squaredNorm()};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(h);
        } else if (hit_less(h, heap.top())) {
          heap.pop();
          heap.push(h);
        }
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    stack[top++] = {far, std::max(bound, diff * diff)};
    stack[top++] = {near, bound};
  }
  std::vector<Hit> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

void KdTree::radius_search(const Eigen::Vector3d& q, double r, std::vector<Hit>& out) const {
  out.clear();
  if (points_.empty()) return;
  const double r2 = r * r;
  std::pair<int, double> stack[128];
  int top = 0;
  stack[top++] = {0, 0.0};
  while (top > 0) {
    const auto [id, bound] = stack[--top];
    if (bound > r2) continue;
    const Node& n = nodes_[id];
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const int idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 <= r2) out.push_back({idx, d2});
      }
      continue;
    }
    const double diff = q[n.axis] - n.split;
    const int near = diff < 0.0 ? n.left : n.right;
    const int far = diff < 0.0 ? n.right : n.left;
    stack[top++] = {far, std::max(bound, diff * diff)};
    stack[top++] = {near, bound};
  }
  std::sort(out.begin(), out.end(), hit_less);
}

// ---------------------------------------------------------------------------

Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                                          const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  // Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
  const Eigen::Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Eigen::Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Eigen::Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = va + vb + vc;
  if (denom == 0.0) return a;  // degenerate triangle
  return a + ab * (vb / denom) + ac * (vc / denom);
}

MeshSurface::MeshSurface(const TriangleMesh& mesh) : mesh_(mesh) {
  mesh_.validate();
  require(!mesh_.triangles.empty(), "MeshSurface needs triangles");
  normals_.resize(mesh_.triangles.size());
  for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) normals_[t] = mesh_.triangle_normal(t);
  tri_order_.resize(mesh_.triangles.size());
  std::iota(tri_order_.begin(), tri_order_.end(), 0);
  build(0, static_cast<int>(tri_order_.size()));
}

int MeshSurface::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{});
  Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  Eigen::Vector3d hi = -lo;
  for (int i = begin; i < end; ++i) {
    for (int v : mesh_.triangles[tri_order_[i]]) {
      lo = lo.cwiseMin(mesh_.vertices[v]);
      hi = hi.cwiseMax(mesh_.vertices[v]);
    }
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4) return id;

  auto centroid = [&](int t) {
    const auto& tri = mesh_.triangles[t];
    return (mesh_.vertices[tri[0]] + mesh_.vertices[tri[1]] + mesh_.vertices[tri[2]]) / 3.0;
  };
  int axis;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(tri_order_.begin() + begin, tri_order_.begin() + mid,
                   tri_order_.begin() + end, [&](int a, int b) {
                     const double ca = centroid(a)[axis], cb = centroid(b)[axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {
double box_dist_sq(const Eigen::Vector3d& q, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi) {
  const Eigen::Vector3d d = (lo - q).cwiseMax(q - hi).cwiseMax(0.0);
  return d.squaredNorm();
}
}  // namespace

void MeshSurface::query(int id, const Eigen::Vector3d& q, Closest& best) const {
  const Node& n = nodes_[id];
  if (n.left < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int t = tri_order_[i];
      const auto& tri = mesh_.triangles[t];
      const Eigen::Vector3d p = closest_point_on_triangle(q, mesh_.vertices[tri[0]],
                                                          mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]);
      const double d2 = (p - q).squaredNorm();
      if (d2 < best.dist_sq || (d2 == best.dist_sq && t < best.triangle)) best = {p, t, d2};
    }
    return;
  }
  const double dl = box_dist_sq(q, nodes_[n.left].lo, nodes_[n.left].hi);
  const double dr = box_dist_sq(q, nodes_[n.right].lo, nodes_[n.right].hi);
  const int first = dl <= dr ? n.left : n.right;
  const int second = dl <= dr ? n.right : n.left;
  const double d_first = std::min(dl, dr), d_second = std::max(dl, dr);
  if (d_first <= best.dist_sq) query(first, q, best);
  if (d_second <= best.dist_sq) query(second, q, best);
}

MeshSurface::Closest MeshSurface::closest(const Eigen::Vector3d& q) const {
  Closest best{Eigen::Vector3d::Zero(), -1, std::numeric_limits<double>::infinity()};
  query(0, q, best);
  return best;
}

double MeshSurface::distance(const Eigen::Vector3d& q) const {
  return std::sqrt(closest(q).dist_sq);
}

}  // namespace symlabel
