#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dsample/autodiff.hpp"

namespace dsample {

using Point3 = std::array<double, 3>;

inline double sq_dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Ordered list of 3D points. Indices are stable identities: samplers
/// return positions into this list.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Point3> pts) : pts_(std::move(pts)) {
    for (std::size_t i = 0; i < pts_.size(); ++i)
      for (double c : pts_[i])
        if (!std::isfinite(c)) throw Error("PointCloud: non-finite coordinate at point " + std::to_string(i));
  }

  static PointCloud from_tensor(const ad::Tensor& t) {
    if (t.rank() != 2 || t.dim(1) != 3) throw_shape("PointCloud::from_tensor", t.shape());
    std::vector<Point3> pts(t.dim(0));
    const auto v = t.values();
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = {v[3 * i], v[3 * i + 1], v[3 * i + 2]};
    return PointCloud(std::move(pts));
  }

  ad::Tensor to_tensor(bool requires_grad = false) const {
    std::vector<double> data;
    data.reserve(pts_.size() * 3);
    for (const auto& p : pts_) data.insert(data.end(), p.begin(), p.end());
    return ad::Tensor::from_data({pts_.size(), 3}, std::move(data), requires_grad);
  }

  PointCloud subset(std::span<const std::size_t> idx) const {
    std::vector<Point3> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(pts_.at(i));
    return PointCloud(std::move(out));
  }

  std::size_t size() const { return pts_.size(); }
  bool empty() const { return pts_.empty(); }
  const Point3& operator[](std::size_t i) const { return pts_[i]; }
  const std::vector<Point3>& points() const { return pts_; }
  auto begin() const { return pts_.begin(); }
  auto end() const { return pts_.end(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<Point3> pts_;
};

inline void require_nonempty(const PointCloud& c, const char* op) {
  if (c.empty()) throw Error(std::string(op) + ": empty point cloud");
}

// ---------------------------------------------------------------------------
// Farthest point sampling

namespace detail {

inline std::size_t fps_extend(const PointCloud& P, std::vector<std::size_t>& chosen, std::vector<double>& mind,
                              std::vector<char>& taken, std::size_t m) {
  while (chosen.size() < m) {
    std::size_t best = P.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < P.size(); ++i) {
      if (!taken[i] && mind[i] > best_d) {
        best_d = mind[i];
        best = i;
      }
    }
    chosen.push_back(best);
    taken[best] = 1;
    for (std::size_t i = 0; i < P.size(); ++i) mind[i] = std::min(mind[i], sq_dist(P[i], P[best]));
  }
  return chosen.size();
}

}  // namespace detail

/// Greedy max-min subset: starts at `start`, then repeatedly takes the point
/// farthest from everything chosen so far. Ties go to the lowest index.
inline std::vector<std::size_t> fps(const PointCloud& P, std::size_t m, std::size_t start = 0) {
  require_nonempty(P, "fps");
  if (m < 1 || m > P.size())
    throw Error("fps: sample size " + std::to_string(m) + " outside [1, " + std::to_string(P.size()) + "]");
  if (start >= P.size()) throw Error("fps: start index out of range");
  std::vector<std::size_t> chosen{start};
  std::vector<char> taken(P.size(), 0);
  taken[start] = 1;
  std::vector<double> mind(P.size());
  for (std::size_t i = 0; i < P.size(); ++i) mind[i] = sq_dist(P[i], P[start]);
  detail::fps_extend(P, chosen, mind, taken, m);
  return chosen;
}

/// Continues FPS from an already-selected set of distinct indices until `m`
/// indices are chosen. Candidates exclude the seed set.
inline std::vector<std::size_t> fps_complete(const PointCloud& P, std::vector<std::size_t> seed, std::size_t m) {
  require_nonempty(P, "fps_complete");
  if (m > P.size()) throw Error("fps_complete: sample size exceeds cloud size");
  if (seed.empty()) return fps(P, m, 0);
  if (seed.size() >= m) {
    seed.resize(m);
    return seed;
  }
  std::vector<char> taken(P.size(), 0);
  std::vector<double> mind(P.size(), std::numeric_limits<double>::infinity());
  for (auto s : seed) {
    if (s >= P.size() || taken[s]) throw Error("fps_complete: seed indices must be distinct and in range");
    taken[s] = 1;
    for (std::size_t i = 0; i < P.size(); ++i) mind[i] = std::min(mind[i], sq_dist(P[i], P[s]));
  }
  detail::fps_extend(P, seed, mind, taken, m);
  return seed;
}

// ---------------------------------------------------------------------------
// Exact k-nearest-neighbor search

struct Neighbor {
  std::size_t index;
  double distance;  // Euclidean, not squared

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// kd-tree over a copy of a cloud's points. Queries are exact and order
/// results by (distance, index), matching a full brute-force sort.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud) : pts_(cloud.points()), perm_(cloud.size()) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    if (!pts_.empty()) build(0, pts_.size());
  }

  std::size_t size() const { return pts_.size(); }

  std::vector<Neighbor> knn(const Point3& q, std::size_t k) const {
    if (k < 1 || k > pts_.size())
      throw Error("knn: k=" + std::to_string(k) + " outside [1, " + std::to_string(pts_.size()) + "]");
    Heap heap;
    search(0, q, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      out[i] = {heap.top().second, std::sqrt(heap.top().first)};
      heap.pop();
    }
    return out;
  }

  /// Nearest point as (index, squared distance).
  std::pair<std::size_t, double> nearest(const Point3& q) const {
    if (pts_.empty()) throw Error("knn: empty index");
    Heap heap;
    search(0, q, 1, heap);
    return {heap.top().second, heap.top().first};
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin, end;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  using Entry = std::pair<double, std::size_t>;  // (squared distance, index)
  using Heap = std::priority_queue<Entry>;       // max-heap: worst kept on top

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;
    Point3 lo = pts_[perm_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i)
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], pts_[perm_[i]][a]);
        hi[a] = std::max(hi[a], pts_[perm_[i]][a]);
      }
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    const std::size_t mid = begin + (end - begin) / 2;
    auto first = perm_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, perm_.begin() + static_cast<std::ptrdiff_t>(mid),
                     perm_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                       return std::pair(pts_[a][axis], a) < std::pair(pts_[b][axis], b);
                     });
    const double split = pts_[perm_[mid]][axis];
    const std::size_t l = build(begin, mid);
    const std::size_t r = build(mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  static void offer(Heap& heap, std::size_t k, Entry e) {
    if (heap.size() < k) {
      heap.push(e);
    } else if (e < heap.top()) {
      heap.pop();
      heap.push(e);
    }
  }

  void search(std::size_t id, const Point3& q, std::size_t k, Heap& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) offer(heap, k, {sq_dist(q, pts_[perm_[i]]), perm_[i]});
      return;
    }
    const double diff = q[n.axis] - n.split;
    const std::size_t near = diff <= 0.0 ? n.left : n.right;
    const std::size_t far = diff <= 0.0 ? n.right : n.left;
    search(near, q, k, heap);
    // Points on the far side are at least |diff| away; equality is still
    // visited so index tie-breaks stay exact.
    if (heap.size() < k || diff * diff <= heap.top().first) search(far, q, k, heap);
  }

  std::vector<Point3> pts_;
  std::vector<std::size_t> perm_;
  std::vector<Node> nodes_;
};

inline std::vector<Neighbor> knn(const KdTree& index, const Point3& q, std::size_t k) { return index.knn(q, k); }

// ---------------------------------------------------------------------------
// Nearest-neighbor losses on plain clouds

/// (1/|X|) sum_x min_y ||x - y||^2
inline double nn_loss_avg(const PointCloud& X, const PointCloud& Y) {
  require_nonempty(X, "nn_loss_avg");
  require_nonempty(Y, "nn_loss_avg");
  const KdTree tree(Y);
  double s = 0.0;
  for (const auto& x : X) s += tree.nearest(x).second;
  return s / static_cast<double>(X.size());
}

/// max_x min_y ||x - y||^2
inline double nn_loss_max(const PointCloud& X, const PointCloud& Y) {
  require_nonempty(X, "nn_loss_max");
  require_nonempty(Y, "nn_loss_max");
  const KdTree tree(Y);
  double worst = 0.0;
  for (const auto& x : X) worst = std::max(worst, tree.nearest(x).second);
  return worst;
}

inline double chamfer(const PointCloud& S, const PointCloud& T) { return nn_loss_avg(S, T) + nn_loss_avg(T, S); }

/// Chamfer distance between a sampled source and the sampled template after
/// the template was rotated by the ground-truth rotation.
inline double sampling_consistency(const PointCloud& source_sample, const PointCloud& rotated_template_sample) {
  return chamfer(source_sample, rotated_template_sample);
}

// ---------------------------------------------------------------------------
// Differentiable versions over [n, 3] tensors

/// For each row of X, squared distance to its nearest row of Y ([|X|]).
/// Gradients reach both X and the matched rows of Y.
inline ad::Tensor nearest_sq_dist(const ad::Tensor& X, const ad::Tensor& Y) {
  if (X.rank() != 2 || Y.rank() != 2 || X.dim(1) != 3 || Y.dim(1) != 3) throw_shape("nearest_sq_dist", X.shape(), Y.shape());
  if (X.dim(0) == 0 || Y.dim(0) == 0) throw Error("nearest_sq_dist: empty point cloud");
  const std::size_t a = X.dim(0), b = Y.dim(0);
  const auto x = X.values();
  const auto y = Y.values();
  std::vector<double> out(a);
  std::vector<std::size_t> arg(a);
  for (std::size_t i = 0; i < a; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bj = 0;
    const double x0 = x[3 * i], x1 = x[3 * i + 1], x2 = x[3 * i + 2];
    for (std::size_t j = 0; j < b; ++j) {
      const double d0 = x0 - y[3 * j], d1 = x1 - y[3 * j + 1], d2 = x2 - y[3 * j + 2];
      const double d = d0 * d0 + d1 * d1 + d2 * d2;
      if (d < best) {
        best = d;
        bj = j;
      }
    }
    out[i] = best;
    arg[i] = bj;
  }
  return ad::detail::make_op("nearest_sq_dist", {a}, std::move(out), {X, Y}, [arg = std::move(arg)](ad::detail::Node& self) {
    const auto& x = ad::detail::in_value(self, 0);
    const auto& y = ad::detail::in_value(self, 1);
    double* gx = ad::detail::sink(self, 0);
    double* gy = ad::detail::sink(self, 1);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      const double g = 2.0 * self.grad[i];
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = g * (x[3 * i + c] - y[3 * arg[i] + c]);
        if (gx) gx[3 * i + c] += d;
        if (gy) gy[3 * arg[i] + c] -= d;
      }
    }
  });
}

inline ad::Tensor nn_loss_avg(const ad::Tensor& X, const ad::Tensor& Y) { return ad::mean(nearest_sq_dist(X, Y)); }

inline ad::Tensor nn_loss_max(const ad::Tensor& X, const ad::Tensor& Y) {
  return ad::max_over_axis(nearest_sq_dist(X, Y), 0);
}

inline ad::Tensor chamfer(const ad::Tensor& S, const ad::Tensor& T) {
  return ad::add(nn_loss_avg(S, T), nn_loss_avg(T, S));
}

inline ad::Tensor sampling_consistency(const ad::Tensor& source_sample, const ad::Tensor& rotated_template_sample) {
  return chamfer(source_sample, rotated_template_sample);
}

}  // namespace dsample
