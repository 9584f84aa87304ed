#pragma once

#include <unordered_map>
#include <vector>

#include "scenecomp/geom/types.hpp"

namespace scenecomp {

// Exact nearest-neighbor queries over a uniform spatial hash grid. Cells are
// scanned in expanding Chebyshev rings around the query; a ring at distance r
// cannot hold anything nearer than (r-1) * cell, which gives the exact
// termination rule. Matches the O(n^2) oracle on every input by construction.
class SpatialHashIndex {
 public:
  SpatialHashIndex(const PointCloud& pc, double cell_size)
      : points_(&pc.points), cell_(cell_size) {
    SC_CHECK(cell_size > 0, "cell size must be positive");
    SC_CHECK(!pc.empty(), "cannot index an empty cloud");
    for (int32_t i = 0; i < static_cast<int32_t>(pc.points.size()); ++i)
      buckets_[key_of(cell_of(pc.points[i]))].push_back(i);
    Cell lo = cell_of(pc.points[0]), hi = lo;
    for (const auto& p : pc.points) {
      Cell c = cell_of(p);
      lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
      hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    }
    lo_ = lo;
    hi_ = hi;
  }

  // Distance to the nearest indexed point.
  double nearest_distance(const Vec3& q) const {
    Cell qc = cell_of(q);
    // Chebyshev cell range that can hold any point at all.
    int64_t r_min = 0, r_far = 0;
    for (int a = 0; a < 3; ++a) {
      int64_t qa = (a == 0 ? qc.x : a == 1 ? qc.y : qc.z);
      int64_t la = (a == 0 ? lo_.x : a == 1 ? lo_.y : lo_.z);
      int64_t ha = (a == 0 ? hi_.x : a == 1 ? hi_.y : hi_.z);
      r_min = std::max(r_min, std::max(la - qa, qa - ha));
      r_far = std::max(r_far, std::max(std::abs(qa - la), std::abs(qa - ha)));
    }
    r_min = std::max<int64_t>(r_min, 0);
    double best = std::numeric_limits<double>::infinity();
    for (int64_t r = r_min; r <= r_far; ++r) {
      scan_ring(q, qc, r, best);
      // Ring r+1 holds nothing nearer than r * cell.
      if (best <= double(r) * cell_) break;
    }
    return best;
  }

  // True when some indexed point lies within tau of q. Exact.
  bool within(const Vec3& q, double tau) const { return nearest_distance(q) <= tau; }

 private:
  struct Cell {
    int64_t x, y, z;
  };

  Cell cell_of(const Vec3& p) const {
    return {static_cast<int64_t>(std::floor(p.x / cell_)),
            static_cast<int64_t>(std::floor(p.y / cell_)),
            static_cast<int64_t>(std::floor(p.z / cell_))};
  }

  static uint64_t key_of(const Cell& c) {
    uint64_t h = 1469598103934665603ull;
    for (int64_t v : {c.x, c.y, c.z}) {
      h ^= static_cast<uint64_t>(v);
      h *= 1099511628211ull;
    }
    return h;
  }

  void scan_cell(const Vec3& q, const Cell& c, double& best) const {
    auto it = buckets_.find(key_of(c));
    if (it == buckets_.end()) return;
    for (int32_t idx : it->second) {
      double d = ((*points_)[idx] - q).norm();
      best = std::min(best, d);
    }
  }

  void scan_ring(const Vec3& q, const Cell& qc, int64_t r, double& best) const {
    if (r == 0) {
      if (qc.x >= lo_.x && qc.x <= hi_.x && qc.y >= lo_.y && qc.y <= hi_.y &&
          qc.z >= lo_.z && qc.z <= hi_.z)
        scan_cell(q, qc, best);
      return;
    }
    // Only the part of the ring inside the occupied cell bounds matters.
    int64_t x0 = std::max(qc.x - r, lo_.x), x1 = std::min(qc.x + r, hi_.x);
    int64_t y0 = std::max(qc.y - r, lo_.y), y1 = std::min(qc.y + r, hi_.y);
    int64_t z0 = std::max(qc.z - r, lo_.z), z1 = std::min(qc.z + r, hi_.z);
    for (int64_t x = x0; x <= x1; ++x) {
      bool face_x = std::abs(x - qc.x) == r;
      for (int64_t y = y0; y <= y1; ++y) {
        bool face_xy = face_x || std::abs(y - qc.y) == r;
        if (face_xy) {
          for (int64_t z = z0; z <= z1; ++z) scan_cell(q, {x, y, z}, best);
        } else {
          for (int64_t z : {qc.z - r, qc.z + r})
            if (z >= z0 && z <= z1) scan_cell(q, {x, y, z}, best);
        }
      }
    }
  }

  const std::vector<Vec3>* points_;
  double cell_;
  std::unordered_map<uint64_t, std::vector<int32_t>> buckets_;
  Cell lo_{0, 0, 0}, hi_{0, 0, 0};
};

}  // namespace scenecomp
