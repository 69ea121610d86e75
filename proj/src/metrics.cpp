#include "ddwm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace ddwm {

void Roi::validate() const {
  if (!(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max))
    throw std::invalid_argument("Roi: each axis needs min < max");
}

PointCloud crop(const PointCloud& cloud, const Roi& roi) {
  roi.validate();
  PointCloud out;
  out.reserve(cloud.size());
  for (const auto& p : cloud)
    if (roi.contains(p)) out.push_back(p);
  return out;
}

namespace {

inline double dist2(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

double brute_nearest2(const std::array<double, 3>& q, const PointCloud& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, dist2(q, p));
  return best;
}

// Uniform-grid hash over the target cloud answering exact nearest-neighbor
// queries by scanning Chebyshev rings of cells outward until the ring's
// minimum possible distance exceeds the best match found.
class NearestGrid {
 public:
  explicit NearestGrid(const PointCloud& pts) : pts_(pts) {
    lo_ = hi_ = pts[0];
    for (const auto& p : pts)
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], p[a]);
        hi_[a] = std::max(hi_[a], p[a]);
      }
    const int div = std::max(
        1, static_cast<int>(std::cbrt(static_cast<double>(pts.size()))));
    for (int a = 0; a < 3; ++a) {
      div_[a] = div;
      const double extent = hi_[a] - lo_[a];
      size_[a] = extent > 0.0 ? extent / div : 1.0;
      // slack absorbing the rounding of the cell-assignment arithmetic, so
      // the per-cell bound never overestimates a member point's distance
      margin_[a] = 8.0 * std::numeric_limits<double>::epsilon() *
                   (std::abs(lo_[a]) + std::abs(hi_[a]) + size_[a]);
    }
    // bucket points (counting sort into CSR layout)
    const size_t cells = static_cast<size_t>(div_[0]) * div_[1] * div_[2];
    start_.assign(cells + 1, 0);
    std::vector<int> cell_of(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      cell_of[i] = cell_index(cell_coords(pts[i]));
      ++start_[cell_of[i] + 1];
    }
    for (size_t c = 1; c < start_.size(); ++c) start_[c] += start_[c - 1];
    order_.resize(pts.size());
    std::vector<int> cursor(start_.begin(), start_.end() - 1);
    for (size_t i = 0; i < pts.size(); ++i) order_[cursor[cell_of[i]]++] = static_cast<int>(i);
  }

  double nearest2(const std::array<double, 3>& q) const {
    const std::array<int, 3> center = cell_coords(q);
    double best = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({div_[0], div_[1], div_[2]});
    for (int k = 0; k <= max_ring; ++k) {
      double ring_min = std::numeric_limits<double>::infinity();
      bool any_cell = false;
      visit_ring(center, k, [&](int ix, int iy, int iz) {
        any_cell = true;
        const double lb = cell_lower_bound2(q, ix, iy, iz);
        ring_min = std::min(ring_min, lb);
        if (lb >= best) return;
        const int c = cell_index({ix, iy, iz});
        for (int s = start_[c]; s < start_[c + 1]; ++s)
          best = std::min(best, dist2(q, pts_[order_[s]]));
      });
      if (!any_cell) break;                 // the shell now encloses the grid
      if (k > 0 && ring_min > best) break;  // farther rings only get worse
    }
    return best;
  }

 private:
  std::array<int, 3> cell_coords(const std::array<double, 3>& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a) {
      const int i = static_cast<int>((p[a] - lo_[a]) / size_[a]);
      c[a] = std::max(0, std::min(i, div_[a] - 1));
    }
    return c;
  }
  int cell_index(const std::array<int, 3>& c) const {
    return (c[0] * div_[1] + c[1]) * div_[2] + c[2];
  }
  double cell_lower_bound2(const std::array<double, 3>& q, int ix, int iy,
                           int iz) const {
    const int idx[3] = {ix, iy, iz};
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      const double cell_lo = lo_[a] + idx[a] * size_[a];
      const double cell_hi = cell_lo + size_[a];
      double gap = q[a] < cell_lo ? cell_lo - q[a] : q[a] > cell_hi ? q[a] - cell_hi : 0.0;
      gap = std::max(0.0, gap - margin_[a]);
      d2 += gap * gap;
    }
    return d2;
  }
  template <typename F>
  void visit_ring(const std::array<int, 3>& c, int k, F&& f) const {
    auto in = [&](int v, int a) { return v >= 0 && v < div_[a]; };
    if (k == 0) {
      if (in(c[0], 0) && in(c[1], 1) && in(c[2], 2)) f(c[0], c[1], c[2]);
      return;
    }
    for (int dx = -k; dx <= k; ++dx) {
      if (!in(c[0] + dx, 0)) continue;
      for (int dy = -k; dy <= k; ++dy) {
        if (!in(c[1] + dy, 1)) continue;
        const bool face_xy = std::abs(dx) == k || std::abs(dy) == k;
        if (face_xy) {
          for (int dz = -k; dz <= k; ++dz)
            if (in(c[2] + dz, 2)) f(c[0] + dx, c[1] + dy, c[2] + dz);
        } else {
          if (in(c[2] - k, 2)) f(c[0] + dx, c[1] + dy, c[2] - k);
          if (in(c[2] + k, 2)) f(c[0] + dx, c[1] + dy, c[2] + k);
        }
      }
    }
  }

  const PointCloud& pts_;
  std::array<double, 3> lo_{}, hi_{};
  std::array<int, 3> div_{};
  std::array<double, 3> size_{};
  std::array<double, 3> margin_{};
  std::vector<int> start_;   // CSR cell offsets
  std::vector<int> order_;   // point ids grouped by cell
};

double one_sided_mean(const PointCloud& from, const PointCloud& to, bool squared,
                      const NearestGrid* grid) {
  double sum = 0.0;
  for (const auto& q : from) {
    const double d2 = grid ? grid->nearest2(q) : brute_nearest2(q, to);
    sum += squared ? d2 : std::sqrt(d2);
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b, bool squared) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("chamfer: point clouds must be non-empty");
  NearestGrid into_b(b);
  NearestGrid into_a(a);
  return one_sided_mean(a, b, squared, &into_b) +
         one_sided_mean(b, a, squared, &into_a);
}

double chamfer_brute_force(const PointCloud& a, const PointCloud& b, bool squared) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("chamfer: point clouds must be non-empty");
  return one_sided_mean(a, b, squared, nullptr) +
         one_sided_mean(b, a, squared, nullptr);
}

namespace {

double median_of(std::vector<double> v) {
  const size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

DepthErrorSummary depth_errors(const std::vector<DepthPair>& pairs) {
  if (pairs.empty()) throw std::invalid_argument("depth_errors: no depth pairs");
  std::vector<double> l1(pairs.size()), absrel(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].gt <= 0.0)
      throw std::invalid_argument("depth_errors: ray " + std::to_string(i) +
                                  " has non-positive ground-truth depth " +
                                  std::to_string(pairs[i].gt));
    l1[i] = std::abs(pairs[i].predicted - pairs[i].gt);
    absrel[i] = 100.0 * l1[i] / pairs[i].gt;
  }
  DepthErrorSummary out;
  for (size_t i = 0; i < pairs.size(); ++i) {
    out.l1_mean += l1[i] / pairs.size();
    out.absrel_mean += absrel[i] / pairs.size();
  }
  out.l1_median = median_of(l1);
  out.absrel_median = median_of(absrel);
  return out;
}

std::string metrics_report(double chamfer_value, const DepthErrorSummary& depth,
                           const Roi& roi, bool roi_cropped) {
  nlohmann::json j;
  j["chamfer"] = chamfer_value;
  j["l1_mean"] = depth.l1_mean;
  j["l1_med"] = depth.l1_median;
  j["absrel_mean"] = depth.absrel_mean;
  j["absrel_med"] = depth.absrel_median;
  j["roi"] = {{"x", {roi.x_min, roi.x_max}},
              {"y", {roi.y_min, roi.y_max}},
              {"z", {roi.z_min, roi.z_max}},
              {"cropped", roi_cropped}};
  return j.dump(2);
}

}  // namespace ddwm
