#pragma once

#include <array>
#include <string>
#include <vector>

namespace ddwm {

using PointCloud = std::vector<std::array<double, 3>>;

// Metric-space region of interest; the default box matches the evaluation
// crop of +/-70 m laterally and +/-4.5 m vertically. Boundaries inclusive.
struct Roi {
  double x_min = -70.0, x_max = 70.0;
  double y_min = -70.0, y_max = 70.0;
  double z_min = -4.5, z_max = 4.5;

  void validate() const;
  bool contains(const std::array<double, 3>& p) const {
    return p[0] >= x_min && p[0] <= x_max && p[1] >= y_min && p[1] <= y_max &&
           p[2] >= z_min && p[2] <= z_max;
  }
};

// keeps the points inside the box (boundary-inclusive); idempotent
PointCloud crop(const PointCloud& cloud, const Roi& roi);

// Symmetric Chamfer distance: mean over a of the (squared, by default)
// nearest-neighbor distance into b, plus the mirrored term. Exact
// nearest neighbors from a uniform-grid spatial hash. Errors on empty input.
double chamfer(const PointCloud& a, const PointCloud& b, bool squared = true);
// O(n^2) reference with identical floating-point evaluation order
double chamfer_brute_force(const PointCloud& a, const PointCloud& b,
                           bool squared = true);

struct DepthPair {
  double predicted = 0.0;
  double gt = 0.0;  // must be positive
};

struct DepthErrorSummary {
  double l1_mean = 0.0;
  double l1_median = 0.0;
  double absrel_mean = 0.0;    // percentage points
  double absrel_median = 0.0;
};

// L1 = |D - D_gt|, AbsRel = 100 * |D - D_gt| / D_gt; means and medians over
// the rays. A non-positive ground truth raises an error naming the ray.
DepthErrorSummary depth_errors(const std::vector<DepthPair>& pairs);

// JSON report {chamfer, l1_mean, l1_med, absrel_mean, absrel_med, roi};
// the roi object records its bounds and whether cropping was applied.
std::string metrics_report(double chamfer_value, const DepthErrorSummary& depth,
                           const Roi& roi, bool roi_cropped);

}  // namespace ddwm
