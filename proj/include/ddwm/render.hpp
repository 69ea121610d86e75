#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ddwm/rng.hpp"

namespace ddwm {

// Lattice of learned feature vectors over a metric box. Nodes sit at the box
// corners and are spaced evenly; queries interpolate the 8 surrounding nodes.
struct NeuralFeatureGrid {
  int nx = 0, ny = 0, nz = 0, d = 0;
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
  std::vector<double> values;  // ((ix*ny + iy)*nz + iz)*d + c

  NeuralFeatureGrid() = default;
  NeuralFeatureGrid(int nx_, int ny_, int nz_, int d_, std::array<double, 3> lo_,
                    std::array<double, 3> hi_);

  size_t node_offset(int ix, int iy, int iz) const {
    return ((static_cast<size_t>(ix) * ny + iy) * nz + iz) * d;
  }
  void validate() const;
};

// Trilinear interpolation over the 8 surrounding lattice nodes; exact at
// nodes, affine along each axis. Queries outside the extents are an error.
void interp(const NeuralFeatureGrid& grid, double x, double y, double z, double* out);
// scatters d(loss)/d(feature) back onto the 8 contributing nodes
void interp_backward(const NeuralFeatureGrid& grid, double x, double y, double z,
                     const double* dfeat, std::vector<double>* dvalues);

// Two-layer occupancy head: Linear -> ReLU -> Linear -> sigmoid. Parameters
// are flat-indexable (w1, b1, w2, b2) for finite-difference checks.
struct OccupancyMlp {
  int in_dim = 0;
  int hidden = 32;
  std::vector<double> w1;  // hidden x in_dim
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  static OccupancyMlp init(int in_dim, int hidden, Rng& rng);
  double alpha(const double* feat) const;  // sigmoid of the head

  size_t param_count() const {
    return w1.size() + b1.size() + w2.size() + 1;
  }
  double& param(size_t i);
  double param(size_t i) const;
};

// A query ray with pre-chosen sample depths (meters, strictly increasing).
struct Ray {
  std::array<double, 3> origin{0, 0, 0};
  std::array<double, 3> dir{0, 0, 1};  // unit within 1e-9
  std::vector<double> samples;
  std::optional<double> gt_depth;

  void validate() const;
  std::array<double, 3> point_at(double h) const {
    return {origin[0] + h * dir[0], origin[1] + h * dir[1], origin[2] + h * dir[2]};
  }
};

struct RenderResult {
  double depth = 0.0;
  std::vector<double> weights;  // w_i = alpha_i * prod_{j<i} (1 - alpha_j)
  double residual = 1.0;        // transmittance past the last sample
};

// Expected-depth rendering: alpha_i from the occupancy head at each sample,
// D = sum w_i h_i. Transmittance products switch to log space when any alpha
// crosses 1 - 1e-7. Errors on a ray with no samples.
RenderResult render_depth(const Ray& ray, const NeuralFeatureGrid& grid,
                          const OccupancyMlp& mlp);

struct RenderLossResult {
  double total = 0.0;
  double depth_l1 = 0.0;        // mean |D - gt| over rendered rays
  double concentration = 0.0;   // mean sum of far-sample squared weights
  double bce = 0.0;             // coarse-occupancy cross-entropy
  int rendered_rays = 0;        // rays with at least one sample
  std::vector<double> grid_grad;
  std::vector<double> mlp_grad;     // flat, aligned with OccupancyMlp::param
  std::vector<double> coarse_grad;  // aligned with coarse_logits
};

// Per-ray depth L1 plus the concentration penalty sum_i 1(|h_i - gt| > eps)
// w_i^2, averaged over the rays that have samples (sample-free rays are
// excluded from the depth terms), plus binary cross-entropy of the coarse
// occupancy logits against ground truth. Gradients for the grid features, the
// occupancy head and the coarse logits by reverse-mode accumulation.
RenderLossResult rendering_loss(const std::vector<Ray>& rays,
                                const NeuralFeatureGrid& grid, const OccupancyMlp& mlp,
                                const std::vector<double>& coarse_logits,
                                const std::vector<uint8_t>& gt_occupancy,
                                double epsilon = 0.4);

// Binary occupancy at fine voxel resolution plus a bird's-eye-view max-pooled
// lattice (factor applies to x and y; z is kept) for spatial skipping.
struct SkipVolume {
  int nx = 0, ny = 0, nz = 0;  // fine voxel counts
  int pool = 8;
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
  std::vector<uint8_t> fine;    // nx*ny*nz, ((ix*ny + iy)*nz + iz)
  std::vector<uint8_t> pooled;  // px()*py()*nz

  int px() const { return (nx + pool - 1) / pool; }
  int py() const { return (ny + pool - 1) / pool; }
  bool fine_at(int ix, int iy, int iz) const {
    return fine[(static_cast<size_t>(ix) * ny + iy) * nz + iz] != 0;
  }
  bool pooled_at(int cx, int cy, int iz) const {
    return pooled[(static_cast<size_t>(cx) * py() + cy) * nz + iz] != 0;
  }
};

// Fine mask from points (training-time occupancy); points outside the
// extents are ignored.
SkipVolume build_skip_volume(const std::vector<std::array<double, 3>>& points, int nx,
                             int ny, int nz, std::array<double, 3> lo,
                             std::array<double, 3> hi, int pool);
// Fine mask from coarse logits thresholded at the given probability.
SkipVolume build_skip_volume(const std::vector<double>& logits, int nx, int ny, int nz,
                             std::array<double, 3> lo, std::array<double, 3> hi, int pool,
                             double threshold_prob = 0.5);

// Sample depths restricted to the ray's spans through occupied pooled cells:
// stratified midpoints per intersected occupied cell, merged and sorted.
// Returns an empty list when the ray meets no occupied cell.
std::vector<double> skip_samples(const Ray& ray, const SkipVolume& skip,
                                 int samples_per_interval);

// Stratified midpoints across the ray's full span through the box; empty if
// the ray misses it. The dense-sampling oracle for skip-vs-dense checks.
std::vector<double> dense_samples(const Ray& ray, std::array<double, 3> lo,
                                  std::array<double, 3> hi, int count);

}  // namespace ddwm
