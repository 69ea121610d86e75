#include "ddwm/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ddwm {

namespace {

constexpr double kLogSpaceAlpha = 1.0 - 1e-7;

std::string point_str(double x, double y, double z) {
  return "(" + std::to_string(x) + ", " + std::to_string(y) + ", " + std::to_string(z) +
         ")";
}

// corner weights and node indices for one trilinear query
struct InterpStencil {
  int ix, iy, iz;        // lower corner
  double fx, fy, fz;     // fractional offsets
};

InterpStencil stencil(const NeuralFeatureGrid& g, double x, double y, double z) {
  const double q[3] = {x, y, z};
  for (int a = 0; a < 3; ++a)
    if (q[a] < g.lo[a] || q[a] > g.hi[a])
      throw std::invalid_argument("interp: query outside extents at " +
                                  point_str(x, y, z));
  const int n[3] = {g.nx, g.ny, g.nz};
  double t[3];
  int i[3];
  for (int a = 0; a < 3; ++a) {
    const double step = (g.hi[a] - g.lo[a]) / (n[a] - 1);
    const double u = (q[a] - g.lo[a]) / step;
    i[a] = std::min(static_cast<int>(u), n[a] - 2);
    i[a] = std::max(i[a], 0);
    t[a] = u - i[a];
  }
  return {i[0], i[1], i[2], t[0], t[1], t[2]};
}

}  // namespace

NeuralFeatureGrid::NeuralFeatureGrid(int nx_, int ny_, int nz_, int d_,
                                     std::array<double, 3> lo_, std::array<double, 3> hi_)
    : nx(nx_), ny(ny_), nz(nz_), d(d_), lo(lo_), hi(hi_) {
  validate();
  values.assign(static_cast<size_t>(nx) * ny * nz * d, 0.0);
}

void NeuralFeatureGrid::validate() const {
  if (nx < 2 || ny < 2 || nz < 2)
    throw std::invalid_argument("NeuralFeatureGrid: need at least 2 nodes per axis");
  if (d < 1) throw std::invalid_argument("NeuralFeatureGrid: feature dim must be >= 1");
  for (int a = 0; a < 3; ++a)
    if (!(hi[a] > lo[a]))
      throw std::invalid_argument("NeuralFeatureGrid: extents must be positive");
}

void interp(const NeuralFeatureGrid& grid, double x, double y, double z, double* out) {
  const InterpStencil s = stencil(grid, x, y, z);
  for (int c = 0; c < grid.d; ++c) out[c] = 0.0;
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const double w = (dx ? s.fx : 1.0 - s.fx) * (dy ? s.fy : 1.0 - s.fy) *
                         (dz ? s.fz : 1.0 - s.fz);
        const double* v =
            grid.values.data() + grid.node_offset(s.ix + dx, s.iy + dy, s.iz + dz);
        for (int c = 0; c < grid.d; ++c) out[c] += w * v[c];
      }
}

void interp_backward(const NeuralFeatureGrid& grid, double x, double y, double z,
                     const double* dfeat, std::vector<double>* dvalues) {
  if (!dvalues || dvalues->size() != grid.values.size())
    throw std::invalid_argument("interp_backward: bad gradient buffer");
  const InterpStencil s = stencil(grid, x, y, z);
  for (int dx = 0; dx < 2; ++dx)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const double w = (dx ? s.fx : 1.0 - s.fx) * (dy ? s.fy : 1.0 - s.fy) *
                         (dz ? s.fz : 1.0 - s.fz);
        double* g = dvalues->data() + grid.node_offset(s.ix + dx, s.iy + dy, s.iz + dz);
        for (int c = 0; c < grid.d; ++c) g[c] += w * dfeat[c];
      }
}

OccupancyMlp OccupancyMlp::init(int in_dim, int hidden, Rng& rng) {
  if (in_dim < 1 || hidden < 1) throw std::invalid_argument("OccupancyMlp: bad dims");
  OccupancyMlp mlp;
  mlp.in_dim = in_dim;
  mlp.hidden = hidden;
  mlp.w1.resize(static_cast<size_t>(hidden) * in_dim);
  mlp.b1.assign(hidden, 0.0);
  mlp.w2.resize(hidden);
  const double s1 = std::sqrt(1.0 / (3.0 * in_dim));
  const double s2 = std::sqrt(1.0 / (3.0 * hidden));
  for (double& v : mlp.w1) v = rng.normal() * s1;
  for (double& v : mlp.w2) v = rng.normal() * s2;
  return mlp;
}

double OccupancyMlp::alpha(const double* feat) const {
  double s = b2;
  for (int j = 0; j < hidden; ++j) {
    double pre = b1[j];
    const double* w = w1.data() + static_cast<size_t>(j) * in_dim;
    for (int c = 0; c < in_dim; ++c) pre += w[c] * feat[c];
    if (pre > 0.0) s += w2[j] * pre;
  }
  return 1.0 / (1.0 + std::exp(-s));
}

double& OccupancyMlp::param(size_t i) {
  if (i < w1.size()) return w1[i];
  i -= w1.size();
  if (i < b1.size()) return b1[i];
  i -= b1.size();
  if (i < w2.size()) return w2[i];
  i -= w2.size();
  if (i == 0) return b2;
  throw std::out_of_range("OccupancyMlp: parameter index out of range");
}

double OccupancyMlp::param(size_t i) const {
  return const_cast<OccupancyMlp*>(this)->param(i);
}

void Ray::validate() const {
  const double n2 = dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2];
  if (std::abs(std::sqrt(n2) - 1.0) > 1e-9)
    throw std::invalid_argument("Ray: direction must be a unit vector");
  for (size_t i = 1; i < samples.size(); ++i)
    if (!(samples[i] > samples[i - 1]))
      throw std::invalid_argument("Ray: sample depths must be strictly increasing");
}

namespace {

// alphas -> (weights, per-sample entry transmittances, residual). Switches to
// log-space accumulation when any alpha crosses the guard threshold.
void transmittance_chain(const std::vector<double>& alpha, std::vector<double>* weights,
                         std::vector<double>* entryT, double* residual) {
  const size_t n = alpha.size();
  weights->resize(n);
  entryT->resize(n);
  bool log_space = false;
  for (double a : alpha)
    if (a > kLogSpaceAlpha) log_space = true;
  if (!log_space) {
    double T = 1.0;
    for (size_t i = 0; i < n; ++i) {
      (*entryT)[i] = T;
      (*weights)[i] = alpha[i] * T;
      T *= 1.0 - alpha[i];
    }
    *residual = T;
  } else {
    double logT = 0.0;
    bool dead = false;  // an alpha of exactly 1 zeroes everything after it
    for (size_t i = 0; i < n; ++i) {
      const double T = dead ? 0.0 : std::exp(logT);
      (*entryT)[i] = T;
      (*weights)[i] = alpha[i] * T;
      if (alpha[i] >= 1.0)
        dead = true;
      else if (!dead)
        logT += std::log1p(-alpha[i]);
    }
    *residual = dead ? 0.0 : std::exp(logT);
  }
}

}  // namespace

RenderResult render_depth(const Ray& ray, const NeuralFeatureGrid& grid,
                          const OccupancyMlp& mlp) {
  ray.validate();
  if (ray.samples.empty()) throw std::invalid_argument("render_depth: empty ray");
  std::vector<double> feat(grid.d), alpha(ray.samples.size());
  for (size_t i = 0; i < ray.samples.size(); ++i) {
    const auto p = ray.point_at(ray.samples[i]);
    interp(grid, p[0], p[1], p[2], feat.data());
    alpha[i] = mlp.alpha(feat.data());
  }
  RenderResult out;
  std::vector<double> entryT;
  transmittance_chain(alpha, &out.weights, &entryT, &out.residual);
  out.depth = 0.0;
  for (size_t i = 0; i < ray.samples.size(); ++i)
    out.depth += out.weights[i] * ray.samples[i];
  return out;
}

RenderLossResult rendering_loss(const std::vector<Ray>& rays,
                                const NeuralFeatureGrid& grid, const OccupancyMlp& mlp,
                                const std::vector<double>& coarse_logits,
                                const std::vector<uint8_t>& gt_occupancy,
                                double epsilon) {
  if (epsilon <= 0.0) throw std::invalid_argument("rendering_loss: epsilon must be > 0");
  if (coarse_logits.size() != gt_occupancy.size())
    throw std::invalid_argument("rendering_loss: coarse logits / occupancy size mismatch");
  RenderLossResult res;
  res.grid_grad.assign(grid.values.size(), 0.0);
  res.mlp_grad.assign(mlp.param_count(), 0.0);
  res.coarse_grad.assign(coarse_logits.size(), 0.0);

  int rendered = 0;
  for (const Ray& ray : rays)
    if (!ray.samples.empty()) ++rendered;
  res.rendered_rays = rendered;

  const size_t nw1 = mlp.w1.size(), nb1 = mlp.b1.size(), nw2 = mlp.w2.size();
  double* g_w1 = res.mlp_grad.data();
  double* g_b1 = g_w1 + nw1;
  double* g_w2 = g_b1 + nb1;
  double* g_b2 = g_w2 + nw2;

  std::vector<double> feat, pre, alpha, weights, entryT, dw, dalpha, dfeat;
  for (const Ray& ray : rays) {
    if (ray.samples.empty()) continue;  // sentinel ray: depth terms skip it
    ray.validate();
    if (!ray.gt_depth)
      throw std::invalid_argument("rendering_loss: ray is missing its ground-truth depth");
    const double gt = *ray.gt_depth;
    const size_t n = ray.samples.size();

    feat.assign(n * grid.d, 0.0);
    pre.assign(n * mlp.hidden, 0.0);
    alpha.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto p = ray.point_at(ray.samples[i]);
      double* fi = feat.data() + i * grid.d;
      interp(grid, p[0], p[1], p[2], fi);
      double* pi = pre.data() + i * mlp.hidden;
      double s = mlp.b2;
      for (int j = 0; j < mlp.hidden; ++j) {
        double acc = mlp.b1[j];
        const double* w = mlp.w1.data() + static_cast<size_t>(j) * mlp.in_dim;
        for (int c = 0; c < mlp.in_dim; ++c) acc += w[c] * fi[c];
        pi[j] = acc;
        if (acc > 0.0) s += mlp.w2[j] * acc;
      }
      alpha[i] = 1.0 / (1.0 + std::exp(-s));
    }

    double residual = 1.0;
    transmittance_chain(alpha, &weights, &entryT, &residual);
    double depth = 0.0;
    for (size_t i = 0; i < n; ++i) depth += weights[i] * ray.samples[i];

    const double inv_r = 1.0 / rendered;
    res.depth_l1 += std::abs(depth - gt) * inv_r;
    double conc = 0.0;
    for (size_t i = 0; i < n; ++i)
      if (std::abs(ray.samples[i] - gt) > epsilon) conc += weights[i] * weights[i];
    res.concentration += conc * inv_r;

    // d(loss)/d(w_i): depth term through D, concentration term directly
    const double dD = (depth > gt ? 1.0 : depth < gt ? -1.0 : 0.0) * inv_r;
    dw.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      dw[i] = dD * ray.samples[i];
      if (std::abs(ray.samples[i] - gt) > epsilon) dw[i] += 2.0 * weights[i] * inv_r;
    }
    // back through w_i = alpha_i T_i, T_{i+1} = T_i (1 - alpha_i)
    dalpha.assign(n, 0.0);
    double dT = 0.0;  // residual transmittance carries no loss
    for (size_t ii = n; ii-- > 0;) {
      dalpha[ii] = dw[ii] * entryT[ii] - dT * entryT[ii];
      dT = dw[ii] * alpha[ii] + dT * (1.0 - alpha[ii]);
    }
    // back through sigmoid, the two linear layers, and the interpolation
    dfeat.assign(grid.d, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double ds = dalpha[i] * alpha[i] * (1.0 - alpha[i]);
      if (ds == 0.0) continue;
      const double* fi = feat.data() + i * grid.d;
      const double* pi = pre.data() + i * mlp.hidden;
      std::fill(dfeat.begin(), dfeat.end(), 0.0);
      *g_b2 += ds;
      for (int j = 0; j < mlp.hidden; ++j) {
        if (pi[j] > 0.0) {
          g_w2[j] += ds * pi[j];
          const double dpre = ds * mlp.w2[j];
          g_b1[j] += dpre;
          const double* w = mlp.w1.data() + static_cast<size_t>(j) * mlp.in_dim;
          double* gw = g_w1 + static_cast<size_t>(j) * mlp.in_dim;
          for (int c = 0; c < mlp.in_dim; ++c) {
            gw[c] += dpre * fi[c];
            dfeat[c] += dpre * w[c];
          }
        }
      }
      const auto p = ray.point_at(ray.samples[i]);
      interp_backward(grid, p[0], p[1], p[2], dfeat.data(), &res.grid_grad);
    }
  }

  // coarse-occupancy binary cross-entropy, mean over voxels
  if (!coarse_logits.empty()) {
    const double inv_v = 1.0 / static_cast<double>(coarse_logits.size());
    for (size_t i = 0; i < coarse_logits.size(); ++i) {
      const double l = coarse_logits[i];
      const double y = gt_occupancy[i] ? 1.0 : 0.0;
      // softplus(l) - y*l, computed stably on both tails
      const double sp = l > 0.0 ? l + std::log1p(std::exp(-l)) : std::log1p(std::exp(l));
      res.bce += (sp - y * l) * inv_v;
      res.coarse_grad[i] = (1.0 / (1.0 + std::exp(-l)) - y) * inv_v;
    }
  }

  res.total = res.depth_l1 + res.concentration + res.bce;
  return res;
}

SkipVolume build_skip_volume(const std::vector<std::array<double, 3>>& points, int nx,
                             int ny, int nz, std::array<double, 3> lo,
                             std::array<double, 3> hi, int pool) {
  if (nx < 1 || ny < 1 || nz < 1 || pool < 1)
    throw std::invalid_argument("build_skip_volume: bad lattice or pool factor");
  for (int a = 0; a < 3; ++a)
    if (!(hi[a] > lo[a]))
      throw std::invalid_argument("build_skip_volume: extents must be positive");
  SkipVolume v;
  v.nx = nx;
  v.ny = ny;
  v.nz = nz;
  v.pool = pool;
  v.lo = lo;
  v.hi = hi;
  v.fine.assign(static_cast<size_t>(nx) * ny * nz, 0);
  const int n[3] = {nx, ny, nz};
  for (const auto& p : points) {
    bool inside = true;
    int idx[3];
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] || p[a] > hi[a]) {
        inside = false;
        break;
      }
      const double u = (p[a] - lo[a]) / (hi[a] - lo[a]) * n[a];
      idx[a] = std::min(static_cast<int>(u), n[a] - 1);
    }
    if (inside) v.fine[(static_cast<size_t>(idx[0]) * ny + idx[1]) * nz + idx[2]] = 1;
  }
  // recall-preserving max pool over x, y
  v.pooled.assign(static_cast<size_t>(v.px()) * v.py() * nz, 0);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      for (int iz = 0; iz < nz; ++iz)
        if (v.fine_at(ix, iy, iz))
          v.pooled[(static_cast<size_t>(ix / pool) * v.py() + iy / pool) * nz + iz] = 1;
  return v;
}

SkipVolume build_skip_volume(const std::vector<double>& logits, int nx, int ny, int nz,
                             std::array<double, 3> lo, std::array<double, 3> hi, int pool,
                             double threshold_prob) {
  if (logits.size() != static_cast<size_t>(nx) * ny * nz)
    throw std::invalid_argument("build_skip_volume: logits size mismatch");
  SkipVolume v = build_skip_volume(std::vector<std::array<double, 3>>{}, nx, ny, nz, lo,
                                   hi, pool);
  const double logit_thresh = std::log(threshold_prob / (1.0 - threshold_prob));
  for (size_t i = 0; i < logits.size(); ++i) v.fine[i] = logits[i] > logit_thresh ? 1 : 0;
  v.pooled.assign(v.pooled.size(), 0);
  for (int ix = 0; ix < nx; ++ix)
    for (int iy = 0; iy < ny; ++iy)
      for (int iz = 0; iz < nz; ++iz)
        if (v.fine_at(ix, iy, iz))
          v.pooled[(static_cast<size_t>(ix / pool) * v.py() + iy / pool) * nz + iz] = 1;
  return v;
}

namespace {

// ray-box intersection in depth units; false when the ray misses
bool ray_box(const Ray& ray, const std::array<double, 3>& lo,
             const std::array<double, 3>& hi, double* t0, double* t1) {
  double a = 0.0, b = std::numeric_limits<double>::infinity();
  for (int ax = 0; ax < 3; ++ax) {
    if (ray.dir[ax] == 0.0) {
      if (ray.origin[ax] < lo[ax] || ray.origin[ax] > hi[ax]) return false;
      continue;
    }
    double u = (lo[ax] - ray.origin[ax]) / ray.dir[ax];
    double v = (hi[ax] - ray.origin[ax]) / ray.dir[ax];
    if (u > v) std::swap(u, v);
    a = std::max(a, u);
    b = std::min(b, v);
  }
  if (b <= a) return false;
  *t0 = a;
  *t1 = b;
  return true;
}

void stratified_into(double a, double b, int count, std::vector<double>* out) {
  for (int j = 0; j < count; ++j)
    out->push_back(a + (b - a) * (j + 0.5) / count);
}

}  // namespace

std::vector<double> skip_samples(const Ray& ray, const SkipVolume& skip,
                                 int samples_per_interval) {
  ray.validate();
  if (samples_per_interval < 1)
    throw std::invalid_argument("skip_samples: need at least one sample per interval");
  std::vector<double> out;
  double t0 = 0.0, t1 = 0.0;
  if (!ray_box(ray, skip.lo, skip.hi, &t0, &t1)) return out;

  // walk the pooled lattice (pool-sized cells in x/y, fine cells in z)
  const double cell[3] = {(skip.hi[0] - skip.lo[0]) / skip.nx * skip.pool,
                          (skip.hi[1] - skip.lo[1]) / skip.ny * skip.pool,
                          (skip.hi[2] - skip.lo[2]) / skip.nz};
  const int dims[3] = {skip.px(), skip.py(), skip.nz};
  const double span = t1 - t0;
  double t = t0;
  int guard = 4 * (dims[0] + dims[1] + dims[2]) + 8;
  while (t < t1 && guard-- > 0) {
    const double probe = std::min(t + 1e-9 * span, t1);
    const auto p = ray.point_at(probe);
    int idx[3];
    for (int a = 0; a < 3; ++a) {
      const double u = (p[a] - skip.lo[a]) / cell[a];
      idx[a] = std::max(0, std::min(static_cast<int>(u), dims[a] - 1));
    }
    // exit depth of the current cell
    double t_exit = t1;
    for (int a = 0; a < 3; ++a) {
      if (ray.dir[a] == 0.0) continue;
      const int next = idx[a] + (ray.dir[a] > 0.0 ? 1 : 0);
      const double boundary = skip.lo[a] + next * cell[a];
      const double tc = (boundary - ray.origin[a]) / ray.dir[a];
      if (tc > t) t_exit = std::min(t_exit, tc);
    }
    if (t_exit <= t) t_exit = std::min(t1, t + 1e-9 * span);
    if (skip.pooled_at(idx[0], idx[1], idx[2]))
      stratified_into(t, std::min(t_exit, t1), samples_per_interval, &out);
    t = t_exit;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> dense_samples(const Ray& ray, std::array<double, 3> lo,
                                  std::array<double, 3> hi, int count) {
  ray.validate();
  if (count < 1) throw std::invalid_argument("dense_samples: need at least one sample");
  std::vector<double> out;
  double t0 = 0.0, t1 = 0.0;
  if (!ray_box(ray, lo, hi, &t0, &t1)) return out;
  stratified_into(t0, t1, count, &out);
  return out;
}

}  // namespace ddwm
