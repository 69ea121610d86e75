#include "ddwm/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "ddwm/io.hpp"
#include "ddwm/param_store.hpp"

namespace ddwm {

Codebook::Codebook(int count, int dim_) : dim(dim_) {
  if (count < 1 || dim_ < 1) throw std::invalid_argument("Codebook: need count, dim >= 1");
  codes.assign(static_cast<size_t>(count) * dim_, 0.0);
  usage_age.assign(count, 0);
}

void Codebook::validate() const {
  if (dim < 1 || codes.empty() || codes.size() % dim != 0)
    throw std::invalid_argument("Codebook: inconsistent code storage");
  if (usage_age.size() != static_cast<size_t>(count()))
    throw std::invalid_argument("Codebook: usage ages out of step with codes");
  for (int a : usage_age)
    if (a < 0) throw std::invalid_argument("Codebook: negative usage age");
}

MemoryBank::MemoryBank(int codebook_size, int dim_) : dim(dim_) {
  if (codebook_size < 1 || dim_ < 1)
    throw std::invalid_argument("MemoryBank: need codebook size, dim >= 1");
  capacity = static_cast<size_t>(codebook_size) * 10;
  data.assign(capacity * dim, 0.0);
}

void MemoryBank::push(const double* z) {
  std::memcpy(data.data() + next * dim, z, sizeof(double) * dim);
  next = (next + 1) % capacity;
  if (filled < capacity) ++filled;
}

std::vector<double> MemoryBank::snapshot() const {
  std::vector<double> out(filled * dim);
  // oldest entry sits at `next` once the ring has wrapped
  const size_t start = filled < capacity ? 0 : next;
  for (size_t i = 0; i < filled; ++i) {
    const size_t slot = (start + i) % capacity;
    std::memcpy(out.data() + i * dim, data.data() + slot * dim, sizeof(double) * dim);
  }
  return out;
}

QuantizeResult quantize(const std::vector<double>& z, Codebook& codebook,
                        MemoryBank* bank) {
  codebook.validate();
  const int c = codebook.count();
  const int d = codebook.dim;
  if (c == 0) throw std::invalid_argument("quantize: empty codebook");
  if (z.empty() || z.size() % d != 0)
    throw std::invalid_argument("quantize: input is not a batch of dim-" +
                                std::to_string(d) + " vectors");
  const size_t batch = z.size() / d;
  QuantizeResult out;
  out.indices.resize(batch);
  out.quantized.resize(z.size());
  std::vector<uint8_t> used(c, 0);
  for (size_t v = 0; v < batch; ++v) {
    const double* zi = z.data() + v * d;
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) {
      const double* cj = codebook.code(j);
      double d2 = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = zi[k] - cj[k];
        d2 += diff * diff;
      }
      if (d2 < best_d2) {  // strict: ties stay with the lower index
        best_d2 = d2;
        best = j;
      }
    }
    out.indices[v] = best;
    used[best] = 1;
    std::memcpy(out.quantized.data() + v * d, codebook.code(best), sizeof(double) * d);
    if (bank) {
      if (bank->dim != d) throw std::invalid_argument("quantize: bank dim mismatch");
      bank->push(zi);
    }
  }
  for (int j = 0; j < c; ++j)
    codebook.usage_age[j] = used[j] ? 0 : codebook.usage_age[j] + 1;
  return out;
}

VqLossResult vq_loss(const std::vector<double>& z, const QuantizeResult& q,
                     const Codebook& codebook, double lambda1, double lambda2) {
  const int d = codebook.dim;
  if (z.size() != q.quantized.size() || z.size() != q.indices.size() * static_cast<size_t>(d))
    throw std::invalid_argument("vq_loss: shape mismatch");
  const size_t batch = q.indices.size();
  VqLossResult res;
  res.dz.assign(z.size(), 0.0);
  res.dcodes.assign(codebook.codes.size(), 0.0);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (size_t v = 0; v < batch; ++v) {
    const double* zi = z.data() + v * d;
    const double* qi = q.quantized.data() + v * d;
    double* dcode = res.dcodes.data() + static_cast<size_t>(q.indices[v]) * d;
    double* dzi = res.dz.data() + v * d;
    for (int k = 0; k < d; ++k) {
      const double diff = zi[k] - qi[k];
      res.loss += (lambda1 + lambda2) * diff * diff * inv_b;
      dcode[k] += lambda1 * 2.0 * (qi[k] - zi[k]) * inv_b;  // codes chase z
      dzi[k] += lambda2 * 2.0 * (zi[k] - qi[k]) * inv_b;    // z commits to codes
    }
  }
  return res;
}

std::vector<double> straight_through(const std::vector<double>& grad_wrt_quantized) {
  return grad_wrt_quantized;
}

std::vector<double> kmeans(const std::vector<double>& points, int n, int dim, int k,
                           Rng& rng, int max_iters, double tol) {
  if (n < 1 || dim < 1 || k < 1 || points.size() != static_cast<size_t>(n) * dim)
    throw std::invalid_argument("kmeans: bad point set");
  if (k > n) throw std::invalid_argument("kmeans: more clusters than points");
  auto point = [&](int i) { return points.data() + static_cast<size_t>(i) * dim; };

  // k-means++ seeding: next seed drawn proportional to squared distance
  std::vector<double> centroids(static_cast<size_t>(k) * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.uniform_int(0, n - 1));
  std::memcpy(centroids.data(), point(first), sizeof(double) * dim);
  for (int j = 1; j < k; ++j) {
    const double* prev = centroids.data() + static_cast<size_t>(j - 1) * dim;
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double dd = 0.0;
      for (int c = 0; c < dim; ++c) {
        const double diff = point(i)[c] - prev[c];
        dd += diff * diff;
      }
      d2[i] = std::min(d2[i], dd);
      total += d2[i];
    }
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.uniform_int(0, n - 1));
    } else {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    }
    std::memcpy(centroids.data() + static_cast<size_t>(j) * dim, point(pick),
                sizeof(double) * dim);
  }

  std::vector<int> assign(n, 0);
  std::vector<double> sums(static_cast<size_t>(k) * dim);
  std::vector<int> counts(k);
  for (int round = 0; round < max_iters; ++round) {
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d2 = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double* cj = centroids.data() + static_cast<size_t>(j) * dim;
        double dd = 0.0;
        for (int c = 0; c < dim; ++c) {
          const double diff = point(i)[c] - cj[c];
          dd += diff * diff;
        }
        if (dd < best_d2) {
          best_d2 = dd;
          best = j;
        }
      }
      assign[i] = best;
    }
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      double* s = sums.data() + static_cast<size_t>(assign[i]) * dim;
      for (int c = 0; c < dim; ++c) s[c] += point(i)[c];
      ++counts[assign[i]];
    }
    double shift2 = 0.0, norm2 = 0.0;
    for (int j = 0; j < k; ++j) {
      double* cj = centroids.data() + static_cast<size_t>(j) * dim;
      for (int c = 0; c < dim; ++c) {
        norm2 += cj[c] * cj[c];
        if (counts[j] > 0) {  // empty clusters keep their centroid
          const double updated = sums[static_cast<size_t>(j) * dim + c] / counts[j];
          const double diff = updated - cj[c];
          shift2 += diff * diff;
          cj[c] = updated;
        }
      }
    }
    if (shift2 < tol * tol * std::max(norm2, 1e-300)) break;
  }
  return centroids;
}

MaintainResult maintain(Codebook& codebook, const MemoryBank& bank, Rng& rng,
                        ReinitScope scope) {
  codebook.validate();
  codebook.iteration += 1;
  MaintainResult res;
  const int c = codebook.count();
  for (int a : codebook.usage_age)
    if (a >= codebook.dead_age) ++res.dead_count;
  const double frac = static_cast<double>(res.dead_count) / c;
  if (frac <= codebook.dead_fraction_threshold) return res;
  if (codebook.iteration - codebook.last_reinit_iteration < codebook.min_reinit_age)
    return res;
  if (bank.size() < static_cast<size_t>(c)) {
    res.warning = "memory bank holds " + std::to_string(bank.size()) +
                  " vectors, fewer than the " + std::to_string(c) +
                  " codes: reinitialization skipped";
    return res;
  }
  const std::vector<double> pts = bank.snapshot();
  const int n = static_cast<int>(bank.size());
  if (scope == ReinitScope::all) {
    codebook.codes = kmeans(pts, n, codebook.dim, c, rng);
    std::fill(codebook.usage_age.begin(), codebook.usage_age.end(), 0);
  } else {
    const std::vector<double> centroids =
        kmeans(pts, n, codebook.dim, res.dead_count, rng);
    int slot = 0;
    for (int j = 0; j < c; ++j)
      if (codebook.usage_age[j] >= codebook.dead_age) {
        std::memcpy(codebook.code(j),
                    centroids.data() + static_cast<size_t>(slot++) * codebook.dim,
                    sizeof(double) * codebook.dim);
        codebook.usage_age[j] = 0;
      }
  }
  codebook.last_reinit_iteration = codebook.iteration;
  res.reinitialized = true;
  return res;
}

void save_codebook(const std::string& path, const Codebook& codebook) {
  codebook.validate();
  ParamStore store;
  store.add("codes", {codebook.count(), codebook.dim});
  store.add("usage_age", {codebook.count()});
  std::copy(codebook.codes.begin(), codebook.codes.end(), store.data("codes"));
  double* ages = store.data("usage_age");
  for (int j = 0; j < codebook.count(); ++j) ages[j] = codebook.usage_age[j];
  save_tensor_archive(path, store,
                      {{"iteration", std::to_string(codebook.iteration)},
                       {"last_reinit_iteration",
                        std::to_string(codebook.last_reinit_iteration)}});
}

Codebook load_codebook(const std::string& path) {
  ParamStore store;
  std::map<std::string, std::string> meta;
  load_tensor_archive(path, &store, &meta);
  const TensorSpec& spec = store.spec("codes");
  if (spec.shape.size() != 2)
    throw std::runtime_error("load_codebook: codes tensor is not two-dimensional");
  Codebook cb(spec.shape[0], spec.shape[1]);
  const double* codes = store.data("codes");
  std::copy(codes, codes + cb.codes.size(), cb.codes.begin());
  const double* ages = store.data("usage_age");
  for (int j = 0; j < cb.count(); ++j)
    cb.usage_age[j] = static_cast<int>(std::llround(ages[j]));
  cb.iteration = std::stoll(meta.at("iteration"));
  cb.last_reinit_iteration = std::stoll(meta.at("last_reinit_iteration"));
  return cb;
}

}  // namespace ddwm
