#pragma once

#include <string>
#include <vector>

#include "ddwm/rng.hpp"

namespace ddwm {

// Learned code table with per-code staleness tracking. Maintenance thresholds
// are pinned: a code is dead after 256 unused iterations, reinitialization
// fires when more than 3% of the codes are dead and at least 200 iterations
// have passed since the previous reinitialization.
struct Codebook {
  int dim = 0;
  std::vector<double> codes;     // count x dim
  std::vector<int> usage_age;    // iterations since each code was last used
  long long iteration = 0;       // maintenance calls so far
  long long last_reinit_iteration = 0;
  int dead_age = 256;
  double dead_fraction_threshold = 0.03;
  int min_reinit_age = 200;

  Codebook() = default;
  Codebook(int count, int dim_);

  int count() const { return dim == 0 ? 0 : static_cast<int>(codes.size()) / dim; }
  double* code(int i) { return codes.data() + static_cast<size_t>(i) * dim; }
  const double* code(int i) const { return codes.data() + static_cast<size_t>(i) * dim; }
  void validate() const;
};

// Ring buffer of recent pre-quantization vectors, capacity exactly ten times
// the codebook size, oldest entries evicted first.
struct MemoryBank {
  int dim = 0;
  size_t capacity = 0;
  std::vector<double> data;  // capacity x dim, ring layout
  size_t next = 0;
  size_t filled = 0;

  MemoryBank() = default;
  MemoryBank(int codebook_size, int dim_);

  void push(const double* z);
  size_t size() const { return filled; }
  std::vector<double> snapshot() const;  // oldest to newest, filled x dim
};

struct QuantizeResult {
  std::vector<int> indices;       // one per input vector
  std::vector<double> quantized;  // selected codes, batch x dim
};

// Nearest-code assignment by Euclidean distance, ties to the lower index.
// Used codes get their age reset to zero, all others age by one; each input
// vector is recorded in the bank when one is given.
QuantizeResult quantize(const std::vector<double>& z, Codebook& codebook,
                        MemoryBank* bank = nullptr);

struct VqLossResult {
  double loss = 0.0;
  std::vector<double> dz;      // batch x dim
  std::vector<double> dcodes;  // count x dim
};

// lambda1 * ||sg[z] - zhat||^2 + lambda2 * ||sg[zhat] - z||^2, averaged over
// the batch. Stop-gradients are realized by routing: the first term produces
// gradients only into the selected codes, the second only into z.
VqLossResult vq_loss(const std::vector<double>& z, const QuantizeResult& q,
                     const Codebook& codebook, double lambda1 = 0.25,
                     double lambda2 = 1.0);

// identity copy of the decoder gradient past the quantization boundary
std::vector<double> straight_through(const std::vector<double>& grad_wrt_quantized);

// Lloyd iterations with k-means++ seeding from the given rng; stops after
// max_iters rounds or when the relative centroid shift drops below tol.
// Empty clusters keep their previous centroid. Returns k x dim centroids.
std::vector<double> kmeans(const std::vector<double>& points, int n, int dim, int k,
                           Rng& rng, int max_iters = 25, double tol = 1e-6);

enum class ReinitScope { all, dead_only };

struct MaintainResult {
  bool reinitialized = false;
  int dead_count = 0;
  std::string warning;  // set when a due reinitialization was skipped
};

// Once-per-iteration upkeep: advances the iteration counter, counts dead
// codes, and reinitializes from K-means centroids of the bank when the dead
// fraction exceeds the threshold and enough iterations have passed since the
// last reinitialization. A bank holding fewer vectors than the codebook skips
// the reinitialization and records a warning. Scope `all` replaces every
// code; `dead_only` replaces just the dead ones.
MaintainResult maintain(Codebook& codebook, const MemoryBank& bank, Rng& rng,
                        ReinitScope scope = ReinitScope::all);

// codebook checkpoints reuse the tensor-archive layout of model checkpoints
void save_codebook(const std::string& path, const Codebook& codebook);
Codebook load_codebook(const std::string& path);

}  // namespace ddwm
