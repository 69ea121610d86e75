#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ddwm/corruption.hpp"
#include "ddwm/denoiser_model.hpp"
#include "ddwm/rng.hpp"
#include "ddwm/schedule.hpp"
#include "ddwm/tokens.hpp"
#include "ddwm/toy_env.hpp"

namespace ddwm {

constexpr double kLabelSmoothing = 0.1;

// Which positions of an in-loss frame are supervised. Re-corruption training
// supervises every position; the mask-only baseline supervises only the
// positions the corruption touched.
enum class LossScope { full, corrupted_only };

// One supervised position with its uncorrupted target token.
struct LossSpec {
  int frame = 0;
  int flat = 0;
  int32_t target = 0;
};

struct TrainingExample {
  DenoiserInput input;
  std::vector<LossSpec> loss;
  Objective objective = Objective::joint_past_future;
};

// Corrupts a trajectory under one objective and packages the denoiser input
// (mask mode, zeroed actions where conditioning is dropped) plus the
// supervised positions.
TrainingExample make_training_example(const Trajectory& traj, Objective obj,
                                      const MaskSchedule& gamma, double eta,
                                      LossScope scope, Rng& rng);

// loss = -sum_t q_t log softmax(logits)_t with the smoothed target
// q = (1-eps) one-hot + eps/(m-1) elsewhere. dlogits (length m, may be null)
// receives softmax - q.
double label_smoothed_ce(const double* logits, int m, int target, double eps,
                         double* dlogits);

// the loss attained when the softmax equals the smoothed target exactly
double label_smoothing_floor(int m, double eps = kLabelSmoothing);

// Mean label-smoothed cross-entropy over every supervised position in the
// batch; accumulates d(mean loss)/d(params) into grad (resized and zeroed).
// Errors if the batch contains no supervised positions.
double loss_and_gradients(const DenoiserModel& model,
                          const std::vector<TrainingExample>& batch,
                          std::vector<double>* grad);

// Plain gradient descent with global-norm clipping, linear warmup and cosine
// decay to min_lr_frac of the peak step size.
struct OptimizerConfig {
  double lr = 0.05;
  double min_lr_frac = 0.1;
  int warmup_iters = 0;
  double clip_norm = 1.0;
  int iterations = 1000;

  double lr_at(int iteration) const;
  void validate() const;
};

// The large-scale recipe this toy trainer scales down from, recorded as data
// for anyone swapping in a full optimizer: AdamW with lowered beta2, linear
// warmup, cosine decay to 10% of peak, weight decay excluding biases,
// embeddings and layer norms.
struct AdamwRecipe {
  double lr, beta1, beta2, weight_decay, clip_norm;
  int warmup_iters, decay_iters, batch;
};
inline constexpr AdamwRecipe kWorldModelRecipe{1e-3, 0.9, 0.95, 1e-4, 5.0,
                                               2000, 750000, 8};
inline constexpr AdamwRecipe kTokenizerRecipe{1e-3, 0.9, 0.95, 1e-4, 0.1,
                                              4000, 400000, 16};

struct MetricsRow {
  int iteration = 0;
  double loss = 0.0;
  Objective mode = Objective::joint_past_future;
};

const char* objective_name(Objective obj);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);

struct TrainConfig {
  ToyDynamicsConfig env;
  MaskSchedule gamma;
  double eta = 0.2;                    // resampling noise level (fraction)
  LossScope scope = LossScope::full;
  int batch = 4;
  OptimizerConfig opt;
  uint64_t seed = 0;
  // pin every iteration to one objective instead of sampling the mixture
  std::optional<Objective> objective_override;

  void validate() const;
};

// Mutable trainer state, checkpointable for bit-identical resume.
struct TrainState {
  int iteration = 0;
  Rng rng;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  double final_loss = 0.0;
};

// Runs the objective-mixture training loop from state->iteration (or a fresh
// state seeded with cfg.seed) up to cfg.opt.iterations. One objective is
// drawn per iteration and shared by the whole batch. Aborts with the
// iteration index if the loss turns non-finite. pause_at (when >= 0) stops
// early at that iteration without shortening the decay schedule, so a
// checkpointed run resumes bit-identically.
TrainResult train(DenoiserModel& model, const TrainConfig& cfg,
                  TrainState* state = nullptr, int pause_at = -1);

// Checkpointing: parameters as a tensor archive plus rng state, iteration and
// an arbitrary config fingerprint in the metadata.
void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const TrainState& state, const std::string& config_hash);
// Returns the stored config fingerprint; model parameters and state are
// restored in place.
std::string load_checkpoint(const std::string& path, DenoiserModel* model,
                            TrainState* state);

}  // namespace ddwm
