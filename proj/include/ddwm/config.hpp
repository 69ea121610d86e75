#pragma once

#include <string>
#include <vector>

#include "ddwm/denoiser_model.hpp"
#include "ddwm/sampler.hpp"
#include "ddwm/toy_env.hpp"
#include "ddwm/train.hpp"

namespace ddwm {

// One experiment, fully described: environment, corruption schedule, sampler,
// model dims, training budget, and ablation arms. Parsed from JSON with a
// strict schema: unknown keys are rejected with their dotted path.
struct ExperimentConfig {
  ToyDynamicsConfig env;

  // schedule
  int steps = 10;  // reverse/forward step count K
  double eta = 0.2;
  std::string mask_schedule_id = "cosine";

  // sampler
  double guidance = 0.0;
  int top_k = 3;
  bool confidence_from_topk = false;

  // model dims (grid shape and vocabulary follow the environment)
  int dim = 32;
  int hidden = 64;
  int blocks = 2;
  uint64_t init_seed = 0;

  // training budget
  OptimizerConfig opt;
  int batch = 4;

  // ablation arms
  std::string algorithm = "ours";  // or "maskgit_baseline"
  std::vector<double> guidance_sweep = {0.0, 1.0, 2.0};

  // data generation / evaluation
  int episodes = 100;
  int horizon = 4;  // frames rolled out; context = env.frames - horizon

  uint64_t seed = 0;

  void validate() const;

  MaskSchedule gamma() const { return MaskSchedule::from_id(mask_schedule_id); }
  // the maskgit_baseline arm freezes committed tokens, trains mask-only, eta 0
  bool is_baseline() const { return algorithm == "maskgit_baseline"; }
  SamplerConfig sampler_config() const;
  TrainConfig train_config() const;
  DenoiserModelConfig model_config() const;

  // full nested form with defaults filled in, keys sorted: the hash input
  std::string canonical_json() const;
};

// strict parse: every key checked against the schema, types and ranges
// validated, defaults applied for absent keys
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// FNV-1a 64-bit hash of the canonical form, as 16 hex digits
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace ddwm
