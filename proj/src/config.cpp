#include "ddwm/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ddwm {

namespace {

using nlohmann::json;

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::invalid_argument("config: unknown key '" + join_path(path, it.key()) + "'");
    }
  }
}

const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

json need_object(const json& obj, const std::string& path) {
  if (!obj.is_object()) {
    throw std::invalid_argument("config: expected an object at '" +
                                (path.empty() ? std::string("<root>") : path) + "'");
  }
  return obj;
}

void read_int(const json& obj, const std::string& path, const std::string& key, int* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number_integer()) {
    throw std::invalid_argument("config: expected an integer at '" + join_path(path, key) + "'");
  }
  *out = v->get<int>();
}

void read_uint64(const json& obj, const std::string& path, const std::string& key,
                 uint64_t* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<int64_t>() >= 0)) {
    throw std::invalid_argument("config: expected a non-negative integer at '" +
                                join_path(path, key) + "'");
  }
  *out = v->get<uint64_t>();
}

void read_double(const json& obj, const std::string& path, const std::string& key, double* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_number()) {
    throw std::invalid_argument("config: expected a number at '" + join_path(path, key) + "'");
  }
  *out = v->get<double>();
}

void read_bool(const json& obj, const std::string& path, const std::string& key, bool* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_boolean()) {
    throw std::invalid_argument("config: expected a boolean at '" + join_path(path, key) + "'");
  }
  *out = v->get<bool>();
}

void read_string(const json& obj, const std::string& path, const std::string& key,
                 std::string* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_string()) {
    throw std::invalid_argument("config: expected a string at '" + join_path(path, key) + "'");
  }
  *out = v->get<std::string>();
}

void read_double_list(const json& obj, const std::string& path, const std::string& key,
                      std::vector<double>* out) {
  const json* v = find(obj, key);
  if (v == nullptr) return;
  if (!v->is_array()) {
    throw std::invalid_argument("config: expected an array at '" + join_path(path, key) + "'");
  }
  std::vector<double> vals;
  for (size_t i = 0; i < v->size(); ++i) {
    const json& e = (*v)[i];
    if (!e.is_number()) {
      throw std::invalid_argument("config: expected a number at '" + join_path(path, key) + "[" +
                                  std::to_string(i) + "]'");
    }
    vals.push_back(e.get<double>());
  }
  *out = std::move(vals);
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  opt.validate();
  if (steps < 1) throw std::invalid_argument("config: schedule.steps must be >= 1");
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw std::invalid_argument("config: schedule.eta must lie in [0, 1)");
  }
  gamma();  // rejects unknown schedule ids
  if (!(guidance >= 0.0)) throw std::invalid_argument("config: sampler.guidance must be >= 0");
  if (top_k < 1) throw std::invalid_argument("config: sampler.top_k must be >= 1");
  if (dim < 1 || hidden < 1 || blocks < 1) {
    throw std::invalid_argument("config: model dims must be positive");
  }
  if (batch < 1) throw std::invalid_argument("config: train.batch must be >= 1");
  if (algorithm != "ours" && algorithm != "maskgit_baseline") {
    throw std::invalid_argument("config: ablate.algorithm must be 'ours' or 'maskgit_baseline'");
  }
  if (guidance_sweep.empty()) {
    throw std::invalid_argument("config: ablate.guidance must be non-empty");
  }
  for (double w : guidance_sweep) {
    if (!(w >= 0.0)) throw std::invalid_argument("config: ablate.guidance entries must be >= 0");
  }
  if (episodes < 1) throw std::invalid_argument("config: data.episodes must be >= 1");
  if (horizon < 1 || horizon >= env.frames) {
    throw std::invalid_argument(
        "config: data.horizon must be >= 1 and leave at least one context frame");
  }
  model_config().validate();
}

SamplerConfig ExperimentConfig::sampler_config() const {
  SamplerConfig s;
  s.steps = steps;
  s.guidance = guidance;
  s.top_k = top_k;
  s.confidence_from_topk = confidence_from_topk;
  s.resample_committed = !is_baseline();
  s.gamma = gamma();
  return s;
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig t;
  t.env = env;
  t.gamma = gamma();
  t.eta = is_baseline() ? 0.0 : eta;
  t.scope = is_baseline() ? LossScope::corrupted_only : LossScope::full;
  t.batch = batch;
  t.opt = opt;
  t.seed = seed;
  return t;
}

DenoiserModelConfig ExperimentConfig::model_config() const {
  DenoiserModelConfig m;
  m.rows = env.rows;
  m.cols = env.cols;
  m.vocab_m = env.vocab_m;
  m.max_frames = env.frames + 1;  // room for the guidance pass's extended frame
  m.dim = dim;
  m.hidden = hidden;
  m.blocks = blocks;
  m.init_seed = init_seed;
  return m;
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["env"] = {{"rows", env.rows},         {"cols", env.cols},
              {"vocab", env.vocab_m},     {"block_min", env.block_min},
              {"block_max", env.block_max}, {"vel_min", env.vel_min},
              {"vel_max", env.vel_max},   {"frames", env.frames}};
  j["schedule"] = {{"steps", steps}, {"eta", eta}, {"mask", mask_schedule_id}};
  j["sampler"] = {{"guidance", guidance},
                  {"top_k", top_k},
                  {"confidence_from_topk", confidence_from_topk}};
  j["model"] = {{"dim", dim}, {"hidden", hidden}, {"blocks", blocks}, {"init_seed", init_seed}};
  j["train"] = {{"iterations", opt.iterations}, {"lr", opt.lr},
                {"warmup", opt.warmup_iters},   {"min_lr_frac", opt.min_lr_frac},
                {"clip_norm", opt.clip_norm},   {"batch", batch}};
  j["ablate"] = {{"algorithm", algorithm}, {"guidance", guidance_sweep}};
  j["data"] = {{"episodes", episodes}, {"horizon", horizon}};
  j["seed"] = seed;
  return j.dump();
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  need_object(root, "");
  check_keys(root, "",
             {"env", "schedule", "sampler", "model", "train", "ablate", "data", "seed"});

  ExperimentConfig cfg;
  if (const json* env = find(root, "env")) {
    need_object(*env, "env");
    check_keys(*env, "env",
               {"rows", "cols", "vocab", "block_min", "block_max", "vel_min", "vel_max",
                "frames"});
    read_int(*env, "env", "rows", &cfg.env.rows);
    read_int(*env, "env", "cols", &cfg.env.cols);
    read_int(*env, "env", "vocab", &cfg.env.vocab_m);
    read_int(*env, "env", "block_min", &cfg.env.block_min);
    read_int(*env, "env", "block_max", &cfg.env.block_max);
    read_int(*env, "env", "vel_min", &cfg.env.vel_min);
    read_int(*env, "env", "vel_max", &cfg.env.vel_max);
    read_int(*env, "env", "frames", &cfg.env.frames);
  }
  if (const json* sch = find(root, "schedule")) {
    need_object(*sch, "schedule");
    check_keys(*sch, "schedule", {"steps", "eta", "mask"});
    read_int(*sch, "schedule", "steps", &cfg.steps);
    read_double(*sch, "schedule", "eta", &cfg.eta);
    read_string(*sch, "schedule", "mask", &cfg.mask_schedule_id);
  }
  if (const json* smp = find(root, "sampler")) {
    need_object(*smp, "sampler");
    check_keys(*smp, "sampler", {"guidance", "top_k", "confidence_from_topk"});
    read_double(*smp, "sampler", "guidance", &cfg.guidance);
    read_int(*smp, "sampler", "top_k", &cfg.top_k);
    read_bool(*smp, "sampler", "confidence_from_topk", &cfg.confidence_from_topk);
  }
  if (const json* mdl = find(root, "model")) {
    need_object(*mdl, "model");
    check_keys(*mdl, "model", {"dim", "hidden", "blocks", "init_seed"});
    read_int(*mdl, "model", "dim", &cfg.dim);
    read_int(*mdl, "model", "hidden", &cfg.hidden);
    read_int(*mdl, "model", "blocks", &cfg.blocks);
    read_uint64(*mdl, "model", "init_seed", &cfg.init_seed);
  }
  if (const json* trn = find(root, "train")) {
    need_object(*trn, "train");
    check_keys(*trn, "train",
               {"iterations", "lr", "warmup", "min_lr_frac", "clip_norm", "batch"});
    read_int(*trn, "train", "iterations", &cfg.opt.iterations);
    read_double(*trn, "train", "lr", &cfg.opt.lr);
    read_int(*trn, "train", "warmup", &cfg.opt.warmup_iters);
    read_double(*trn, "train", "min_lr_frac", &cfg.opt.min_lr_frac);
    read_double(*trn, "train", "clip_norm", &cfg.opt.clip_norm);
    read_int(*trn, "train", "batch", &cfg.batch);
  }
  if (const json* abl = find(root, "ablate")) {
    need_object(*abl, "ablate");
    check_keys(*abl, "ablate", {"algorithm", "guidance"});
    read_string(*abl, "ablate", "algorithm", &cfg.algorithm);
    read_double_list(*abl, "ablate", "guidance", &cfg.guidance_sweep);
  }
  if (const json* dat = find(root, "data")) {
    need_object(*dat, "data");
    check_keys(*dat, "data", {"episodes", "horizon"});
    read_int(*dat, "data", "episodes", &cfg.episodes);
    read_int(*dat, "data", "horizon", &cfg.horizon);
  }
  read_uint64(root, "", "seed", &cfg.seed);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream body;
  body << in.rdbuf();
  return parse_experiment_config(body.str());
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string canon = cfg.canonical_json();
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return std::string(buf);
}

}  // namespace ddwm
