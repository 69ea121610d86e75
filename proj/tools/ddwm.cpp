// Experiment driver: invariant verification, data generation, training,
// sampling, rollout, the two-arm ablation and point-cloud metrics. Every
// output file embeds the config hash and seed that produced it, and all
// randomness flows through per-item substreams so results do not depend on
// DDWM_THREADS.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddwm/config.hpp"
#include "ddwm/denoiser_model.hpp"
#include "ddwm/io.hpp"
#include "ddwm/likelihood.hpp"
#include "ddwm/metrics.hpp"
#include "ddwm/render.hpp"
#include "ddwm/sampler.hpp"
#include "ddwm/toy_env.hpp"
#include "ddwm/train.hpp"
#include "ddwm/transition.hpp"

using namespace ddwm;
using nlohmann::json;

namespace {

// substream id bases: evaluation episodes and sampler draws must never
// collide with the training loop or gen-data (which use small ids)
constexpr uint64_t kHeldOutStream = 1ull << 40;
constexpr uint64_t kSamplerStream = 2ull << 40;

int thread_budget(int items) {
  int t = 0;
  if (const char* env = std::getenv("DDWM_THREADS")) t = std::atoi(env);
  if (t < 1) t = static_cast<int>(std::thread::hardware_concurrency());
  if (t < 1) t = 1;
  return std::min(t, items);
}

// index-addressed parallel loop; work items must be independent
void parallel_for(int n, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  const int workers = thread_budget(n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex mu;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// verify: cheap machine-checkable invariants with explicit tolerances

struct Check {
  std::string name;
  double tolerance = 0.0;
  double deviation = 0.0;
  bool pass = false;
};

Check make_check(std::string name, double tol, double dev) {
  return Check{std::move(name), tol, dev, dev <= tol};
}

NoiseSchedule random_schedule(int steps, Rng& rng) {
  std::vector<double> alpha(steps), beta(steps);
  for (int k = 0; k < steps; ++k) {
    alpha[k] = rng.uniform() * 0.5;
    beta[k] = rng.uniform() * (1.0 - alpha[k]) * 0.9;
  }
  return NoiseSchedule(alpha, beta);
}

TransitionMatrix identity_kernel(Vocabulary vocab) {
  TransitionMatrix id(vocab);
  for (int i = 0; i < id.n(); ++i) id.at(i, i) = 1.0;
  return id;
}

// closed-form cumulative kernel vs the explicit product of per-step kernels;
// the mutation flag flips the sign of the survival coefficient, which must
// make this check fail (it guards the guard)
void check_cumulative(bool mutate, std::vector<Check>* out) {
  Rng rng(2024);
  double dev = 0.0, row_dev = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(1, 8));
    const int steps = static_cast<int>(rng.uniform_int(1, 10));
    const Vocabulary vocab(m);
    const NoiseSchedule sched = random_schedule(steps, rng);
    TransitionMatrix prod = identity_kernel(vocab);
    for (int k = 1; k <= steps; ++k) {
      prod = matmul(prod, combined_step(vocab, sched.alpha[k - 1], sched.beta[k - 1]));
      CumulativeCoeffs coeffs = cumulative_coeffs(vocab, sched, k);
      if (mutate) coeffs.omega_bar = -coeffs.omega_bar;
      TransitionMatrix closed(vocab);
      for (int i = 0; i < closed.n(); ++i) {
        for (int j = 0; j < closed.n(); ++j) closed.at(i, j) = coeffs.prob(vocab, i, j);
      }
      dev = std::max(dev, max_abs_diff(closed, prod));
      for (int i = 0; i < prod.n(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < prod.n(); ++j) sum += prod.at(i, j);
        row_dev = std::max(row_dev, std::abs(sum - 1.0));
      }
    }
  }
  out->push_back(make_check("cumulative_vs_product", 1e-12, dev));
  out->push_back(make_check("kernel_row_sums", 1e-14, row_dev));
}

void check_posterior(std::vector<Check>* out) {
  Rng rng(7);
  double dev = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(2, 4));
    const int steps = static_cast<int>(rng.uniform_int(1, 5));
    const Vocabulary vocab(m);
    const NoiseSchedule sched = random_schedule(steps, rng);
    const int k = static_cast<int>(rng.uniform_int(1, steps));
    const TransitionMatrix prev = cumulative(vocab, sched, k - 1);
    const TransitionMatrix cur = cumulative(vocab, sched, k);
    const TransitionMatrix step = combined_step(vocab, sched.alpha[k - 1], sched.beta[k - 1]);
    for (int x0 = 0; x0 < m; ++x0) {
      for (int xk = 0; xk <= m; ++xk) {
        const double denom = cur.at(x0, xk);
        if (denom <= 0.0) continue;
        const std::vector<double> post = posterior(vocab, sched, k, xk, x0);
        for (int i = 0; i <= m; ++i) {
          const double brute = prev.at(x0, i) * step.at(i, xk) / denom;
          dev = std::max(dev, std::abs(post[i] - brute));
        }
      }
    }
  }
  out->push_back(make_check("posterior_vs_enumeration", 1e-12, dev));
}

void check_elbo(std::vector<Check>* out) {
  Rng rng(11);
  double worst_gap = -std::numeric_limits<double>::infinity();
  for (int trial = 0; trial < 20; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(2, 3));
    const int steps = static_cast<int>(rng.uniform_int(1, 3));
    const Vocabulary vocab(m);
    const NoiseSchedule sched = random_schedule(steps, rng);
    std::vector<double> data(m);
    double total = 0.0;
    for (double& p : data) total += (p = 0.05 + rng.uniform());
    for (double& p : data) p /= total;
    TabularDenoiser model = random_tabular_denoiser(vocab, steps, rng);
    const double bound = expected_elbo_bound(model, sched, data);
    const double ll = expected_log_likelihood(model, sched, data);
    worst_gap = std::max(worst_gap, bound - ll);
  }
  out->push_back(make_check("elbo_lower_bounds_likelihood", 1e-10, std::max(0.0, worst_gap)));
}

double max_rel_error(const std::function<double()>& loss, double* theta, double got) {
  const double h = 1e-5 * std::max(1.0, std::abs(*theta));
  const double orig = *theta;
  *theta = orig + h;
  const double up = loss();
  *theta = orig - h;
  const double down = loss();
  *theta = orig;
  const double fd = (up - down) / (2.0 * h);
  return std::abs(fd - got) / std::max({std::abs(fd), std::abs(got), 1e-6});
}

void check_denoiser_gradients(std::vector<Check>* out) {
  ToyDynamicsConfig env;
  env.rows = 2;
  env.cols = 2;
  env.vocab_m = 3;
  env.block_min = env.block_max = 1;
  env.vel_min = -1;
  env.vel_max = 1;
  env.frames = 2;
  DenoiserModelConfig mc;
  mc.rows = 2;
  mc.cols = 2;
  mc.vocab_m = 3;
  mc.max_frames = 3;
  mc.dim = 6;
  mc.hidden = 8;
  mc.blocks = 1;
  mc.init_seed = 5;
  DenoiserModel model(mc);
  Rng rng(13);
  const Trajectory traj = generate_episode(env, rng);
  const TrainingExample ex = make_training_example(
      traj, Objective::joint_past_future, MaskSchedule::from_id("cosine"), 0.2,
      LossScope::full, rng);
  std::vector<double> grad;
  loss_and_gradients(model, {ex}, &grad);
  const auto loss = [&] {
    std::vector<double> unused;
    return loss_and_gradients(model, {ex}, &unused);
  };
  double dev = 0.0;
  Rng pick(3);
  for (int t = 0; t < 20; ++t) {
    const size_t i = static_cast<size_t>(
        pick.uniform_int(0, static_cast<int64_t>(model.params().size()) - 1));
    dev = std::max(dev, max_rel_error(loss, &model.params().flat()[i], grad[i]));
  }
  out->push_back(make_check("denoiser_gradient_fd", 1e-4, dev));
}

void check_render_gradients(std::vector<Check>* out) {
  Rng rng(17);
  NeuralFeatureGrid grid(2, 2, 2, 2, {0, 0, 0}, {1, 1, 1});
  for (double& v : grid.values) v = rng.normal() * 0.5;
  OccupancyMlp mlp = OccupancyMlp::init(2, 4, rng);
  std::vector<Ray> rays;
  for (int i = 0; i < 3; ++i) {
    Ray r;
    r.origin = {0.05, 0.1, 0.05};
    const double n = std::sqrt(3.0);
    r.dir = {1.0 / n, 1.0 / n, 1.0 / n};
    r.samples = {0.1 + 0.05 * i, 0.5, 0.9, 1.2};
    r.gt_depth = 0.7 + 0.1 * i;
    rays.push_back(r);
  }
  std::vector<double> coarse = {0.3, -0.8, 1.1, -0.2};
  const std::vector<uint8_t> occ = {1, 0, 1, 0};
  const RenderLossResult base = rendering_loss(rays, grid, mlp, coarse, occ);
  const auto loss = [&] { return rendering_loss(rays, grid, mlp, coarse, occ).total; };
  double dev = 0.0;
  for (size_t i = 0; i < grid.values.size(); ++i) {
    dev = std::max(dev, max_rel_error(loss, &grid.values[i], base.grid_grad[i]));
  }
  for (size_t i = 0; i < mlp.param_count(); ++i) {
    dev = std::max(dev, max_rel_error(loss, &mlp.param(i), base.mlp_grad[i]));
  }
  for (size_t i = 0; i < coarse.size(); ++i) {
    dev = std::max(dev, max_rel_error(loss, &coarse[i], base.coarse_grad[i]));
  }
  out->push_back(make_check("render_gradient_fd", 1e-4, dev));
}

// denoiser that already knows the answer: reconstruction must be exact
struct OracleDenoiser final : public Denoiser {
  std::vector<TokenGrid> truth;

  std::vector<LogitsGrid> forward(const DenoiserInput& in) const override {
    std::vector<LogitsGrid> out;
    for (int qf : in.query_frames) {
      const TokenGrid& t = truth.at(static_cast<size_t>(qf));
      LogitsGrid g(t.rows, t.cols, t.vocab.m);
      for (int flat = 0; flat < t.size(); ++flat) g.at(flat, t.tokens[flat]) = 50.0;
      out.push_back(std::move(g));
    }
    return out;
  }
  Vocabulary vocab() const override { return truth.at(0).vocab; }
  int grid_rows() const override { return truth.at(0).rows; }
  int grid_cols() const override { return truth.at(0).cols; }
  int max_frames() const override { return 16; }
};

void check_sampler_round_trip(std::vector<Check>* out) {
  ToyDynamicsConfig env;
  env.rows = 6;
  env.cols = 6;
  env.vocab_m = 5;
  env.frames = 3;
  Rng rng(29);
  const Trajectory traj = generate_episode(env, rng);
  OracleDenoiser oracle;
  oracle.truth = traj.frames;
  Trajectory context;
  context.frames = {traj.frames.begin(), traj.frames.end() - 1};
  context.actions = {traj.actions.begin(), traj.actions.end() - 1};
  SamplerConfig scfg;
  scfg.steps = 8;
  scfg.gamma = MaskSchedule::from_id("cosine");
  Rng srng(31);
  const TokenGrid got = sample_frame(oracle, context, traj.actions.back(), scfg, srng);
  const TokenGrid& want = traj.frames.back();
  int wrong = 0;
  for (int flat = 0; flat < want.size(); ++flat) wrong += got.tokens[flat] != want.tokens[flat];
  out->push_back(make_check("sampler_oracle_round_trip", 0.0,
                            static_cast<double>(wrong) / want.size()));
}

void check_transmittance(std::vector<Check>* out) {
  Rng rng(41);
  NeuralFeatureGrid grid(3, 3, 3, 2, {0, 0, 0}, {1, 1, 1});
  for (double& v : grid.values) v = rng.normal();
  OccupancyMlp mlp = OccupancyMlp::init(2, 6, rng);
  double dev = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Ray r;
    r.origin = {0.02 + rng.uniform() * 0.1, 0.02 + rng.uniform() * 0.1,
                0.02 + rng.uniform() * 0.1};
    const double n = std::sqrt(3.0);
    r.dir = {1.0 / n, 1.0 / n, 1.0 / n};
    const int count = 4 + static_cast<int>(rng.uniform_int(0, 5));
    double h = 0.02;
    for (int i = 0; i < count; ++i) {
      h += 0.02 + rng.uniform() * (1.3 / count);
      r.samples.push_back(h);
    }
    const RenderResult res = render_depth(r, grid, mlp);
    double total = res.residual;
    for (double w : res.weights) total += w;
    dev = std::max(dev, std::abs(total - 1.0));
  }
  out->push_back(make_check("transmittance_partition", 1e-12, dev));
}

int cmd_verify(const std::string& json_path, const std::string& mutate) {
  std::vector<Check> checks;
  check_cumulative(mutate == "cumulative-sign", &checks);
  check_posterior(&checks);
  check_elbo(&checks);
  check_denoiser_gradients(&checks);
  check_render_gradients(&checks);
  check_sampler_round_trip(&checks);
  check_transmittance(&checks);

  bool all_pass = true;
  for (const Check& c : checks) {
    all_pass = all_pass && c.pass;
    std::printf("[%s] %-28s deviation %.3e (tolerance %.0e)\n", c.pass ? "pass" : "FAIL",
                c.name.c_str(), c.deviation, c.tolerance);
  }
  if (!json_path.empty()) {
    json report;
    report["mutation"] = mutate.empty() ? json(nullptr) : json(mutate);
    report["all_pass"] = all_pass;
    json arr = json::array();
    for (const Check& c : checks) {
      arr.push_back({{"name", c.name},
                     {"tolerance", c.tolerance},
                     {"deviation", c.deviation},
                     {"pass", c.pass}});
    }
    report["checks"] = std::move(arr);
    write_text(json_path, report.dump(2) + "\n");
  }
  std::printf("%s\n", all_pass ? "all checks passed" : "verification FAILED");
  return all_pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// data generation and training

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string hash = config_hash(cfg);
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> files(cfg.episodes);
  parallel_for(cfg.episodes, [&](int i) {
    Rng rng = Rng(cfg.seed).substream(static_cast<uint64_t>(i));
    const Trajectory traj = generate_episode(cfg.env, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "episode_%05d.json", i);
    save_trajectory(out_dir + "/" + name, traj,
                    {{"config_hash", hash},
                     {"seed", std::to_string(cfg.seed)},
                     {"episode", std::to_string(i)}});
    files[i] = name;
  });
  json manifest = {{"config_hash", hash},
                   {"seed", cfg.seed},
                   {"count", cfg.episodes},
                   {"files", files}};
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %d episodes to %s (config %s)\n", cfg.episodes, out_dir.c_str(),
              hash.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              const std::string& resume, const std::string& metrics_path, int pause_at) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string hash = config_hash(cfg);
  DenoiserModel model(cfg.model_config());
  TrainState state;  // iteration 0 => train() seeds the rng from the config
  if (!resume.empty()) {
    const std::string stored = load_checkpoint(resume, &model, &state);
    if (stored != hash) {
      throw std::runtime_error("train: checkpoint was produced by config " + stored +
                               ", current config is " + hash);
    }
  }
  const TrainResult result = train(model, cfg.train_config(), &state, pause_at);
  save_checkpoint(out_path, model, state, hash);
  if (!metrics_path.empty()) {
    std::string csv = "iteration,loss,objective,config_hash,seed\n";
    for (const MetricsRow& row : result.rows) {
      csv += std::to_string(row.iteration) + "," + format_double(row.loss) + "," +
             objective_name(row.mode) + "," + hash + "," + std::to_string(cfg.seed) + "\n";
    }
    write_text(metrics_path, csv);
  }
  std::printf("trained to iteration %d, final loss %.6f -> %s\n", state.iteration,
              result.final_loss, out_path.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// evaluation helpers shared by sample / rollout / ablate

struct EvalEpisode {
  Trajectory full;
  Trajectory context;
  std::vector<Action> future;
  std::vector<TokenGrid> ground_truth;
};

EvalEpisode make_eval_episode(const ExperimentConfig& cfg, int index, int context_frames) {
  Rng rng = Rng(cfg.seed).substream(kHeldOutStream + static_cast<uint64_t>(index));
  EvalEpisode e;
  e.full = generate_episode(cfg.env, rng);
  e.context.frames.assign(e.full.frames.begin(), e.full.frames.begin() + context_frames);
  e.context.actions.assign(e.full.actions.begin(), e.full.actions.begin() + context_frames);
  e.future.assign(e.full.actions.begin() + context_frames, e.full.actions.end());
  e.ground_truth.assign(e.full.frames.begin() + context_frames, e.full.frames.end());
  return e;
}

struct LoadedModel {
  DenoiserModel model;
  std::string checkpoint_hash;
};

LoadedModel load_model(const ExperimentConfig& cfg, const std::string& path) {
  LoadedModel lm{DenoiserModel(cfg.model_config()), ""};
  TrainState state;
  lm.checkpoint_hash = load_checkpoint(path, &lm.model, &state);
  return lm;
}

int cmd_sample(const std::string& config_path, const std::string& model_path,
               const std::string& out_path, int count) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string hash = config_hash(cfg);
  const LoadedModel lm = load_model(cfg, model_path);
  const SamplerConfig scfg = cfg.sampler_config();
  const int context_frames = cfg.env.frames - 1;

  std::vector<double> errors(count);
  std::vector<json> episodes(count);
  parallel_for(count, [&](int i) {
    const EvalEpisode e = make_eval_episode(cfg, i, context_frames);
    Rng srng = Rng(cfg.seed).substream(kSamplerStream + static_cast<uint64_t>(i));
    const TokenGrid predicted =
        sample_frame(lm.model, e.context, e.future.front(), scfg, srng);
    errors[i] = token_error({predicted}, {e.ground_truth.front()});
    episodes[i] = {{"index", i},
                   {"token_error", errors[i]},
                   {"predicted", predicted.tokens},
                   {"target", e.ground_truth.front().tokens}};
  });
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= std::max(count, 1);

  json out = {{"config_hash", hash},
              {"checkpoint_hash", lm.checkpoint_hash},
              {"seed", cfg.seed},
              {"count", count},
              {"mean_token_error", mean},
              {"episodes", episodes}};
  write_text(out_path, out.dump(2) + "\n");
  std::printf("sampled %d next frames, mean token error %.4f -> %s\n", count, mean,
              out_path.c_str());
  return 0;
}

int cmd_rollout(const std::string& config_path, const std::string& model_path,
                const std::string& out_dir, int count) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const std::string hash = config_hash(cfg);
  const LoadedModel lm = load_model(cfg, model_path);
  const SamplerConfig scfg = cfg.sampler_config();
  const int context_frames = cfg.env.frames - cfg.horizon;
  std::filesystem::create_directories(out_dir);

  std::vector<double> errors(count);
  parallel_for(count, [&](int i) {
    const EvalEpisode e = make_eval_episode(cfg, i, context_frames);
    Rng srng = Rng(cfg.seed).substream(kSamplerStream + static_cast<uint64_t>(i));
    const Trajectory predicted = rollout(lm.model, e.context, e.future, scfg, srng);
    const std::vector<TokenGrid> tail(predicted.frames.begin() + context_frames,
                                      predicted.frames.end());
    errors[i] = token_error(tail, e.ground_truth);
    char name[32];
    std::snprintf(name, sizeof(name), "rollout_%04d.json", i);
    save_trajectory(out_dir + "/" + name, predicted,
                    {{"config_hash", hash},
                     {"checkpoint_hash", lm.checkpoint_hash},
                     {"seed", std::to_string(cfg.seed)},
                     {"episode", std::to_string(i)},
                     {"token_error", format_double(errors[i])}});
  });
  double mean = 0.0;
  for (double e : errors) mean += e;
  mean /= std::max(count, 1);

  json summary = {{"config_hash", hash},     {"checkpoint_hash", lm.checkpoint_hash},
                  {"seed", cfg.seed},        {"count", count},
                  {"horizon", cfg.horizon},  {"errors", errors},
                  {"mean_token_error", mean}};
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");
  std::printf("rolled out %d episodes x %d frames, mean token error %.4f -> %s\n", count,
              cfg.horizon, mean, out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// ablation: {ours, maskgit_baseline} x guidance sweep

std::string csv_safe(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n') c = ';';
  }
  return s;
}

double mean_rollout_error(const ExperimentConfig& cfg, const DenoiserModel& model,
                          const SamplerConfig& scfg, int count) {
  const int context_frames = cfg.env.frames - cfg.horizon;
  std::vector<double> errors(count);
  parallel_for(count, [&](int i) {
    const EvalEpisode e = make_eval_episode(cfg, i, context_frames);
    Rng srng = Rng(cfg.seed).substream(kSamplerStream + static_cast<uint64_t>(i));
    const Trajectory predicted = rollout(model, e.context, e.future, scfg, srng);
    const std::vector<TokenGrid> tail(predicted.frames.begin() + context_frames,
                                      predicted.frames.end());
    errors[i] = token_error(tail, e.ground_truth);
  });
  double mean = 0.0;
  for (double e : errors) mean += e;
  return mean / std::max(count, 1);
}

int cmd_ablate(const std::string& config_path, const std::string& out_csv, int count) {
  const ExperimentConfig base = load_experiment_config(config_path);
  std::string csv = "algorithm,guidance,seed,config_hash,token_error,status\n";
  for (const char* arm : {"ours", "maskgit_baseline"}) {
    ExperimentConfig cfg = base;
    cfg.algorithm = arm;
    const std::string hash = config_hash(cfg);
    std::optional<DenoiserModel> model;
    std::string train_failure;
    try {
      model.emplace(cfg.model_config());
      TrainState state;
      train(*model, cfg.train_config(), &state);
    } catch (const std::exception& e) {
      train_failure = e.what();
    }
    for (double w : cfg.guidance_sweep) {
      const std::string prefix = std::string(arm) + "," + format_double(w) + "," +
                                 std::to_string(cfg.seed) + "," + hash + ",";
      if (!train_failure.empty()) {
        csv += prefix + "nan,train_error: " + csv_safe(train_failure) + "\n";
        continue;
      }
      try {
        SamplerConfig scfg = cfg.sampler_config();
        scfg.guidance = w;
        const double err = mean_rollout_error(cfg, *model, scfg, count);
        csv += prefix + format_double(err) + ",ok\n";
      } catch (const std::exception& e) {
        csv += prefix + "nan,error: " + csv_safe(e.what()) + "\n";
      }
    }
  }
  write_text(out_csv, csv);
  std::printf("%s", csv.c_str());
  std::printf("ablation table -> %s\n", out_csv.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// point-cloud metrics

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& pred_rays_path, const std::string& gt_rays_path,
             bool uncropped, const std::string& out_path) {
  std::map<std::string, std::string> pred_meta, gt_meta;
  PointCloud pred = load_point_cloud(pred_path, &pred_meta);
  PointCloud gt = load_point_cloud(gt_path, &gt_meta);
  const Roi roi;
  if (!uncropped) {
    pred = crop(pred, roi);
    gt = crop(gt, roi);
  }
  const double ch = chamfer(pred, gt, /*squared=*/true);

  DepthErrorSummary depth{};
  size_t depth_rays = 0;
  if (pred_rays_path.empty() != gt_rays_path.empty()) {
    throw std::invalid_argument("eval: --pred-rays and --gt-rays must be given together");
  }
  if (!pred_rays_path.empty()) {
    const std::vector<Ray> pr = load_rays(pred_rays_path);
    const std::vector<Ray> gr = load_rays(gt_rays_path);
    if (pr.size() != gr.size()) {
      throw std::invalid_argument("eval: ray files hold " + std::to_string(pr.size()) +
                                  " and " + std::to_string(gr.size()) + " rays");
    }
    std::vector<DepthPair> pairs(pr.size());
    for (size_t i = 0; i < pr.size(); ++i) pairs[i] = {*pr[i].gt_depth, *gr[i].gt_depth};
    depth = depth_errors(pairs);
    depth_rays = pairs.size();
  }

  json report = json::parse(metrics_report(ch, depth, roi, !uncropped));
  report["depth_rays"] = depth_rays;
  report["inputs"] = {{"pred", pred_meta}, {"gt", gt_meta}};
  const std::string text = report.dump(2) + "\n";
  if (!out_path.empty()) write_text(out_path, text);
  std::printf("%s", text.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete-diffusion world model: experiments and checks"};
  app.require_subcommand(1);

  // verify
  auto* verify = app.add_subcommand("verify", "run the invariant checks");
  std::string verify_json, mutate;
  verify->add_option("--json", verify_json, "write the check report to this path");
  verify->add_option("--mutate", mutate, "inject a known fault; the checks must catch it")
      ->check(CLI::IsMember({"cumulative-sign"}));

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate episodes to a directory");
  std::string gen_config, gen_out;
  gen->add_option("--config", gen_config, "experiment config json")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train the denoiser");
  std::string tr_config, tr_out, tr_resume, tr_metrics;
  int tr_pause = -1;
  tr->add_option("--config", tr_config, "experiment config json")->required();
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");
  tr->add_option("--metrics", tr_metrics, "write per-iteration loss csv here");
  tr->add_option("--pause-at", tr_pause, "stop at this iteration (resumable)");

  // sample
  auto* smp = app.add_subcommand("sample", "sample one next frame per episode");
  std::string smp_config, smp_model, smp_out;
  int smp_count = 8;
  smp->add_option("--config", smp_config, "experiment config json")->required();
  smp->add_option("--model", smp_model, "trained checkpoint")->required();
  smp->add_option("--out", smp_out, "output json path")->required();
  smp->add_option("--count", smp_count, "held-out episodes to sample");

  // rollout
  auto* ro = app.add_subcommand("rollout", "autoregressive multi-frame rollout");
  std::string ro_config, ro_model, ro_out;
  int ro_count = 8;
  ro->add_option("--config", ro_config, "experiment config json")->required();
  ro->add_option("--model", ro_model, "trained checkpoint")->required();
  ro->add_option("--out", ro_out, "output directory")->required();
  ro->add_option("--count", ro_count, "held-out episodes to roll out");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train both arms and sweep guidance");
  std::string ab_config, ab_out;
  int ab_count = 8;
  ab->add_option("--config", ab_config, "experiment config json")->required();
  ab->add_option("--out", ab_out, "output csv path")->required();
  ab->add_option("--count", ab_count, "held-out episodes per table cell");

  // eval
  auto* ev = app.add_subcommand("eval", "point-cloud and depth metrics");
  std::string ev_pred, ev_gt, ev_pred_rays, ev_gt_rays, ev_out;
  bool ev_uncropped = false;
  ev->add_option("--pred", ev_pred, "predicted point cloud")->required();
  ev->add_option("--gt", ev_gt, "ground-truth point cloud")->required();
  ev->add_option("--pred-rays", ev_pred_rays, "rays with predicted depths in the depth slot");
  ev->add_option("--gt-rays", ev_gt_rays, "rays with ground-truth depths");
  ev->add_flag("--uncropped", ev_uncropped, "skip the region-of-interest crop");
  ev->add_option("--out", ev_out, "write the json report here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(verify_json, mutate);
    if (gen->parsed()) return cmd_gen_data(gen_config, gen_out);
    if (tr->parsed()) return cmd_train(tr_config, tr_out, tr_resume, tr_metrics, tr_pause);
    if (smp->parsed()) return cmd_sample(smp_config, smp_model, smp_out, smp_count);
    if (ro->parsed()) return cmd_rollout(ro_config, ro_model, ro_out, ro_count);
    if (ab->parsed()) return cmd_ablate(ab_config, ab_out, ab_count);
    if (ev->parsed())
      return cmd_eval(ev_pred, ev_gt, ev_pred_rays, ev_gt_rays, ev_uncropped, ev_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
