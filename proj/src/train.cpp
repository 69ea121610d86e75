#include "ddwm/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ddwm/io.hpp"

namespace ddwm {

TrainingExample make_training_example(const Trajectory& traj, Objective obj,
                                      const MaskSchedule& gamma, double eta,
                                      LossScope scope, Rng& rng) {
  ObjectiveApplication app = apply_objective(traj, obj, gamma, eta, rng);
  const int T = static_cast<int>(traj.length());

  TrainingExample ex;
  ex.objective = obj;
  ex.input.frames.reserve(T);
  ex.input.actions.reserve(T);
  for (int f = 0; f < T; ++f) {
    ex.input.frames.push_back(app.samples[f].corrupted);
    ex.input.actions.push_back(app.drop_action[f] ? zero_action() : traj.actions[f]);
  }
  ex.input.mask = build_temporal_mask(T, app.mask_mode);
  for (int f = 0; f < T; ++f) {
    if (!app.in_loss[f]) continue;
    ex.input.query_frames.push_back(f);
    const int N = traj.frames[f].size();
    for (int p = 0; p < N; ++p) {
      if (scope == LossScope::corrupted_only && !app.samples[f].is_corrupted(p)) continue;
      ex.loss.push_back({f, p, traj.frames[f].tokens[p]});
    }
  }
  return ex;
}

double label_smoothed_ce(const double* logits, int m, int target, double eps,
                         double* dlogits) {
  if (m < 2) throw std::invalid_argument("label_smoothed_ce: need at least two classes");
  if (target < 0 || target >= m)
    throw std::invalid_argument("label_smoothed_ce: target out of range");
  double mx = logits[0];
  for (int t = 1; t < m; ++t) mx = std::max(mx, logits[t]);
  double z = 0.0;
  for (int t = 0; t < m; ++t) z += std::exp(logits[t] - mx);
  const double logz = std::log(z) + mx;
  const double off = eps / (m - 1);
  double loss = 0.0;
  for (int t = 0; t < m; ++t) {
    const double q = t == target ? 1.0 - eps : off;
    const double logp = logits[t] - logz;
    loss -= q * logp;
    if (dlogits) dlogits[t] = std::exp(logp) - q;
  }
  return loss;
}

double label_smoothing_floor(int m, double eps) {
  return -((1.0 - eps) * std::log(1.0 - eps) + eps * std::log(eps / (m - 1)));
}

double loss_and_gradients(const DenoiserModel& model,
                          const std::vector<TrainingExample>& batch,
                          std::vector<double>* grad) {
  if (!grad) throw std::invalid_argument("loss_and_gradients: null gradient buffer");
  size_t total = 0;
  for (const TrainingExample& ex : batch) total += ex.loss.size();
  if (total == 0) throw std::invalid_argument("loss_and_gradients: empty loss-position set");

  grad->assign(model.params().size(), 0.0);
  const int m = model.config().vocab_m;
  const double inv_total = 1.0 / static_cast<double>(total);
  std::vector<double> drow(m);
  double loss = 0.0;
  for (const TrainingExample& ex : batch) {
    DenoiserTape tape;
    std::vector<LogitsGrid> logits = model.forward_all(ex.input, &tape);
    std::vector<LogitsGrid> dlogits(logits.size(),
                                    LogitsGrid(model.grid_rows(), model.grid_cols(), m));
    for (const LossSpec& ls : ex.loss) {
      const double* row = &logits[ls.frame].at(ls.flat, 0);
      loss += inv_total *
              label_smoothed_ce(row, m, ls.target, kLabelSmoothing, drow.data());
      double* out = &dlogits[ls.frame].at(ls.flat, 0);
      for (int t = 0; t < m; ++t) out[t] += inv_total * drow[t];
    }
    model.backward(ex.input, tape, dlogits, grad);
  }
  return loss;
}

void OptimizerConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("OptimizerConfig: lr must be positive");
  if (min_lr_frac < 0.0 || min_lr_frac > 1.0)
    throw std::invalid_argument("OptimizerConfig: min_lr_frac must be in [0, 1]");
  if (warmup_iters < 0 || iterations < 1)
    throw std::invalid_argument("OptimizerConfig: bad iteration counts");
  if (clip_norm <= 0.0)
    throw std::invalid_argument("OptimizerConfig: clip_norm must be positive");
}

double OptimizerConfig::lr_at(int iteration) const {
  if (iteration < warmup_iters)
    return lr * static_cast<double>(iteration + 1) / warmup_iters;
  const int span = std::max(1, iterations - warmup_iters);
  const double u = static_cast<double>(iteration - warmup_iters) / span;
  return lr * (min_lr_frac + (1.0 - min_lr_frac) * 0.5 * (1.0 + std::cos(u * M_PI)));
}

const char* objective_name(Objective obj) {
  switch (obj) {
    case Objective::future_only: return "future_only";
    case Objective::joint_past_future: return "joint_past_future";
    case Objective::per_frame_unconditional: return "per_frame_unconditional";
  }
  return "unknown";
}

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "iteration,loss,mode\n";
  for (const MetricsRow& r : rows)
    out << r.iteration << "," << r.loss << "," << objective_name(r.mode) << "\n";
}

void TrainConfig::validate() const {
  env.validate();
  opt.validate();
  if (eta < 0.0 || eta > 1.0)
    throw std::invalid_argument("TrainConfig: eta must be a fraction in [0, 1]");
  if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
}

TrainResult train(DenoiserModel& model, const TrainConfig& cfg, TrainState* state,
                  int pause_at) {
  cfg.validate();
  TrainState local;
  TrainState& st = state ? *state : local;
  if (!state || st.iteration == 0) st.rng = Rng(cfg.seed);
  const int stop =
      pause_at < 0 ? cfg.opt.iterations : std::min(pause_at, cfg.opt.iterations);

  TrainResult result;
  std::vector<double> grad;
  std::vector<TrainingExample> batch;
  for (; st.iteration < stop; ++st.iteration) {
    const Objective obj =
        cfg.objective_override ? *cfg.objective_override : sample_objective(st.rng);
    batch.clear();
    for (int b = 0; b < cfg.batch; ++b) {
      Trajectory traj = generate_episode(cfg.env, st.rng);
      batch.push_back(
          make_training_example(traj, obj, cfg.gamma, cfg.eta, cfg.scope, st.rng));
    }
    const double loss = loss_and_gradients(model, batch, &grad);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: diverged (non-finite loss) at iteration " +
                               std::to_string(st.iteration));

    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    double step = cfg.opt.lr_at(st.iteration);
    if (norm > cfg.opt.clip_norm) step *= cfg.opt.clip_norm / norm;
    double* theta = model.params().flat().data();
    for (size_t i = 0; i < grad.size(); ++i) theta[i] -= step * grad[i];

    result.rows.push_back({st.iteration, loss, obj});
    result.final_loss = loss;
  }
  return result;
}

void save_checkpoint(const std::string& path, const DenoiserModel& model,
                     const TrainState& state, const std::string& config_hash) {
  std::map<std::string, std::string> meta;
  meta["iteration"] = std::to_string(state.iteration);
  meta["rng_state"] = state.rng.save_state();
  meta["config_hash"] = config_hash;
  save_tensor_archive(path, model.params(), meta);
}

std::string load_checkpoint(const std::string& path, DenoiserModel* model,
                            TrainState* state) {
  if (!model || !state) throw std::invalid_argument("load_checkpoint: null outputs");
  std::map<std::string, std::string> meta;
  load_tensor_archive(path, &model->params(), &meta);
  state->iteration = std::stoi(meta.at("iteration"));
  state->rng.load_state(meta.at("rng_state"));
  return meta.at("config_hash");
}

}  // namespace ddwm
