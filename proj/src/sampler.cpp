#include "ddwm/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace ddwm {

void DenoiserInput::validate() const {
  if (frames.empty()) throw std::invalid_argument("DenoiserInput: no frames");
  if (actions.size() != frames.size())
    throw std::invalid_argument("DenoiserInput: actions must align 1:1 with frames");
  if (mask.frames != static_cast<int>(frames.size()))
    throw std::invalid_argument("DenoiserInput: temporal mask size mismatch");
  if (!frame_ids.empty() && frame_ids.size() != frames.size())
    throw std::invalid_argument("DenoiserInput: frame_ids must align 1:1 with frames");
  for (int id : frame_ids)
    if (id < 0) throw std::invalid_argument("DenoiserInput: negative frame id");
  for (const auto& f : frames) f.validate();
  for (int q : query_frames)
    if (q < 0 || q >= static_cast<int>(frames.size()))
      throw std::invalid_argument("DenoiserInput: query frame out of range");
}

void SamplerConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("SamplerConfig: steps must be >= 1");
  if (guidance < 0.0)
    throw std::invalid_argument("SamplerConfig: guidance weight must be >= 0");
  if (top_k < 1) throw std::invalid_argument("SamplerConfig: top_k must be >= 1");
}

LogitsGrid cfg_combine(const LogitsGrid& cond, const LogitsGrid& uncond, double w) {
  if (w < 0.0) throw std::invalid_argument("cfg_combine: guidance weight must be >= 0");
  if (cond.rows != uncond.rows || cond.cols != uncond.cols || cond.m != uncond.m)
    throw std::invalid_argument("cfg_combine: logit shape mismatch");
  LogitsGrid out = cond;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = cond.v[i] + w * (cond.v[i] - uncond.v[i]);
  return out;
}

SampledX0 sample_x0(const LogitsGrid& logits, const Vocabulary& vocab, int top_k,
                    Rng& rng) {
  if (logits.m != vocab.m)
    throw std::invalid_argument("sample_x0: logits cover " + std::to_string(logits.m) +
                                " tokens, vocabulary has " + std::to_string(vocab.m));
  if (top_k < 1 || top_k > vocab.m)
    throw std::invalid_argument("sample_x0: top_k = " + std::to_string(top_k) +
                                " outside [1, m]");
  const int N = logits.positions();
  SampledX0 out;
  out.tokens = TokenGrid(vocab, logits.rows, logits.cols, 0);
  out.logp_full.assign(N, 0.0);
  out.logp_topk.assign(N, 0.0);

  std::vector<int> order(vocab.m);
  for (int pos = 0; pos < N; ++pos) {
    for (int t = 0; t < vocab.m; ++t) {
      if (!std::isfinite(logits.at(pos, t)))
        throw std::domain_error("sample_x0: non-finite logit at position " +
                                std::to_string(pos) + ", token " + std::to_string(t));
    }
    // top_k by logit, ties resolved toward the lower token id
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return logits.at(pos, a) > logits.at(pos, b);
    });

    // full-vocabulary log-softmax normalizer
    double mx_all = logits.at(pos, order[0]);
    double z_all = 0.0;
    for (int t = 0; t < vocab.m; ++t) z_all += std::exp(logits.at(pos, t) - mx_all);

    // renormalized distribution over the kept set
    double z_top = 0.0;
    for (int i = 0; i < top_k; ++i) z_top += std::exp(logits.at(pos, order[i]) - mx_all);
    const double u = rng.uniform() * z_top;
    double acc = 0.0;
    int chosen = order[top_k - 1];
    for (int i = 0; i < top_k; ++i) {
      acc += std::exp(logits.at(pos, order[i]) - mx_all);
      if (u < acc) {
        chosen = order[i];
        break;
      }
    }
    out.tokens.tokens[pos] = chosen;
    out.logp_full[pos] = logits.at(pos, chosen) - mx_all - std::log(z_all);
    out.logp_topk[pos] = logits.at(pos, chosen) - mx_all - std::log(z_top);
  }
  return out;
}

TokenGrid decode_step(const TokenGrid& x_next, const TokenGrid& x0_sample,
                      const std::vector<double>& logp, int k, int K,
                      const MaskSchedule& gamma, bool resample_committed, Rng& rng) {
  if (K < 1 || k < 0 || k >= K)
    throw std::invalid_argument("decode_step: k must lie in [0, K)");
  const int N = x_next.size();
  if (x0_sample.size() != N || static_cast<int>(logp.size()) != N)
    throw std::invalid_argument("decode_step: shape mismatch");
  if (x0_sample.mask_count() != 0)
    throw std::invalid_argument("decode_step: x0 sample contains mask tokens");

  const double progress = static_cast<double>(k) / K;
  const double frac = gamma(progress);
  const int keep = static_cast<int>(std::ceil(frac * N));
  if (keep > N)
    throw std::invalid_argument("decode_step: schedule keeps " + std::to_string(keep) +
                                " of " + std::to_string(N) + " positions");

  // confidence; committed positions pinned to the max finite double
  const double scale = progress;
  std::vector<double> conf(N);
  for (int i = 0; i < N; ++i) conf[i] = logp[i] + rng.gumbel() * scale;
  int committed = 0;
  for (int i = 0; i < N; ++i) {
    if (!x_next.vocab.is_mask(x_next.tokens[i])) {
      conf[i] = std::numeric_limits<double>::max();
      ++committed;
    }
  }
  if (keep < committed)
    throw std::runtime_error(
        "decode_step: schedule demands re-masking committed tokens (keep = " +
        std::to_string(keep) + " < committed = " + std::to_string(committed) + ")");

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  // ties resolved toward the lower flat index: stable sort on descending conf
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return conf[a] > conf[b]; });

  TokenGrid x_k(x_next.vocab, x_next.rows, x_next.cols, x_next.vocab.mask_index());
  for (int i = 0; i < keep; ++i) {
    const int pos = order[i];
    const bool was_committed = !x_next.vocab.is_mask(x_next.tokens[pos]);
    if (was_committed && !resample_committed)
      x_k.tokens[pos] = x_next.tokens[pos];  // frozen maskgit-style commit
    else
      x_k.tokens[pos] = x0_sample.tokens[pos];
  }
  return x_k;
}

namespace {

TokenGrid all_mask_grid(const Denoiser& d) {
  return TokenGrid(d.vocab(), d.grid_rows(), d.grid_cols(), d.vocab().mask_index());
}

}  // namespace

TokenGrid sample_frame(const Denoiser& denoiser, const Trajectory& context,
                       const Action& next_action, const SamplerConfig& cfg, Rng& rng,
                       SampleTrace* trace) {
  cfg.validate();
  context.validate();
  const int T = static_cast<int>(context.length()) + 1;
  if (T > denoiser.max_frames())
    throw std::invalid_argument("sample_frame: " + std::to_string(T) +
                                " frames exceed the denoiser's maximum temporal extent of " +
                                std::to_string(denoiser.max_frames()));

  const int K = cfg.steps;
  TokenGrid x = all_mask_grid(denoiser);
  for (int k = K - 1; k >= 0; --k) {
    DenoiserInput in;
    in.frames.assign(context.frames.begin(), context.frames.end());
    in.actions.assign(context.actions.begin(), context.actions.end());
    in.frames.push_back(x);
    in.actions.push_back(next_action);
    LogitsGrid guided;
    try {
      if (cfg.guidance > 0.0) {
        // single pass over T+1 frames: causal block plus an isolated
        // duplicate whose logits are the unconditional branch
        in.frames.push_back(x);
        in.actions.push_back(zero_action());
        in.mask = build_temporal_mask(T, TemporalMaskMode::cfg_extended);
        in.query_frames = {T - 1, T};
        const auto logits = denoiser.forward(in);
        guided = cfg_combine(logits[0], logits[1], cfg.guidance);
      } else {
        in.mask = build_temporal_mask(T, TemporalMaskMode::causal);
        in.query_frames = {T - 1};
        guided = denoiser.forward(in)[0];
      }
    } catch (const std::exception& e) {
      throw std::runtime_error("sample_frame: denoiser failed at step k = " +
                               std::to_string(k) + ": " + e.what());
    }
    const SampledX0 s = sample_x0(guided, denoiser.vocab(), cfg.top_k, rng);
    const auto& conf = cfg.confidence_from_topk ? s.logp_topk : s.logp_full;
    x = decode_step(x, s.tokens, conf, k, K, cfg.gamma, cfg.resample_committed, rng);
    if (trace) trace->steps.push_back(x);
  }
  if (!x.fully_decoded())
    throw std::logic_error("sample_frame: final grid still contains mask tokens");
  return x;
}

Trajectory rollout(const Denoiser& denoiser, const Trajectory& seed,
                   const std::vector<Action>& future_actions, const SamplerConfig& cfg,
                   Rng& rng) {
  Trajectory out = seed;
  for (const Action& a : future_actions) {
    TokenGrid next = sample_frame(denoiser, out, a, cfg, rng);
    out.frames.push_back(std::move(next));
    out.actions.push_back(a);
  }
  return out;
}

}  // namespace ddwm
