#include "ddwm/denoiser_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddwm {

namespace {

constexpr double kLnEps = 1e-5;

// y = gamma * (x - mean) / sqrt(var + eps) + beta, per length-d vector.
// Records xhat and rstd for the backward pass.
void layer_norm_fwd(const double* x, const double* gamma, const double* beta, int d,
                    double* y, double* xhat, double* rstd) {
  double mu = 0.0;
  for (int c = 0; c < d; ++c) mu += x[c];
  mu /= d;
  double var = 0.0;
  for (int c = 0; c < d; ++c) var += (x[c] - mu) * (x[c] - mu);
  var /= d;
  const double r = 1.0 / std::sqrt(var + kLnEps);
  *rstd = r;
  for (int c = 0; c < d; ++c) {
    xhat[c] = (x[c] - mu) * r;
    y[c] = gamma[c] * xhat[c] + beta[c];
  }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat ⊙ xhat)); accumulates
// parameter grads and adds dx into dx_acc.
void layer_norm_bwd(const double* dy, const double* xhat, double rstd, const double* gamma,
                    int d, double* dgamma, double* dbeta, double* dx_acc, double* scratch) {
  double m1 = 0.0, m2 = 0.0;
  for (int c = 0; c < d; ++c) {
    dgamma[c] += dy[c] * xhat[c];
    dbeta[c] += dy[c];
    const double dxh = dy[c] * gamma[c];
    scratch[c] = dxh;
    m1 += dxh;
    m2 += dxh * xhat[c];
  }
  m1 /= d;
  m2 /= d;
  for (int c = 0; c < d; ++c) dx_acc[c] += rstd * (scratch[c] - m1 - xhat[c] * m2);
}

// y = W x (+ b), W is out x in row-major
void linear_fwd(const double* W, const double* b, const double* x, int out, int in,
                double* y) {
  for (int o = 0; o < out; ++o) {
    double s = b ? b[o] : 0.0;
    const double* w = W + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) s += w[i] * x[i];
    y[o] = s;
  }
}

// accumulates dW += dy x^T, db += dy, dx += W^T dy
void linear_bwd(const double* W, const double* x, const double* dy, int out, int in,
                double* dW, double* db, double* dx) {
  for (int o = 0; o < out; ++o) {
    const double g = dy[o];
    if (g == 0.0) continue;
    double* dw = dW + static_cast<size_t>(o) * in;
    const double* w = W + static_cast<size_t>(o) * in;
    for (int i = 0; i < in; ++i) {
      dw[i] += g * x[i];
      dx[i] += w[i] * g;
    }
    if (db) db[o] += g;
  }
}

}  // namespace

void DenoiserModelConfig::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("DenoiserModelConfig: bad grid");
  if (vocab_m < 2) throw std::invalid_argument("DenoiserModelConfig: vocab too small");
  if (max_frames < 1) throw std::invalid_argument("DenoiserModelConfig: max_frames < 1");
  if (dim < 1 || hidden < 1 || blocks < 1)
    throw std::invalid_argument("DenoiserModelConfig: bad model dimensions");
}

DenoiserModel::DenoiserModel(const DenoiserModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  const int d = cfg.dim, H = cfg.hidden, N = cfg.rows * cfg.cols;

  emb_ = params_.add("embedding", {cfg.vocab_m + 1, d});
  sp_pe_ = params_.add("spatial_pe", {N, d});
  tm_pe_ = params_.add("temporal_pe", {cfg.max_frames, d});
  act_proj_ = params_.add("action_proj", {d, 16});
  offs_.resize(cfg.blocks);
  for (int l = 0; l < cfg.blocks; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    BlockOffsets& o = offs_[l];
    o.sp_ln_g = params_.add(p + "sp_ln.gamma", {d});
    o.sp_ln_b = params_.add(p + "sp_ln.beta", {d});
    o.sp_wq = params_.add(p + "sp_attn.wq", {d, d});
    o.sp_bq = params_.add(p + "sp_attn.bq", {d});
    o.sp_wk = params_.add(p + "sp_attn.wk", {d, d});
    o.sp_bk = params_.add(p + "sp_attn.bk", {d});
    o.sp_wv = params_.add(p + "sp_attn.wv", {d, d});
    o.sp_bv = params_.add(p + "sp_attn.bv", {d});
    o.sp_wo = params_.add(p + "sp_attn.wo", {d, d});
    o.tm_ln_g = params_.add(p + "tm_ln.gamma", {d});
    o.tm_ln_b = params_.add(p + "tm_ln.beta", {d});
    o.tm_wq = params_.add(p + "tm_attn.wq", {d, d});
    o.tm_bq = params_.add(p + "tm_attn.bq", {d});
    o.tm_wk = params_.add(p + "tm_attn.wk", {d, d});
    o.tm_bk = params_.add(p + "tm_attn.bk", {d});
    o.tm_wv = params_.add(p + "tm_attn.wv", {d, d});
    o.tm_bv = params_.add(p + "tm_attn.bv", {d});
    o.tm_wo = params_.add(p + "tm_attn.wo", {d, d});
    o.mlp_ln_g = params_.add(p + "mlp_ln.gamma", {d});
    o.mlp_ln_b = params_.add(p + "mlp_ln.beta", {d});
    o.mlp_w1 = params_.add(p + "mlp.w1", {H, d});
    o.mlp_w2 = params_.add(p + "mlp.w2", {d, H});
  }
  fin_ln_g_ = params_.add("final_ln.gamma", {d});
  fin_ln_b_ = params_.add("final_ln.beta", {d});

  // init: fan-in-scaled normals for weights, 0.1 normals for embeddings/PEs,
  // ones/zeros for layer norms, residual projections shrunk with depth
  Rng rng(cfg.init_seed);
  auto fill_normal = [&](size_t off, size_t n, double std) {
    double* v = params_.flat().data() + off;
    for (size_t i = 0; i < n; ++i) v[i] = rng.normal() * std;
  };
  auto fill_const = [&](size_t off, size_t n, double c) {
    double* v = params_.flat().data() + off;
    for (size_t i = 0; i < n; ++i) v[i] = c;
  };
  const double w_std = std::sqrt(1.0 / (3.0 * d));
  const double res_std = w_std / std::sqrt(2.0 * cfg.blocks);
  fill_normal(emb_, static_cast<size_t>(cfg.vocab_m + 1) * d, 0.1);
  fill_normal(sp_pe_, static_cast<size_t>(N) * d, 0.1);
  fill_normal(tm_pe_, static_cast<size_t>(cfg.max_frames) * d, 0.1);
  fill_normal(act_proj_, static_cast<size_t>(d) * 16, std::sqrt(1.0 / (3.0 * 16)));
  for (const BlockOffsets& o : offs_) {
    fill_const(o.sp_ln_g, d, 1.0);
    fill_normal(o.sp_wq, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.sp_wk, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.sp_wv, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.sp_wo, static_cast<size_t>(d) * d, res_std);
    fill_const(o.tm_ln_g, d, 1.0);
    fill_normal(o.tm_wq, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.tm_wk, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.tm_wv, static_cast<size_t>(d) * d, w_std);
    fill_normal(o.tm_wo, static_cast<size_t>(d) * d, res_std);
    fill_const(o.mlp_ln_g, d, 1.0);
    fill_normal(o.mlp_w1, static_cast<size_t>(H) * d, w_std);
    fill_normal(o.mlp_w2, static_cast<size_t>(d) * H, std::sqrt(1.0 / (3.0 * H)) /
                                                           std::sqrt(2.0 * cfg.blocks));
  }
  fill_const(fin_ln_g_, d, 1.0);
}

void DenoiserModel::check_input(const DenoiserInput& in) const {
  in.validate();
  const int F = static_cast<int>(in.frames.size());
  if (F > cfg_.max_frames)
    throw std::invalid_argument("DenoiserModel: input exceeds maximum temporal extent");
  for (const TokenGrid& f : in.frames) {
    if (f.rows != cfg_.rows || f.cols != cfg_.cols)
      throw std::invalid_argument("DenoiserModel: frame shape mismatch");
    if (f.vocab.m != cfg_.vocab_m)
      throw std::invalid_argument("DenoiserModel: vocabulary mismatch");
  }
}

std::vector<LogitsGrid> DenoiserModel::forward(const DenoiserInput& in) const {
  std::vector<LogitsGrid> all = forward_all(in, nullptr);
  std::vector<LogitsGrid> out;
  out.reserve(in.query_frames.size());
  for (int q : in.query_frames) out.push_back(all[q]);
  return out;
}

std::vector<LogitsGrid> DenoiserModel::forward_all(const DenoiserInput& in,
                                                   DenoiserTape* tape) const {
  check_input(in);
  const int F = static_cast<int>(in.frames.size());
  const int N = cfg_.rows * cfg_.cols, d = cfg_.dim, H = cfg_.hidden, m = cfg_.vocab_m;
  const size_t FP = static_cast<size_t>(F) * N;
  const double* P = params_.flat().data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  DenoiserTape local;
  DenoiserTape& tp = tape ? *tape : local;
  tp.frames = F;
  tp.blocks.assign(cfg_.blocks, {});

  // embed tokens + spatial/temporal positions + projected action
  std::vector<double> x(FP * d);
  std::vector<double> act(static_cast<size_t>(F) * d);
  for (int f = 0; f < F; ++f)
    linear_fwd(P + act_proj_, nullptr, in.actions[f].data(), d, 16,
               act.data() + static_cast<size_t>(f) * d);
  for (int f = 0; f < F; ++f)
    for (int p = 0; p < N; ++p) {
      const int tok = in.frames[f].tokens[p];
      double* xv = x.data() + (static_cast<size_t>(f) * N + p) * d;
      const double* e = P + emb_ + static_cast<size_t>(tok) * d;
      const double* sp = P + sp_pe_ + static_cast<size_t>(p) * d;
      const double* tm = P + tm_pe_ + static_cast<size_t>(f) * d;
      const double* av = act.data() + static_cast<size_t>(f) * d;
      for (int c = 0; c < d; ++c) xv[c] = e[c] + sp[c] + tm[c] + av[c];
    }

  std::vector<double> h(FP * d), scores(std::max(N, F)), y(FP * d);
  for (int l = 0; l < cfg_.blocks; ++l) {
    const BlockOffsets& o = offs_[l];
    DenoiserTape::Block& tb = tp.blocks[l];

    // --- per-frame mixing: attention over the N positions of each frame ---
    tb.sp_xhat.resize(FP * d);
    tb.sp_rstd.resize(FP);
    tb.sp_q.resize(FP * d);
    tb.sp_k.resize(FP * d);
    tb.sp_v.resize(FP * d);
    tb.sp_probs.assign(static_cast<size_t>(F) * N * N, 0.0);
    tb.sp_att.assign(FP * d, 0.0);
    for (size_t t = 0; t < FP; ++t)
      layer_norm_fwd(x.data() + t * d, P + o.sp_ln_g, P + o.sp_ln_b, d, h.data() + t * d,
                     tb.sp_xhat.data() + t * d, &tb.sp_rstd[t]);
    for (size_t t = 0; t < FP; ++t) {
      linear_fwd(P + o.sp_wq, P + o.sp_bq, h.data() + t * d, d, d, tb.sp_q.data() + t * d);
      linear_fwd(P + o.sp_wk, P + o.sp_bk, h.data() + t * d, d, d, tb.sp_k.data() + t * d);
      linear_fwd(P + o.sp_wv, P + o.sp_bv, h.data() + t * d, d, d, tb.sp_v.data() + t * d);
    }
    for (int f = 0; f < F; ++f) {
      const size_t base = static_cast<size_t>(f) * N;
      for (int p = 0; p < N; ++p) {
        const double* qv = tb.sp_q.data() + (base + p) * d;
        double mx = -1e300;
        for (int g = 0; g < N; ++g) {
          const double* kv = tb.sp_k.data() + (base + g) * d;
          double s = 0.0;
          for (int c = 0; c < d; ++c) s += qv[c] * kv[c];
          scores[g] = s * scale;
          mx = std::max(mx, scores[g]);
        }
        double z = 0.0;
        double* probs = tb.sp_probs.data() + (static_cast<size_t>(f) * N + p) * N;
        for (int g = 0; g < N; ++g) {
          probs[g] = std::exp(scores[g] - mx);
          z += probs[g];
        }
        double* att = tb.sp_att.data() + (base + p) * d;
        for (int g = 0; g < N; ++g) {
          probs[g] /= z;
          const double* vv = tb.sp_v.data() + (base + g) * d;
          for (int c = 0; c < d; ++c) att[c] += probs[g] * vv[c];
        }
      }
    }
    for (size_t t = 0; t < FP; ++t) {
      linear_fwd(P + o.sp_wo, nullptr, tb.sp_att.data() + t * d, d, d, y.data() + t * d);
      double* xv = x.data() + t * d;
      const double* yv = y.data() + t * d;
      for (int c = 0; c < d; ++c) xv[c] += yv[c];
    }

    // --- temporal mixing: masked attention over frames at a fixed position ---
    tb.tm_xhat.resize(FP * d);
    tb.tm_rstd.resize(FP);
    tb.tm_q.resize(FP * d);
    tb.tm_k.resize(FP * d);
    tb.tm_v.resize(FP * d);
    tb.tm_probs.assign(static_cast<size_t>(N) * F * F, 0.0);
    tb.tm_att.assign(FP * d, 0.0);
    for (size_t t = 0; t < FP; ++t)
      layer_norm_fwd(x.data() + t * d, P + o.tm_ln_g, P + o.tm_ln_b, d, h.data() + t * d,
                     tb.tm_xhat.data() + t * d, &tb.tm_rstd[t]);
    for (size_t t = 0; t < FP; ++t) {
      linear_fwd(P + o.tm_wq, P + o.tm_bq, h.data() + t * d, d, d, tb.tm_q.data() + t * d);
      linear_fwd(P + o.tm_wk, P + o.tm_bk, h.data() + t * d, d, d, tb.tm_k.data() + t * d);
      linear_fwd(P + o.tm_wv, P + o.tm_bv, h.data() + t * d, d, d, tb.tm_v.data() + t * d);
    }
    for (int p = 0; p < N; ++p) {
      for (int f = 0; f < F; ++f) {
        // masked-out frames are excluded from the softmax entirely; summation
        // runs over the allowed frames in ascending order so results are
        // bit-identical no matter what the excluded frames contain
        const double* qv = tb.tm_q.data() + (static_cast<size_t>(f) * N + p) * d;
        double mx = -1e300;
        int n_allowed = 0;
        for (int g = 0; g < F; ++g) {
          if (!in.mask.allowed(f, g)) continue;
          const double* kv = tb.tm_k.data() + (static_cast<size_t>(g) * N + p) * d;
          double s = 0.0;
          for (int c = 0; c < d; ++c) s += qv[c] * kv[c];
          scores[g] = s * scale;
          mx = std::max(mx, scores[g]);
          ++n_allowed;
        }
        if (n_allowed == 0)
          throw std::invalid_argument("DenoiserModel: temporal mask starves a frame");
        double z = 0.0;
        double* probs = tb.tm_probs.data() + (static_cast<size_t>(p) * F + f) * F;
        for (int g = 0; g < F; ++g) {
          if (!in.mask.allowed(f, g)) continue;
          probs[g] = std::exp(scores[g] - mx);
          z += probs[g];
        }
        double* att = tb.tm_att.data() + (static_cast<size_t>(f) * N + p) * d;
        for (int g = 0; g < F; ++g) {
          if (!in.mask.allowed(f, g)) continue;
          probs[g] /= z;
          const double* vv = tb.tm_v.data() + (static_cast<size_t>(g) * N + p) * d;
          for (int c = 0; c < d; ++c) att[c] += probs[g] * vv[c];
        }
      }
    }
    for (size_t t = 0; t < FP; ++t) {
      linear_fwd(P + o.tm_wo, nullptr, tb.tm_att.data() + t * d, d, d, y.data() + t * d);
      double* xv = x.data() + t * d;
      const double* yv = y.data() + t * d;
      for (int c = 0; c < d; ++c) xv[c] += yv[c];
    }

    // --- MLP ---
    tb.mlp_xhat.resize(FP * d);
    tb.mlp_rstd.resize(FP);
    tb.mlp_pre.resize(FP * H);
    std::vector<double> a(H);
    for (size_t t = 0; t < FP; ++t) {
      layer_norm_fwd(x.data() + t * d, P + o.mlp_ln_g, P + o.mlp_ln_b, d, h.data() + t * d,
                     tb.mlp_xhat.data() + t * d, &tb.mlp_rstd[t]);
      double* pre = tb.mlp_pre.data() + t * H;
      linear_fwd(P + o.mlp_w1, nullptr, h.data() + t * d, H, d, pre);
      for (int j = 0; j < H; ++j) a[j] = pre[j] > 0.0 ? pre[j] : 0.0;
      linear_fwd(P + o.mlp_w2, nullptr, a.data(), d, H, y.data() + t * d);
      double* xv = x.data() + t * d;
      const double* yv = y.data() + t * d;
      for (int c = 0; c < d; ++c) xv[c] += yv[c];
    }
  }

  // final norm + readout tied to the embedding table (mask row never scored)
  tp.fin_xhat.resize(FP * d);
  tp.fin_rstd.resize(FP);
  tp.u.resize(FP * d);
  for (size_t t = 0; t < FP; ++t)
    layer_norm_fwd(x.data() + t * d, P + fin_ln_g_, P + fin_ln_b_, d, tp.u.data() + t * d,
                   tp.fin_xhat.data() + t * d, &tp.fin_rstd[t]);

  std::vector<LogitsGrid> out(F, LogitsGrid(cfg_.rows, cfg_.cols, m));
  for (int f = 0; f < F; ++f)
    for (int p = 0; p < N; ++p) {
      const double* uv = tp.u.data() + (static_cast<size_t>(f) * N + p) * d;
      for (int t = 0; t < m; ++t) {
        const double* e = P + emb_ + static_cast<size_t>(t) * d;
        double s = 0.0;
        for (int c = 0; c < d; ++c) s += uv[c] * e[c];
        out[f].at(p, t) = s;
      }
    }
  return out;
}

void DenoiserModel::backward(const DenoiserInput& in, const DenoiserTape& tape,
                             const std::vector<LogitsGrid>& dlogits,
                             std::vector<double>* grad) const {
  check_input(in);
  if (!grad || grad->size() != params_.size())
    throw std::invalid_argument("DenoiserModel::backward: bad gradient buffer");
  const int F = static_cast<int>(in.frames.size());
  if (tape.frames != F || static_cast<int>(dlogits.size()) != F)
    throw std::invalid_argument("DenoiserModel::backward: tape/dlogits mismatch");
  const int N = cfg_.rows * cfg_.cols, d = cfg_.dim, H = cfg_.hidden, m = cfg_.vocab_m;
  const size_t FP = static_cast<size_t>(F) * N;
  const double* P = params_.flat().data();
  double* G = grad->data();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));

  // readout: du from dlogits through the tied embedding, dEmb from u
  std::vector<double> du(FP * d, 0.0);
  for (int f = 0; f < F; ++f)
    for (int p = 0; p < N; ++p) {
      const size_t t0 = static_cast<size_t>(f) * N + p;
      const double* uv = tape.u.data() + t0 * d;
      double* duv = du.data() + t0 * d;
      for (int t = 0; t < m; ++t) {
        const double g = dlogits[f].at(p, t);
        if (g == 0.0) continue;
        const double* e = P + emb_ + static_cast<size_t>(t) * d;
        double* ge = G + emb_ + static_cast<size_t>(t) * d;
        for (int c = 0; c < d; ++c) {
          duv[c] += g * e[c];
          ge[c] += g * uv[c];
        }
      }
    }

  // final layer norm
  std::vector<double> dx(FP * d, 0.0), scratch(d);
  for (size_t t = 0; t < FP; ++t)
    layer_norm_bwd(du.data() + t * d, tape.fin_xhat.data() + t * d, tape.fin_rstd[t],
                   P + fin_ln_g_, d, G + fin_ln_g_, G + fin_ln_b_, dx.data() + t * d,
                   scratch.data());

  std::vector<double> h(FP * d), dh(FP * d), dq(FP * d), dk(FP * d), dv(FP * d),
      datt(FP * d), dprobs(std::max(N, F)), ds(std::max(N, F));
  std::vector<double> a(H), da(H), dpre(H);

  for (int l = cfg_.blocks - 1; l >= 0; --l) {
    const BlockOffsets& o = offs_[l];
    const DenoiserTape::Block& tb = tape.blocks[l];

    // --- MLP backward ---
    std::fill(dh.begin(), dh.end(), 0.0);
    for (size_t t = 0; t < FP; ++t) {
      // recompute the normalized input and hidden activations from the tape
      const double* xhat = tb.mlp_xhat.data() + t * d;
      for (int c = 0; c < d; ++c)
        h[t * d + c] = P[o.mlp_ln_g + c] * xhat[c] + P[o.mlp_ln_b + c];
      const double* pre = tb.mlp_pre.data() + t * H;
      for (int j = 0; j < H; ++j) a[j] = pre[j] > 0.0 ? pre[j] : 0.0;
      std::fill(da.begin(), da.end(), 0.0);
      linear_bwd(P + o.mlp_w2, a.data(), dx.data() + t * d, d, H, G + o.mlp_w2, nullptr,
                 da.data());
      for (int j = 0; j < H; ++j) dpre[j] = pre[j] > 0.0 ? da[j] : 0.0;
      linear_bwd(P + o.mlp_w1, h.data() + t * d, dpre.data(), H, d, G + o.mlp_w1, nullptr,
                 dh.data() + t * d);
    }
    for (size_t t = 0; t < FP; ++t)
      layer_norm_bwd(dh.data() + t * d, tb.mlp_xhat.data() + t * d, tb.mlp_rstd[t],
                     P + o.mlp_ln_g, d, G + o.mlp_ln_g, G + o.mlp_ln_b, dx.data() + t * d,
                     scratch.data());

    // --- temporal mixing backward ---
    std::fill(datt.begin(), datt.end(), 0.0);
    for (size_t t = 0; t < FP; ++t)
      linear_bwd(P + o.tm_wo, tb.tm_att.data() + t * d, dx.data() + t * d, d, d,
                 G + o.tm_wo, nullptr, datt.data() + t * d);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int p = 0; p < N; ++p) {
      for (int f = 0; f < F; ++f) {
        const double* probs = tb.tm_probs.data() + (static_cast<size_t>(p) * F + f) * F;
        const double* dav = datt.data() + (static_cast<size_t>(f) * N + p) * d;
        double dot = 0.0;
        for (int g = 0; g < F; ++g) {
          if (!in.mask.allowed(f, g)) continue;
          const double* vv = tb.tm_v.data() + (static_cast<size_t>(g) * N + p) * d;
          double* dvv = dv.data() + (static_cast<size_t>(g) * N + p) * d;
          double dp = 0.0;
          for (int c = 0; c < d; ++c) {
            dp += dav[c] * vv[c];
            dvv[c] += probs[g] * dav[c];
          }
          dprobs[g] = dp;
          dot += probs[g] * dp;
        }
        const double* qv = tb.tm_q.data() + (static_cast<size_t>(f) * N + p) * d;
        double* dqv = dq.data() + (static_cast<size_t>(f) * N + p) * d;
        for (int g = 0; g < F; ++g) {
          if (!in.mask.allowed(f, g)) continue;
          const double dsg = probs[g] * (dprobs[g] - dot) * scale;
          const double* kv = tb.tm_k.data() + (static_cast<size_t>(g) * N + p) * d;
          double* dkv = dk.data() + (static_cast<size_t>(g) * N + p) * d;
          for (int c = 0; c < d; ++c) {
            dqv[c] += dsg * kv[c];
            dkv[c] += dsg * qv[c];
          }
        }
      }
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (size_t t = 0; t < FP; ++t) {
      const double* xhat = tb.tm_xhat.data() + t * d;
      for (int c = 0; c < d; ++c)
        h[t * d + c] = P[o.tm_ln_g + c] * xhat[c] + P[o.tm_ln_b + c];
      linear_bwd(P + o.tm_wq, h.data() + t * d, dq.data() + t * d, d, d, G + o.tm_wq,
                 G + o.tm_bq, dh.data() + t * d);
      linear_bwd(P + o.tm_wk, h.data() + t * d, dk.data() + t * d, d, d, G + o.tm_wk,
                 G + o.tm_bk, dh.data() + t * d);
      linear_bwd(P + o.tm_wv, h.data() + t * d, dv.data() + t * d, d, d, G + o.tm_wv,
                 G + o.tm_bv, dh.data() + t * d);
    }
    for (size_t t = 0; t < FP; ++t)
      layer_norm_bwd(dh.data() + t * d, tb.tm_xhat.data() + t * d, tb.tm_rstd[t],
                     P + o.tm_ln_g, d, G + o.tm_ln_g, G + o.tm_ln_b, dx.data() + t * d,
                     scratch.data());

    // --- per-frame mixing backward ---
    std::fill(datt.begin(), datt.end(), 0.0);
    for (size_t t = 0; t < FP; ++t)
      linear_bwd(P + o.sp_wo, tb.sp_att.data() + t * d, dx.data() + t * d, d, d,
                 G + o.sp_wo, nullptr, datt.data() + t * d);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dk.begin(), dk.end(), 0.0);
    std::fill(dv.begin(), dv.end(), 0.0);
    for (int f = 0; f < F; ++f) {
      const size_t base = static_cast<size_t>(f) * N;
      for (int p = 0; p < N; ++p) {
        const double* probs = tb.sp_probs.data() + (static_cast<size_t>(f) * N + p) * N;
        const double* dav = datt.data() + (base + p) * d;
        double dot = 0.0;
        for (int g = 0; g < N; ++g) {
          const double* vv = tb.sp_v.data() + (base + g) * d;
          double* dvv = dv.data() + (base + g) * d;
          double dp = 0.0;
          for (int c = 0; c < d; ++c) {
            dp += dav[c] * vv[c];
            dvv[c] += probs[g] * dav[c];
          }
          dprobs[g] = dp;
          dot += probs[g] * dp;
        }
        const double* qv = tb.sp_q.data() + (base + p) * d;
        double* dqv = dq.data() + (base + p) * d;
        for (int g = 0; g < N; ++g) {
          const double dsg = probs[g] * (dprobs[g] - dot) * scale;
          const double* kv = tb.sp_k.data() + (base + g) * d;
          double* dkv = dk.data() + (base + g) * d;
          for (int c = 0; c < d; ++c) {
            dqv[c] += dsg * kv[c];
            dkv[c] += dsg * qv[c];
          }
        }
      }
    }
    std::fill(dh.begin(), dh.end(), 0.0);
    for (size_t t = 0; t < FP; ++t) {
      const double* xhat = tb.sp_xhat.data() + t * d;
      for (int c = 0; c < d; ++c)
        h[t * d + c] = P[o.sp_ln_g + c] * xhat[c] + P[o.sp_ln_b + c];
      linear_bwd(P + o.sp_wq, h.data() + t * d, dq.data() + t * d, d, d, G + o.sp_wq,
                 G + o.sp_bq, dh.data() + t * d);
      linear_bwd(P + o.sp_wk, h.data() + t * d, dk.data() + t * d, d, d, G + o.sp_wk,
                 G + o.sp_bk, dh.data() + t * d);
      linear_bwd(P + o.sp_wv, h.data() + t * d, dv.data() + t * d, d, d, G + o.sp_wv,
                 G + o.sp_bv, dh.data() + t * d);
    }
    for (size_t t = 0; t < FP; ++t)
      layer_norm_bwd(dh.data() + t * d, tb.sp_xhat.data() + t * d, tb.sp_rstd[t],
                     P + o.sp_ln_g, d, G + o.sp_ln_g, G + o.sp_ln_b, dx.data() + t * d,
                     scratch.data());
  }

  // input embedding backward
  for (int f = 0; f < F; ++f) {
    const double* af = in.actions[f].data();
    for (int p = 0; p < N; ++p) {
      const int tok = in.frames[f].tokens[p];
      const double* dxv = dx.data() + (static_cast<size_t>(f) * N + p) * d;
      double* ge = G + emb_ + static_cast<size_t>(tok) * d;
      double* gsp = G + sp_pe_ + static_cast<size_t>(p) * d;
      double* gtm = G + tm_pe_ + static_cast<size_t>(f) * d;
      for (int c = 0; c < d; ++c) {
        ge[c] += dxv[c];
        gsp[c] += dxv[c];
        gtm[c] += dxv[c];
        double* gap = G + act_proj_ + static_cast<size_t>(c) * 16;
        for (int j = 0; j < 16; ++j) gap[j] += dxv[c] * af[j];
      }
    }
  }
}

}  // namespace ddwm
