#include "voxbuild/encoder.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <span>
#include <stdexcept>

#include "voxbuild/error.hpp"
#include "voxbuild/rng.hpp"

namespace voxbuild {

namespace {

constexpr double kLnEps = 1e-5;

// gelu(x) = x * Phi(x); the normal cdf/pdf are cached at forward time so
// the backward pass is free of special functions.
void gelu_forward(const double* __restrict x, double* __restrict y,
                  double* __restrict cdf, double* __restrict pdf,
                  std::size_t n) {
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t i = 0; i < n; ++i) {
    cdf[i] = 0.5 * (1.0 + std::erf(x[i] / std::numbers::sqrt2));
    pdf[i] = std::exp(-0.5 * x[i] * x[i]) * inv_sqrt2pi;
    y[i] = x[i] * cdf[i];
  }
}

// y = gain * (x - mean) / sqrt(var + eps) + bias, per row of width d.
void layernorm_forward(const double* x, const double* gain, const double* bias,
                       double* y, double* xhat, double* rstd, std::size_t rows,
                       std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double c = xr[i] - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd[r] = rs;
    double* yr = y + r * d;
    double* xh = xhat + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      xh[i] = (xr[i] - mean) * rs;
      yr[i] = gain[i] * xh[i] + bias[i];
    }
  }
}

void layernorm_backward(const double* dy, const double* xhat,
                        const double* rstd, const double* gain, double* dx,
                        double* dgain, double* dbias, std::size_t rows,
                        std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy + r * d;
    const double* xh = xhat + r * d;
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double t = dyr[i] * gain[i];
      m1 += t;
      m2 += t * xh[i];
      dgain[i] += dyr[i] * xh[i];
      dbias[i] += dyr[i];
    }
    m1 /= static_cast<double>(d);
    m2 /= static_cast<double>(d);
    double* dxr = dx + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double t = dyr[i] * gain[i];
      dxr[i] += (t - m1 - xh[i] * m2) * rstd[r];
    }
  }
}

void sample_dropout_mask(std::vector<double>& mask, std::size_t n, double rate,
                         Rng& rng) {
  mask.resize(n);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.next_double() < rate ? 0.0 : scale;
  }
}

void apply_mask(double* x, const std::vector<double>& mask, std::size_t n) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < n; ++i) x[i] *= mask[i];
}

}  // namespace

void EncoderConfig::validate() const {
  if (n_layers < 1 || d_model < 1 || n_heads < 1 || d_ff < 1 ||
      max_seq_len < 1 || vocab_size < 1) {
    throw std::invalid_argument("EncoderConfig: all counts must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument(
        "EncoderConfig: d_model must be divisible by n_heads");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw std::invalid_argument("EncoderConfig: dropout_rate out of [0, 1)");
  }
}

EncoderState make_encoder_state(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t v = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t f = static_cast<std::size_t>(cfg.d_ff);
  const std::size_t s = static_cast<std::size_t>(cfg.max_seq_len);
  EncoderState st;
  st.config = cfg;
  st.tok_emb = Tensor{{v, d}};
  st.pos_emb = Tensor{{s, d}};
  st.emb_ln_g = Tensor{{d}};
  st.emb_ln_b = Tensor{{d}};
  st.layers.resize(static_cast<std::size_t>(cfg.n_layers));
  for (auto& l : st.layers) {
    l.wq = Tensor{{d, d}};
    l.bq = Tensor{{d}};
    l.wk = Tensor{{d, d}};
    l.bk = Tensor{{d}};
    l.wv = Tensor{{d, d}};
    l.bv = Tensor{{d}};
    l.wo = Tensor{{d, d}};
    l.bo = Tensor{{d}};
    l.ln1_g = Tensor{{d}};
    l.ln1_b = Tensor{{d}};
    l.w1 = Tensor{{d, f}};
    l.b1 = Tensor{{f}};
    l.w2 = Tensor{{f, d}};
    l.b2 = Tensor{{d}};
    l.ln2_g = Tensor{{d}};
    l.ln2_b = Tensor{{d}};
  }
  if (!cfg.tied_output) st.out_proj = Tensor{{v, d}};
  return st;
}

std::vector<NamedParam> named_params(EncoderState& state) {
  std::vector<NamedParam> out;
  out.push_back({"tok_emb", &state.tok_emb, ParamKind::Weight});
  out.push_back({"pos_emb", &state.pos_emb, ParamKind::Weight});
  out.push_back({"emb_ln_g", &state.emb_ln_g, ParamKind::Gain});
  out.push_back({"emb_ln_b", &state.emb_ln_b, ParamKind::Bias});
  for (std::size_t i = 0; i < state.layers.size(); ++i) {
    LayerParams& l = state.layers[i];
    const std::string p = "l" + std::to_string(i) + ".";
    out.push_back({p + "wq", &l.wq, ParamKind::Weight});
    out.push_back({p + "bq", &l.bq, ParamKind::Bias});
    out.push_back({p + "wk", &l.wk, ParamKind::Weight});
    out.push_back({p + "bk", &l.bk, ParamKind::Bias});
    out.push_back({p + "wv", &l.wv, ParamKind::Weight});
    out.push_back({p + "bv", &l.bv, ParamKind::Bias});
    out.push_back({p + "wo", &l.wo, ParamKind::Weight});
    out.push_back({p + "bo", &l.bo, ParamKind::Bias});
    out.push_back({p + "ln1_g", &l.ln1_g, ParamKind::Gain});
    out.push_back({p + "ln1_b", &l.ln1_b, ParamKind::Bias});
    out.push_back({p + "w1", &l.w1, ParamKind::Weight});
    out.push_back({p + "b1", &l.b1, ParamKind::Bias});
    out.push_back({p + "w2", &l.w2, ParamKind::Weight});
    out.push_back({p + "b2", &l.b2, ParamKind::Bias});
    out.push_back({p + "ln2_g", &l.ln2_g, ParamKind::Gain});
    out.push_back({p + "ln2_b", &l.ln2_b, ParamKind::Bias});
  }
  if (!state.config.tied_output) {
    out.push_back({"out_proj", &state.out_proj, ParamKind::Weight});
  }
  return out;
}

std::size_t param_count(const EncoderState& state) {
  std::size_t n = 0;
  for (const auto& p : named_params(const_cast<EncoderState&>(state))) {
    n += p.tensor->numel();
  }
  return n;
}

EncoderState init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  EncoderState st = make_encoder_state(config);
  Rng rng(mix_seed(seed, 0x656e636f646572ull));
  for (const auto& p : named_params(st)) {
    switch (p.kind) {
      case ParamKind::Weight:
        for (double& v : p.tensor->data) v = rng.normal(0.0, 0.02);
        break;
      case ParamKind::Gain:
        p.tensor->fill(1.0);
        break;
      case ParamKind::Bias:
        p.tensor->fill(0.0);
        break;
    }
  }
  return st;
}

EncoderGrads zero_grads_like(const EncoderState& state) {
  return make_encoder_state(state.config);
}

void zero_grads(EncoderGrads& grads) {
  for (const auto& p : named_params(grads)) p.tensor->fill(0.0);
}

TokenBatch make_batch(const std::vector<std::vector<int>>& rows) {
  TokenBatch b;
  b.batch = rows.size();
  b.seq = 0;
  for (const auto& r : rows) b.seq = std::max(b.seq, r.size());
  b.ids.assign(b.batch * b.seq, 0);  // PAD id
  b.lengths.resize(b.batch);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    b.lengths[r] = static_cast<int>(rows[r].size());
    for (std::size_t t = 0; t < rows[r].size(); ++t) {
      b.ids[r * b.seq + t] = rows[r][t];
    }
  }
  return b;
}

void encoder_forward(const EncoderState& state, const TokenBatch& batch,
                     EncoderActivations& acts, bool want_logits,
                     Rng* dropout_rng) {
  const EncoderConfig& cfg = state.config;
  const std::size_t B = batch.batch;
  const std::size_t T = batch.seq;
  const std::size_t D = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hs = D / H;
  const std::size_t F = static_cast<std::size_t>(cfg.d_ff);
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t BT = B * T;

  if (T > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw DataError("encoder: sequence length " + std::to_string(T) +
                    " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  for (std::size_t i = 0; i < batch.ids.size(); ++i) {
    if (batch.ids[i] < 0 || batch.ids[i] >= cfg.vocab_size) {
      throw DataError("encoder: token id out of range: " +
                      std::to_string(batch.ids[i]));
    }
  }

  const bool use_dropout = dropout_rng != nullptr && cfg.dropout_rate > 0.0;

  acts.batch = B;
  acts.seq = T;
  acts.x0.assign(BT * D, 0.0);
  acts.xhat0.assign(BT * D, 0.0);
  acts.rstd0.assign(BT, 0.0);
  acts.layers.resize(state.layers.size());

  // Token + position embeddings, then layer norm.
  std::vector<double> emb(BT * D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t bt = b * T + t;
      const double* te =
          &state.tok_emb.data[static_cast<std::size_t>(batch.ids[bt]) * D];
      const double* pe = &state.pos_emb.data[t * D];
      double* e = &emb[bt * D];
      for (std::size_t d = 0; d < D; ++d) e[d] = te[d] + pe[d];
    }
  }
  layernorm_forward(emb.data(), state.emb_ln_g.data.data(),
                    state.emb_ln_b.data.data(), acts.x0.data(),
                    acts.xhat0.data(), acts.rstd0.data(), BT, D);
  if (use_dropout) {
    sample_dropout_mask(acts.drop_emb, BT * D, cfg.dropout_rate, *dropout_rng);
    apply_mask(acts.x0.data(), acts.drop_emb, BT * D);
  } else {
    acts.drop_emb.clear();
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hs));
  const double* x = acts.x0.data();

  for (std::size_t li = 0; li < state.layers.size(); ++li) {
    const LayerParams& lp = state.layers[li];
    auto& la = acts.layers[li];
    la.q.assign(BT * D, 0.0);
    la.k.assign(BT * D, 0.0);
    la.v.assign(BT * D, 0.0);
    la.att.assign(B * H * T * T, 0.0);
    la.ctx.assign(BT * D, 0.0);
    la.ao.assign(BT * D, 0.0);
    la.xhat1.assign(BT * D, 0.0);
    la.h1.assign(BT * D, 0.0);
    la.rstd1.assign(BT, 0.0);
    la.f1.assign(BT * F, 0.0);
    la.g.assign(BT * F, 0.0);
    la.gelu_cdf.assign(BT * F, 0.0);
    la.gelu_pdf.assign(BT * F, 0.0);
    la.xhat2.assign(BT * D, 0.0);
    la.out.assign(BT * D, 0.0);
    la.rstd2.assign(BT, 0.0);

    linear_forward(x, lp.wq.data.data(), lp.bq.data.data(), la.q.data(), BT, D,
                   D);
    linear_forward(x, lp.wk.data.data(), lp.bk.data.data(), la.k.data(), BT, D,
                   D);
    linear_forward(x, lp.wv.data.data(), lp.bv.data.data(), la.v.data(), BT, D,
                   D);

    for (std::size_t bh = 0; bh < B * H; ++bh) {
      const std::size_t b = bh / H;
      const std::size_t h = bh % H;
      const std::size_t len = static_cast<std::size_t>(batch.lengths[b]);
      double* att_bh = &la.att[(b * H + h) * T * T];
      for (std::size_t i = 0; i < T; ++i) {
        const double* qi = &la.q[(b * T + i) * D + h * hs];
        double* arow = att_bh + i * T;
        double maxv = -1e300;
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = &la.k[(b * T + j) * D + h * hs];
          double s = 0.0;
          for (std::size_t d = 0; d < hs; ++d) s += qi[d] * kj[d];
          arow[j] = s * scale;
          if (arow[j] > maxv) maxv = arow[j];
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          arow[j] = std::exp(arow[j] - maxv);
          denom += arow[j];
        }
        const double inv = 1.0 / denom;
        for (std::size_t j = 0; j < len; ++j) arow[j] *= inv;
        // Pad keys keep exactly zero attention mass.
        double* ci = &la.ctx[(b * T + i) * D + h * hs];
        for (std::size_t j = 0; j < len; ++j) {
          const double a = arow[j];
          const double* vj = &la.v[(b * T + j) * D + h * hs];
          for (std::size_t d = 0; d < hs; ++d) ci[d] += a * vj[d];
        }
      }
    }

    linear_forward(la.ctx.data(), lp.wo.data.data(), lp.bo.data.data(),
                   la.ao.data(), BT, D, D);
    if (use_dropout) {
      sample_dropout_mask(la.drop_attn, BT * D, cfg.dropout_rate,
                          *dropout_rng);
      apply_mask(la.ao.data(), la.drop_attn, BT * D);
    }

    // Residual + LN1. Reuse ao as the residual sum input.
    for (std::size_t i = 0; i < BT * D; ++i) la.ao[i] += x[i];
    layernorm_forward(la.ao.data(), lp.ln1_g.data.data(),
                      lp.ln1_b.data.data(), la.h1.data(), la.xhat1.data(),
                      la.rstd1.data(), BT, D);

    linear_forward(la.h1.data(), lp.w1.data.data(), lp.b1.data.data(),
                   la.f1.data(), BT, D, F);
    gelu_forward(la.f1.data(), la.g.data(), la.gelu_cdf.data(),
                 la.gelu_pdf.data(), BT * F);

    std::vector<double> f2(BT * D, 0.0);
    linear_forward(la.g.data(), lp.w2.data.data(), lp.b2.data.data(),
                   f2.data(), BT, F, D);
    if (use_dropout) {
      sample_dropout_mask(la.drop_ffn, BT * D, cfg.dropout_rate, *dropout_rng);
      apply_mask(f2.data(), la.drop_ffn, BT * D);
    }
    for (std::size_t i = 0; i < BT * D; ++i) f2[i] += la.h1[i];
    layernorm_forward(f2.data(), lp.ln2_g.data.data(), lp.ln2_b.data.data(),
                      la.out.data(), la.xhat2.data(), la.rstd2.data(), BT, D);

    x = la.out.data();
  }

  acts.hidden.assign(x, x + BT * D);

  if (want_logits) {
    const Tensor& E = cfg.tied_output ? state.tok_emb : state.out_proj;
    acts.logits.assign(BT * V, 0.0);
    for (std::size_t bt = 0; bt < BT; ++bt) {
      const double* hrow = &acts.hidden[bt * D];
      double* lrow = &acts.logits[bt * V];
      for (std::size_t v = 0; v < V; ++v) {
        const double* ev = &E.data[v * D];
        double s = 0.0;
        for (std::size_t d = 0; d < D; ++d) s += hrow[d] * ev[d];
        lrow[v] = s;
      }
    }
  } else {
    acts.logits.clear();
  }
}

void encoder_backward(const EncoderState& state, const TokenBatch& batch,
                      const EncoderActivations& acts, const double* dlogits,
                      const double* dhidden, EncoderGrads& grads) {
  const EncoderConfig& cfg = state.config;
  const std::size_t B = acts.batch;
  const std::size_t T = acts.seq;
  const std::size_t D = static_cast<std::size_t>(cfg.d_model);
  const std::size_t H = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hs = D / H;
  const std::size_t F = static_cast<std::size_t>(cfg.d_ff);
  const std::size_t V = static_cast<std::size_t>(cfg.vocab_size);
  const std::size_t BT = B * T;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hs));

  std::vector<double> dcur(BT * D, 0.0);
  if (dhidden != nullptr) {
    for (std::size_t i = 0; i < BT * D; ++i) dcur[i] = dhidden[i];
  }

  if (dlogits != nullptr) {
    const Tensor& E = cfg.tied_output ? state.tok_emb : state.out_proj;
    Tensor& dE = cfg.tied_output ? grads.tok_emb : grads.out_proj;
    for (std::size_t bt = 0; bt < BT; ++bt) {
      const double* lrow = dlogits + bt * V;
      double* drow = &dcur[bt * D];
      for (std::size_t v = 0; v < V; ++v) {
        const double dl = lrow[v];
        if (dl == 0.0) continue;
        const double* ev = &E.data[v * D];
        for (std::size_t d = 0; d < D; ++d) drow[d] += dl * ev[d];
      }
    }
    for (std::size_t v = 0; v < V; ++v) {
      double* dev = &dE.data[v * D];
      for (std::size_t bt = 0; bt < BT; ++bt) {
        const double dl = dlogits[bt * V + v];
        if (dl == 0.0) continue;
        const double* hrow = &acts.hidden[bt * D];
        for (std::size_t d = 0; d < D; ++d) dev[d] += dl * hrow[d];
      }
    }
  }

  std::vector<double> dres(BT * D), dtmp(BT * D), dff(BT * F), dg(BT * F);

  for (std::size_t li = state.layers.size(); li-- > 0;) {
    const LayerParams& lp = state.layers[li];
    LayerParams& gl = grads.layers[li];
    const auto& la = acts.layers[li];
    const double* x_in =
        li == 0 ? acts.x0.data() : acts.layers[li - 1].out.data();

    // LN2 backward: dcur -> dres (gradient w.r.t. h1 + dropout(f2)).
    std::fill(dres.begin(), dres.end(), 0.0);
    layernorm_backward(dcur.data(), la.xhat2.data(), la.rstd2.data(),
                       lp.ln2_g.data.data(), dres.data(),
                       gl.ln2_g.data.data(), gl.ln2_b.data.data(), BT, D);

    // FFN branch.
    std::fill(dtmp.begin(), dtmp.end(), 0.0);
    const double* df2 = dres.data();
    std::vector<double> df2_masked;
    if (!la.drop_ffn.empty()) {
      df2_masked.assign(dres.begin(), dres.end());
      apply_mask(df2_masked.data(), la.drop_ffn, BT * D);
      df2 = df2_masked.data();
    }
    std::fill(dg.begin(), dg.end(), 0.0);
    linear_backward(la.g.data(), lp.w2.data.data(), df2, dg.data(),
                    gl.w2.data.data(), gl.b2.data.data(), BT, F, D);
    for (std::size_t i = 0; i < BT * F; ++i) {
      dff[i] = dg[i] * (la.gelu_cdf[i] + la.f1[i] * la.gelu_pdf[i]);
    }
    linear_backward(la.h1.data(), lp.w1.data.data(), dff.data(), dtmp.data(),
                    gl.w1.data.data(), gl.b1.data.data(), BT, D, F);
    // Residual into h1.
    for (std::size_t i = 0; i < BT * D; ++i) dtmp[i] += dres[i];

    // LN1 backward: dtmp -> dres (gradient w.r.t. x_in + dropout(ao)).
    std::fill(dres.begin(), dres.end(), 0.0);
    layernorm_backward(dtmp.data(), la.xhat1.data(), la.rstd1.data(),
                       lp.ln1_g.data.data(), dres.data(),
                       gl.ln1_g.data.data(), gl.ln1_b.data.data(), BT, D);

    // Attention branch.
    const double* dao = dres.data();
    std::vector<double> dao_masked;
    if (!la.drop_attn.empty()) {
      dao_masked.assign(dres.begin(), dres.end());
      apply_mask(dao_masked.data(), la.drop_attn, BT * D);
      dao = dao_masked.data();
    }
    std::vector<double> dctx(BT * D, 0.0);
    linear_backward(la.ctx.data(), lp.wo.data.data(), dao, dctx.data(),
                    gl.wo.data.data(), gl.bo.data.data(), BT, D, D);

    std::vector<double> dq(BT * D, 0.0), dk(BT * D, 0.0), dv(BT * D, 0.0);
    std::vector<double> datt_all(B * H * T * T), dsc_all(B * H * T * T);
    for (std::size_t bh = 0; bh < B * H; ++bh) {
      const std::size_t b = bh / H;
      const std::size_t h = bh % H;
      const std::size_t len = static_cast<std::size_t>(batch.lengths[b]);
      const double* att_bh = &la.att[(b * H + h) * T * T];
      std::span<double> datt(&datt_all[bh * T * T], T * T);
      std::span<double> dsc(&dsc_all[bh * T * T], T * T);
      for (std::size_t i = 0; i < T; ++i) {
        const double* dci = &dctx[(b * T + i) * D + h * hs];
        double* darow = &datt[i * T];
        for (std::size_t j = 0; j < len; ++j) {
          const double* vj = &la.v[(b * T + j) * D + h * hs];
          double s = 0.0;
          for (std::size_t d = 0; d < hs; ++d) s += dci[d] * vj[d];
          darow[j] = s;
          const double a = att_bh[i * T + j];
          if (a != 0.0) {
            double* dvj = &dv[(b * T + j) * D + h * hs];
            for (std::size_t d = 0; d < hs; ++d) dvj[d] += a * dci[d];
          }
        }
        // Softmax row backward.
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          dot += att_bh[i * T + j] * darow[j];
        }
        for (std::size_t j = 0; j < len; ++j) {
          dsc[i * T + j] = att_bh[i * T + j] * (darow[j] - dot);
        }
      }
      for (std::size_t i = 0; i < T; ++i) {
        double* dqi = &dq[(b * T + i) * D + h * hs];
        const double* qi = &la.q[(b * T + i) * D + h * hs];
        for (std::size_t j = 0; j < len; ++j) {
          const double ds = dsc[i * T + j] * scale;
          if (ds == 0.0) continue;
          const double* kj = &la.k[(b * T + j) * D + h * hs];
          double* dkj = &dk[(b * T + j) * D + h * hs];
          for (std::size_t d = 0; d < hs; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
          }
        }
      }
    }

    std::fill(dtmp.begin(), dtmp.end(), 0.0);
    linear_backward(x_in, lp.wq.data.data(), dq.data(), dtmp.data(),
                    gl.wq.data.data(), gl.bq.data.data(), BT, D, D);
    linear_backward(x_in, lp.wk.data.data(), dk.data(), dtmp.data(),
                    gl.wk.data.data(), gl.bk.data.data(), BT, D, D);
    linear_backward(x_in, lp.wv.data.data(), dv.data(), dtmp.data(),
                    gl.wv.data.data(), gl.bv.data.data(), BT, D, D);
    // Residual into x_in.
    for (std::size_t i = 0; i < BT * D; ++i) dtmp[i] += dres[i];
    dcur.swap(dtmp);
  }

  // Embedding dropout + layer norm + scatter.
  if (!acts.drop_emb.empty()) {
    apply_mask(dcur.data(), acts.drop_emb, BT * D);
  }
  std::fill(dres.begin(), dres.end(), 0.0);
  layernorm_backward(dcur.data(), acts.xhat0.data(), acts.rstd0.data(),
                     state.emb_ln_g.data.data(), dres.data(),
                     grads.emb_ln_g.data.data(), grads.emb_ln_b.data.data(),
                     BT, D);
  for (std::size_t b = 0; b < B; ++b) {
    const std::size_t len = static_cast<std::size_t>(batch.lengths[b]);
    for (std::size_t t = 0; t < len; ++t) {
      const std::size_t bt = b * T + t;
      const double* de = &dres[bt * D];
      double* dte =
          &grads.tok_emb.data[static_cast<std::size_t>(batch.ids[bt]) * D];
      double* dpe = &grads.pos_emb.data[t * D];
      for (std::size_t d = 0; d < D; ++d) {
        dte[d] += de[d];
        dpe[d] += de[d];
      }
    }
  }
}

EncodeResult encode(const EncoderState& state, const TokenBatch& batch,
                    bool want_logits) {
  EncoderActivations acts;
  encoder_forward(state, batch, acts, want_logits, nullptr);
  const std::size_t D = static_cast<std::size_t>(state.config.d_model);
  const std::size_t V = static_cast<std::size_t>(state.config.vocab_size);
  EncodeResult res;
  res.hidden = Tensor{{batch.batch, batch.seq, D}};
  res.hidden.data = acts.hidden;
  if (want_logits) {
    res.logits = Tensor{{batch.batch, batch.seq, V}};
    res.logits.data = acts.logits;
  }
  return res;
}

}  // namespace voxbuild
