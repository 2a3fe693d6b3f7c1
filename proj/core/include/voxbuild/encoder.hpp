#ifndef VOXBUILD_ENCODER_HPP_
#define VOXBUILD_ENCODER_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "voxbuild/tensor.hpp"

namespace voxbuild {

struct EncoderConfig {
  int n_layers = 2;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 128;
  int max_seq_len = 64;
  int vocab_size = 0;
  double dropout_rate = 0.0;
  bool tied_output = true;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // attention projections
  Tensor ln1_g, ln1_b;
  Tensor w1, b1, w2, b2;                  // feed-forward
  Tensor ln2_g, ln2_b;
};

// Bidirectional transformer encoder, post-layer-norm, learned positions.
// Output vocabulary projection is tied to the token embedding unless
// config.tied_output is false.
struct EncoderState {
  EncoderConfig config;
  Tensor tok_emb;    // [vocab, d_model]
  Tensor pos_emb;    // [max_seq_len, d_model]
  Tensor emb_ln_g, emb_ln_b;
  std::vector<LayerParams> layers;
  Tensor out_proj;   // [vocab, d_model], present only when untied
};

enum class ParamKind : std::uint8_t { Weight, Gain, Bias };

struct NamedParam {
  std::string name;
  Tensor* tensor;
  ParamKind kind;
};

// Fixed enumeration order; checkpoints, the optimizer, and gradient checks
// all rely on it.
std::vector<NamedParam> named_params(EncoderState& state);

std::size_t param_count(const EncoderState& state);

// Validates the config and allocates all parameter tensors (zero-filled).
EncoderState make_encoder_state(const EncoderConfig& config);

EncoderState init_encoder(const EncoderConfig& config, std::uint64_t seed);

// Encoder gradients share the EncoderState layout.
using EncoderGrads = EncoderState;

EncoderGrads zero_grads_like(const EncoderState& state);
void zero_grads(EncoderGrads& grads);

// Padded token-id batch. Row r occupies ids[r*seq .. r*seq+lengths[r]) and
// is PAD beyond its length.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> ids;
  std::vector<int> lengths;

  int id_at(std::size_t row, std::size_t t) const { return ids[row * seq + t]; }
  bool is_pad(std::size_t row, std::size_t t) const {
    return t >= static_cast<std::size_t>(lengths[row]);
  }
};

TokenBatch make_batch(const std::vector<std::vector<int>>& rows);

// Everything the backward pass needs, plus the outputs.
struct EncoderActivations {
  std::size_t batch = 0, seq = 0;
  struct LayerActs {
    std::vector<double> q, k, v;     // [B*T, D]
    std::vector<double> att;         // [B, H, T, T] softmax rows
    std::vector<double> ctx, ao;     // [B*T, D]
    std::vector<double> xhat1, h1;   // LN1 normalized input, LN1 output
    std::vector<double> rstd1;       // [B*T]
    std::vector<double> f1, g;       // FFN pre/post activation [B*T, F]
    std::vector<double> gelu_cdf, gelu_pdf;  // cached for the backward pass
    std::vector<double> xhat2, out;  // LN2
    std::vector<double> rstd2;
    std::vector<double> drop_attn, drop_ffn;  // kept-masks when dropout > 0
  };
  std::vector<double> xhat0, x0;  // embedding layer norm
  std::vector<double> rstd0;
  std::vector<double> drop_emb;
  std::vector<LayerActs> layers;
  std::vector<double> hidden;  // [B*T, D]
  std::vector<double> logits;  // [B*T, V] when requested
};

class Rng;

// Forward pass. `dropout_rng` enables dropout at config.dropout_rate when
// non-null (training); inference passes keep it null.
void encoder_forward(const EncoderState& state, const TokenBatch& batch,
                     EncoderActivations& acts, bool want_logits,
                     Rng* dropout_rng = nullptr);

// Accumulates parameter gradients. dlogits [B*T, V] and/or dhidden [B*T, D]
// may be null when that output is unused by the loss.
void encoder_backward(const EncoderState& state, const TokenBatch& batch,
                      const EncoderActivations& acts, const double* dlogits,
                      const double* dhidden, EncoderGrads& grads);

struct EncodeResult {
  Tensor hidden;  // [batch, seq, d_model]
  Tensor logits;  // [batch, seq, vocab] when requested
};

// Pure inference wrapper around encoder_forward.
EncodeResult encode(const EncoderState& state, const TokenBatch& batch,
                    bool want_logits = true);

}  // namespace voxbuild

#endif  // VOXBUILD_ENCODER_HPP_
