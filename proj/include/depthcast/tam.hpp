#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace depthcast::tam {

using Matrix = Eigen::MatrixXd;

/// Sequence positions are rows: a FeatureSeq is k x d_model.
using FeatureSeq = Matrix;

struct TamConfig {
  int k = 4;              // context length
  int d_model = 32;
  int heads = 4;
  int layers = 2;
  int d_ff = 0;           // 0 selects 4 * d_model
  int feature_dim = 48;   // flattened per-frame input features
  std::uint64_t seed = 0;

  int ff_width() const { return d_ff > 0 ? d_ff : 4 * d_model; }
  int head_dim() const { return d_model / heads; }
  /// Throws std::invalid_argument unless every size is >= 1 (layers >= 0)
  /// and d_model is divisible by heads.
  void validate() const;
};

inline constexpr double kLayerNormEps = 1e-5;

// All tensors are stored as matrices; biases are 1 x n.
struct EmbedWeights {
  Matrix w;    // feature_dim x d_model
  Matrix b;    // 1 x d_model
  Matrix pos;  // k x d_model, learned positional embedding
};

struct AttentionWeights {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Matrix bq, bk, bv, bo;  // 1 x d_model
};

struct LayerNormWeights {
  Matrix gamma;  // 1 x d
  Matrix beta;   // 1 x d
};

struct FeedForwardWeights {
  Matrix w1;  // d_model x d_ff
  Matrix b1;  // 1 x d_ff
  Matrix w2;  // d_ff x d_model
  Matrix b2;  // 1 x d_model
};

struct EncoderLayerWeights {
  LayerNormWeights ln1;
  AttentionWeights attn;
  LayerNormWeights ln2;
  FeedForwardWeights ffn;
};

struct TamWeights {
  EmbedWeights embed;
  std::vector<EncoderLayerWeights> layers;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization from cfg.seed;
/// layer-norm gains start at 1 and offsets at 0.
TamWeights init_weights(const TamConfig& cfg);
/// Same shapes as `like`, all zeros.
TamWeights zeros_like(const TamWeights& like);

/// Visits every tensor with a stable dotted name ("embed.w",
/// "layer0.attn.wq", ...), in a fixed order.
void for_each_tensor(TamWeights& w, const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_tensor(const TamWeights& w, const std::function<void(const std::string&, const Matrix&)>& fn);

// ---- forward / backward kernels ------------------------------------------

/// x (k x F) -> x W + b + pos.
FeatureSeq embed_project(const Matrix& features, const EmbedWeights& w);
/// Returns d features; accumulates parameter gradients into `gw`.
Matrix embed_project_backward(const Matrix& features, const EmbedWeights& w, const FeatureSeq& grad_out,
                              EmbedWeights& gw);

FeatureSeq layer_norm(const FeatureSeq& x, const LayerNormWeights& w);
FeatureSeq layer_norm_backward(const FeatureSeq& x, const LayerNormWeights& w, const FeatureSeq& grad_out,
                               LayerNormWeights& gw);

struct AttentionCache {
  Matrix q, k, v;               // k x d_model projections
  std::vector<Matrix> weights;  // per head, k x k row-stochastic
  Matrix heads;                 // concatenated head outputs, k x d_model
};

/// Unmasked scaled dot-product self-attention with `num_heads` heads.
FeatureSeq multi_head_attention(const FeatureSeq& x, const AttentionWeights& w, int num_heads,
                                AttentionCache* cache = nullptr);
FeatureSeq multi_head_attention_backward(const FeatureSeq& x, const AttentionWeights& w, int num_heads,
                                         const FeatureSeq& grad_out, AttentionWeights& gw);

FeatureSeq feed_forward(const FeatureSeq& x, const FeedForwardWeights& w);
FeatureSeq feed_forward_backward(const FeatureSeq& x, const FeedForwardWeights& w, const FeatureSeq& grad_out,
                                 FeedForwardWeights& gw);

/// Pre-norm residual block: z = x + MHA(LN1(x)); y = z + FFN(LN2(z)).
FeatureSeq encoder_layer(const FeatureSeq& x, const EncoderLayerWeights& w, int num_heads);
FeatureSeq encoder_layer_backward(const FeatureSeq& x, const EncoderLayerWeights& w, int num_heads,
                                  const FeatureSeq& grad_out, EncoderLayerWeights& gw);

/// Embedding, cfg.layers encoder layers, then the last row (d_model vector).
Eigen::RowVectorXd tam_forward(const Matrix& features, const TamConfig& cfg, const TamWeights& w);
/// Accumulates into `gw` and returns d features.
Matrix tam_backward(const Matrix& features, const TamConfig& cfg, const TamWeights& w,
                    const Eigen::RowVectorXd& grad_out, TamWeights& gw);

}  // namespace depthcast::tam
