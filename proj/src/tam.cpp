#include "depthcast/tam.hpp"

#include <cmath>
#include <stdexcept>

#include "depthcast/rng.hpp"

namespace depthcast::tam {

namespace {

Matrix uniform(Rng& rng, int rows, int cols, double bound) {
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return m;
}

// Adds the bias row to every row of x.
Matrix add_bias(Matrix x, const Matrix& b) {
  x.rowwise() += b.row(0);
  return x;
}

Matrix col_sum(const Matrix& x) { return x.colwise().sum(); }

void check_cols(const Matrix& x, Eigen::Index cols, const char* what) {
  if (x.cols() != cols) throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

Matrix softmax_rows(const Matrix& s) {
  Matrix out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    double z = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      out(r, c) = std::exp(s(r, c) - mx);
      z += out(r, c);
    }
    out.row(r) /= z;
  }
  return out;
}

}  // namespace

void TamConfig::validate() const {
  if (k < 1 || d_model < 1 || heads < 1 || layers < 0 || feature_dim < 1 || ff_width() < 1) {
    throw std::invalid_argument("TAM sizes must be positive");
  }
  if (d_model % heads != 0) throw std::invalid_argument("d_model must be divisible by the number of heads");
}

TamWeights init_weights(const TamConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const int d = cfg.d_model;
  const int f = cfg.feature_dim;
  const int ff = cfg.ff_width();
  TamWeights w;
  const double be = 1.0 / std::sqrt(static_cast<double>(f));
  w.embed.w = uniform(rng, f, d, be);
  w.embed.b = uniform(rng, 1, d, be);
  w.embed.pos = uniform(rng, cfg.k, d, 1.0 / std::sqrt(static_cast<double>(d)));
  const double bd = 1.0 / std::sqrt(static_cast<double>(d));
  const double bf = 1.0 / std::sqrt(static_cast<double>(ff));
  for (int l = 0; l < cfg.layers; ++l) {
    EncoderLayerWeights L;
    L.ln1 = {Matrix::Ones(1, d), Matrix::Zero(1, d)};
    L.attn.wq = uniform(rng, d, d, bd);
    L.attn.wk = uniform(rng, d, d, bd);
    L.attn.wv = uniform(rng, d, d, bd);
    L.attn.wo = uniform(rng, d, d, bd);
    L.attn.bq = uniform(rng, 1, d, bd);
    L.attn.bk = uniform(rng, 1, d, bd);
    L.attn.bv = uniform(rng, 1, d, bd);
    L.attn.bo = uniform(rng, 1, d, bd);
    L.ln2 = {Matrix::Ones(1, d), Matrix::Zero(1, d)};
    L.ffn.w1 = uniform(rng, d, ff, bd);
    L.ffn.b1 = uniform(rng, 1, ff, bd);
    L.ffn.w2 = uniform(rng, ff, d, bf);
    L.ffn.b2 = uniform(rng, 1, d, bf);
    w.layers.push_back(std::move(L));
  }
  return w;
}

TamWeights zeros_like(const TamWeights& like) {
  TamWeights z = like;
  for_each_tensor(z, [](const std::string&, Matrix& m) { m.setZero(); });
  return z;
}

namespace {

template <typename W, typename Fn>
void visit(W& w, Fn&& fn) {
  fn("embed.w", w.embed.w);
  fn("embed.b", w.embed.b);
  fn("embed.pos", w.embed.pos);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(p + "ln1.gamma", L.ln1.gamma);
    fn(p + "ln1.beta", L.ln1.beta);
    fn(p + "attn.wq", L.attn.wq);
    fn(p + "attn.wk", L.attn.wk);
    fn(p + "attn.wv", L.attn.wv);
    fn(p + "attn.wo", L.attn.wo);
    fn(p + "attn.bq", L.attn.bq);
    fn(p + "attn.bk", L.attn.bk);
    fn(p + "attn.bv", L.attn.bv);
    fn(p + "attn.bo", L.attn.bo);
    fn(p + "ln2.gamma", L.ln2.gamma);
    fn(p + "ln2.beta", L.ln2.beta);
    fn(p + "ffn.w1", L.ffn.w1);
    fn(p + "ffn.b1", L.ffn.b1);
    fn(p + "ffn.w2", L.ffn.w2);
    fn(p + "ffn.b2", L.ffn.b2);
  }
}

}  // namespace

void for_each_tensor(TamWeights& w, const std::function<void(const std::string&, Matrix&)>& fn) { visit(w, fn); }

void for_each_tensor(const TamWeights& w, const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit(w, fn);
}

FeatureSeq embed_project(const Matrix& features, const EmbedWeights& w) {
  check_cols(features, w.w.rows(), "embed_project");
  if (features.rows() != w.pos.rows()) throw std::invalid_argument("embed_project: sequence length mismatch");
  return add_bias(features * w.w, w.b) + w.pos;
}

Matrix embed_project_backward(const Matrix& features, const EmbedWeights& w, const FeatureSeq& grad_out,
                              EmbedWeights& gw) {
  gw.w += features.transpose() * grad_out;
  gw.b += col_sum(grad_out);
  gw.pos += grad_out;
  return grad_out * w.w.transpose();
}

FeatureSeq layer_norm(const FeatureSeq& x, const LayerNormWeights& w) {
  check_cols(x, w.gamma.cols(), "layer_norm");
  FeatureSeq y(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mu).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (Eigen::Index c = 0; c < x.cols(); ++c) y(r, c) = w.gamma(0, c) * (x(r, c) - mu) * inv + w.beta(0, c);
  }
  return y;
}

FeatureSeq layer_norm_backward(const FeatureSeq& x, const LayerNormWeights& w, const FeatureSeq& grad_out,
                               LayerNormWeights& gw) {
  FeatureSeq dx(x.rows(), x.cols());
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).sum() / n;
    const double var = (x.row(r).array() - mu).square().sum() / n;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    const Eigen::RowVectorXd xhat = (x.row(r).array() - mu) * inv;
    gw.gamma.row(0).array() += grad_out.row(r).array() * xhat.array();
    gw.beta.row(0) += grad_out.row(r);
    const Eigen::RowVectorXd dxhat = grad_out.row(r).array() * w.gamma.row(0).array();
    const double mean_d = dxhat.sum() / n;
    const double mean_dx = dxhat.dot(xhat) / n;
    dx.row(r) = inv * (dxhat.array() - mean_d - xhat.array() * mean_dx);
  }
  return dx;
}

FeatureSeq multi_head_attention(const FeatureSeq& x, const AttentionWeights& w, int num_heads, AttentionCache* cache) {
  check_cols(x, w.wq.rows(), "multi_head_attention");
  const int d = static_cast<int>(w.wq.cols());
  if (num_heads < 1 || d % num_heads != 0) throw std::invalid_argument("multi_head_attention: bad head count");
  const int dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionCache local;
  AttentionCache& c = cache ? *cache : local;
  c.q = add_bias(x * w.wq, w.bq);
  c.k = add_bias(x * w.wk, w.bk);
  c.v = add_bias(x * w.wv, w.bv);
  c.heads.resize(x.rows(), d);
  c.weights.clear();
  for (int h = 0; h < num_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    Matrix a = softmax_rows(scale * qh * kh.transpose());
    c.heads.middleCols(h * dh, dh) = a * vh;
    c.weights.push_back(std::move(a));
  }
  return add_bias(c.heads * w.wo, w.bo);
}

FeatureSeq multi_head_attention_backward(const FeatureSeq& x, const AttentionWeights& w, int num_heads,
                                         const FeatureSeq& grad_out, AttentionWeights& gw) {
  AttentionCache c;
  multi_head_attention(x, w, num_heads, &c);
  const int d = static_cast<int>(w.wq.cols());
  const int dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  gw.wo += c.heads.transpose() * grad_out;
  gw.bo += col_sum(grad_out);
  const Matrix d_heads = grad_out * w.wo.transpose();

  Matrix dq(x.rows(), d), dk(x.rows(), d), dv(x.rows(), d);
  for (int h = 0; h < num_heads; ++h) {
    const Matrix& a = c.weights[h];
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const auto doh = d_heads.middleCols(h * dh, dh);
    const Matrix da = doh * vh.transpose();
    dv.middleCols(h * dh, dh) = a.transpose() * doh;
    // Softmax Jacobian-vector product, row by row.
    Matrix ds(a.rows(), a.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
      const double dot = a.row(r).dot(da.row(r));
      ds.row(r) = a.row(r).array() * (da.row(r).array() - dot);
    }
    dq.middleCols(h * dh, dh) = scale * ds * kh;
    dk.middleCols(h * dh, dh) = scale * ds.transpose() * qh;
  }
  gw.wq += x.transpose() * dq;
  gw.wk += x.transpose() * dk;
  gw.wv += x.transpose() * dv;
  gw.bq += col_sum(dq);
  gw.bk += col_sum(dk);
  gw.bv += col_sum(dv);
  return dq * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose();
}

FeatureSeq feed_forward(const FeatureSeq& x, const FeedForwardWeights& w) {
  check_cols(x, w.w1.rows(), "feed_forward");
  const Matrix hidden = add_bias(x * w.w1, w.b1).cwiseMax(0.0);
  return add_bias(hidden * w.w2, w.b2);
}

FeatureSeq feed_forward_backward(const FeatureSeq& x, const FeedForwardWeights& w, const FeatureSeq& grad_out,
                                 FeedForwardWeights& gw) {
  const Matrix pre = add_bias(x * w.w1, w.b1);
  const Matrix hidden = pre.cwiseMax(0.0);
  gw.w2 += hidden.transpose() * grad_out;
  gw.b2 += col_sum(grad_out);
  Matrix dh = grad_out * w.w2.transpose();
  dh = dh.array() * (pre.array() > 0.0).cast<double>();
  gw.w1 += x.transpose() * dh;
  gw.b1 += col_sum(dh);
  return dh * w.w1.transpose();
}

FeatureSeq encoder_layer(const FeatureSeq& x, const EncoderLayerWeights& w, int num_heads) {
  const FeatureSeq z = x + multi_head_attention(layer_norm(x, w.ln1), w.attn, num_heads);
  return z + feed_forward(layer_norm(z, w.ln2), w.ffn);
}

FeatureSeq encoder_layer_backward(const FeatureSeq& x, const EncoderLayerWeights& w, int num_heads,
                                  const FeatureSeq& grad_out, EncoderLayerWeights& gw) {
  const FeatureSeq n1 = layer_norm(x, w.ln1);
  const FeatureSeq z = x + multi_head_attention(n1, w.attn, num_heads);
  const FeatureSeq n2 = layer_norm(z, w.ln2);

  const FeatureSeq d_n2 = feed_forward_backward(n2, w.ffn, grad_out, gw.ffn);
  const FeatureSeq dz = grad_out + layer_norm_backward(z, w.ln2, d_n2, gw.ln2);
  const FeatureSeq d_n1 = multi_head_attention_backward(n1, w.attn, num_heads, dz, gw.attn);
  return dz + layer_norm_backward(x, w.ln1, d_n1, gw.ln1);
}

Eigen::RowVectorXd tam_forward(const Matrix& features, const TamConfig& cfg, const TamWeights& w) {
  if (features.rows() != cfg.k) throw std::invalid_argument("tam_forward: expected k feature rows");
  FeatureSeq x = embed_project(features, w.embed);
  for (const auto& L : w.layers) x = encoder_layer(x, L, cfg.heads);
  return x.row(cfg.k - 1);
}

Matrix tam_backward(const Matrix& features, const TamConfig& cfg, const TamWeights& w,
                    const Eigen::RowVectorXd& grad_out, TamWeights& gw) {
  std::vector<FeatureSeq> inputs;
  FeatureSeq x = embed_project(features, w.embed);
  for (const auto& L : w.layers) {
    inputs.push_back(x);
    x = encoder_layer(x, L, cfg.heads);
  }
  FeatureSeq g = FeatureSeq::Zero(x.rows(), x.cols());
  g.row(cfg.k - 1) = grad_out;
  for (std::size_t l = w.layers.size(); l-- > 0;) {
    g = encoder_layer_backward(inputs[l], w.layers[l], cfg.heads, g, gw.layers[l]);
  }
  return embed_project_backward(features, w.embed, g, gw.embed);
}

}  // namespace depthcast::tam
