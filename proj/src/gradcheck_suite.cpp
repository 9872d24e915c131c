#include "depthcast/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>

#include "depthcast/image.hpp"
#include "depthcast/loss.hpp"
#include "depthcast/optimize.hpp"
#include "depthcast/rng.hpp"
#include "depthcast/synth.hpp"
#include "depthcast/tam.hpp"
#include "depthcast/warp.hpp"

namespace depthcast {

namespace {

using tam::Matrix;

struct Probe {
  ParamVector point;
  ParamVector analytic;
  std::function<double(const ParamVector&)> f;
};

ImageBuffer random_image(Rng& rng, int h, int w, int c) {
  ImageBuffer img(h, w, c);
  for (double& v : img.data()) v = rng.uniform(0.05, 0.95);
  return img;
}

ScalarMap random_map(Rng& rng, int h, int w, double lo, double hi) {
  ScalarMap m(h, w);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

std::vector<double> random_weights(Rng& rng, std::size_t n) {
  std::vector<double> g(n);
  for (double& v : g) v = rng.uniform(-1.0, 1.0);
  return g;
}

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// Small textured scene rendered into frames whose content is smooth.
struct SmallScene {
  std::vector<ImageBuffer> context;
  ImageBuffer target;
  Intrinsics K;
};

SmallScene small_scene(Rng& rng, int h, int w) {
  synth::Scene scene;
  synth::Primitive wall;
  wall.plane.origin = Vec3(0.0, 0.0, 4.0);
  wall.texture.components = {{0.35, 0.1, 0.2, rng.uniform(0.0, 6.0)}, {0.05, 0.4, 0.15, rng.uniform(0.0, 6.0)}};
  scene.primitives.push_back(wall);
  scene.far_depth = 20.0;
  SmallScene s;
  s.K = Intrinsics::make(0.9 * w, 0.9 * w, 0.5 * (w - 1), 0.5 * (h - 1));
  const Pose tar = pose_from_axis_angle(Vec3::Zero(), Vec3(0.0, 0.0, 0.0));
  s.target = synth::render(scene, tar, s.K, h, w).image;
  for (double dx : {-0.15, -0.08}) {
    const Pose p = pose_from_axis_angle(Vec3(0.0, 0.01, 0.0), Vec3(dx, 0.02, -0.1));
    s.context.push_back(synth::render(scene, p, s.K, h, w).image);
  }
  return s;
}

// Row-major matrix <-> segment copies.
void put(const Matrix& m, std::span<double> dst) {
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) dst[i++] = m(r, c);
}

Matrix get(std::span<const double> src, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = src[i++];
  return m;
}

double contract(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

// A TAM probe over a named list of matrices (inputs first, then weights).
struct TensorSet {
  std::vector<std::pair<std::string, Matrix*>> items;

  ParamVector layout() const {
    ParamVector p;
    for (const auto& [name, m] : items) p.add(name, {static_cast<int>(m->rows()), static_cast<int>(m->cols())});
    return p;
  }
  void store(ParamVector& p) const {
    for (const auto& [name, m] : items) put(*m, p.segment(name));
  }
  void load(const ParamVector& p) {
    for (auto& [name, m] : items) *m = get(p.segment(name), m->rows(), m->cols());
  }
};

void add_attention(TensorSet& s, const std::string& prefix, tam::AttentionWeights& w) {
  for (auto [n, m] : {std::pair{"wq", &w.wq}, {"wk", &w.wk}, {"wv", &w.wv}, {"wo", &w.wo}, {"bq", &w.bq},
                      {"bk", &w.bk}, {"bv", &w.bv}, {"bo", &w.bo}}) {
    s.items.emplace_back(prefix + n, m);
  }
}
void add_ln(TensorSet& s, const std::string& prefix, tam::LayerNormWeights& w) {
  s.items.emplace_back(prefix + "gamma", &w.gamma);
  s.items.emplace_back(prefix + "beta", &w.beta);
}
void add_ffn(TensorSet& s, const std::string& prefix, tam::FeedForwardWeights& w) {
  for (auto [n, m] : {std::pair{"w1", &w.w1}, {"b1", &w.b1}, {"w2", &w.w2}, {"b2", &w.b2}}) {
    s.items.emplace_back(prefix + n, m);
  }
}
void add_layer(TensorSet& s, const std::string& prefix, tam::EncoderLayerWeights& w) {
  add_ln(s, prefix + "ln1.", w.ln1);
  add_attention(s, prefix + "attn.", w.attn);
  add_ln(s, prefix + "ln2.", w.ln2);
  add_ffn(s, prefix + "ffn.", w.ffn);
}

// Builds a probe from a TensorSet: `forward` reads the (reloaded) tensors and
// returns the scalar; `backward` fills gradient tensors laid out by `grads`.
Probe tensor_probe(std::shared_ptr<TensorSet> vars, const std::function<double()>& forward,
                   const std::function<void(TensorSet& grads)>& backward, std::shared_ptr<TensorSet> grads) {
  Probe p;
  p.point = vars->layout();
  vars->store(p.point);
  backward(*grads);
  p.analytic = p.point.zeros_like();
  grads->store(p.analytic);
  p.f = [vars, forward](const ParamVector& x) {
    vars->load(x);
    return forward();
  };
  return p;
}

tam::TamConfig small_tam(std::uint64_t seed) {
  tam::TamConfig c;
  c.k = 4;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 2;
  c.d_ff = 12;
  c.feature_dim = 5;
  c.seed = seed;
  return c;
}

Matrix perturbed(Rng& rng, const Matrix& m) {
  return m + random_matrix(rng, m.rows(), m.cols(), 0.3);
}

// ---- kernels ---------------------------------------------------------------

Probe bilinear_probe(Rng& rng) {
  auto img = std::make_shared<ImageBuffer>(random_image(rng, 6, 7, 3));
  const auto wts = random_weights(rng, 3);
  // Keep away from integer coordinates, where the sampler has kinks.
  const double u = std::floor(rng.uniform(0.0, 5.0)) + rng.uniform(0.2, 0.8);
  const double v = std::floor(rng.uniform(0.0, 4.0)) + rng.uniform(0.2, 0.8);
  Probe p;
  p.point.add("uv", {2});
  p.point.values()[0] = u;
  p.point.values()[1] = v;
  const SampleResult s = bilinear_sample(*img, Pixel{u, v});
  p.analytic = p.point.zeros_like();
  for (int ch = 0; ch < 3; ++ch) {
    p.analytic.values()[0] += wts[ch] * s.d_value_d_uv[ch][0];
    p.analytic.values()[1] += wts[ch] * s.d_value_d_uv[ch][1];
  }
  p.f = [img, wts](const ParamVector& x) {
    const SampleResult r = bilinear_sample(*img, Pixel{x.values()[0], x.values()[1]});
    double acc = 0.0;
    for (int ch = 0; ch < 3; ++ch) acc += wts[ch] * r.value[ch];
    return acc;
  };
  return p;
}

struct WarpInstance {
  ImageBuffer source;
  ScalarMap depth;
  PoseParams pose{};
  Intrinsics K;
  std::vector<double> weights;
};

WarpInstance warp_instance(Rng& rng) {
  const int h = 8, w = 9;
  WarpInstance wi{random_image(rng, h, w, 3), random_map(rng, h, w, 2.0, 6.0), {}, {}, {}};
  wi.K = Intrinsics::make(8.0, 8.5, 4.0, 3.5);
  wi.pose = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
             rng.uniform(-0.3, 0.3),   rng.uniform(-0.3, 0.3),   rng.uniform(-0.3, 0.3)};
  wi.weights = random_weights(rng, static_cast<std::size_t>(h) * w * 3);
  return wi;
}

ParamVector warp_point(const WarpInstance& wi) {
  ParamVector p;
  auto d = p.add("depth", {wi.depth.height(), wi.depth.width()});
  std::copy(wi.depth.data().begin(), wi.depth.data().end(), d.begin());
  auto q = p.add("pose", {6});
  std::copy(wi.pose.begin(), wi.pose.end(), q.begin());
  return p;
}

std::function<double(const ParamVector&)> warp_objective(std::shared_ptr<WarpInstance> wi) {
  return [wi](const ParamVector& x) {
    const auto d = x.segment("depth");
    const ScalarMap depth(wi->depth.height(), wi->depth.width(), std::vector<double>(d.begin(), d.end()));
    PoseParams pp{};
    std::copy(x.segment("pose").begin(), x.segment("pose").end(), pp.begin());
    const WarpResult r = reverse_warp(wi->source, depth, pose_from_params(pp), wi->K);
    double acc = 0.0;
    for (std::size_t i = 0; i < wi->weights.size(); ++i) acc += wi->weights[i] * r.image.data()[i];
    return acc;
  };
}

Probe warp_jacobian_probe(Rng& rng) {
  auto wi = std::make_shared<WarpInstance>(warp_instance(rng));
  Probe p;
  p.point = warp_point(*wi);
  p.analytic = p.point.zeros_like();
  const WarpJacobians J = warp_jacobians(wi->source, wi->depth, wi->pose, wi->K);
  auto gd = p.analytic.segment("depth");
  auto gp = p.analytic.segment("pose");
  const int h = J.height, w = J.width, nc = J.channels;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int ch = 0; ch < nc; ++ch) {
        const double g = wi->weights[(static_cast<std::size_t>(r) * w + c) * nc + ch];
        gd[static_cast<std::size_t>(r) * w + c] += g * J.depth_at(r, c, ch);
        for (int k = 0; k < 6; ++k) gp[k] += g * J.pose_at(r, c, ch, k);
      }
    }
  }
  p.f = warp_objective(wi);
  return p;
}

Probe warp_backward_probe(Rng& rng) {
  auto wi = std::make_shared<WarpInstance>(warp_instance(rng));
  Probe p;
  p.point = warp_point(*wi);
  p.analytic = p.point.zeros_like();
  const WarpGradients g = warp_backward(wi->source, wi->depth, wi->pose, wi->K, wi->weights);
  std::copy(g.d_depth.data().begin(), g.d_depth.data().end(), p.analytic.segment("depth").begin());
  std::copy(g.d_pose.begin(), g.d_pose.end(), p.analytic.segment("pose").begin());
  p.f = warp_objective(wi);
  return p;
}

Probe photometric_probe(Rng& rng) {
  const int h = 6, w = 7;
  auto target = std::make_shared<ImageBuffer>(random_image(rng, h, w, 3));
  const ImageBuffer recon = random_image(rng, h, w, 3);
  auto weights = std::make_shared<ScalarMap>(random_map(rng, h, w, -1.0, 1.0));
  LossConfig cfg;
  Probe p;
  auto seg = p.point.add("recon", {h, w, 3});
  std::copy(recon.data().begin(), recon.data().end(), seg.begin());
  const WarpResult wr{recon, ScalarMap(h, w, 1.0), ScalarMap(h, w), ScalarMap(h, w)};
  const auto g = photometric_backward(*target, wr, cfg, *weights);
  p.analytic = p.point.zeros_like();
  std::copy(g.begin(), g.end(), p.analytic.values().begin());
  p.f = [target, weights, cfg, h, w](const ParamVector& x) {
    // The checker's +-step may leave [0, 1]; the loss itself does not care.
    WarpResult r{ImageBuffer(h, w, 3), ScalarMap(h, w, 1.0), ScalarMap(h, w), ScalarMap(h, w)};
    std::copy(x.values().begin(), x.values().end(), r.image.data().begin());
    const ScalarMap pe = photometric(*target, r, cfg);
    double acc = 0.0;
    for (std::size_t i = 0; i < pe.size(); ++i) acc += weights->data()[i] * pe.data()[i];
    return acc;
  };
  return p;
}

Probe smoothness_probe(Rng& rng) {
  const int h = 7, w = 8;
  auto img = std::make_shared<ImageBuffer>(random_image(rng, h, w, 3));
  const ScalarMap disp = random_map(rng, h, w, 0.2, 0.8);
  Probe p;
  auto seg = p.point.add("disparity", {h, w});
  std::copy(disp.data().begin(), disp.data().end(), seg.begin());
  const ScalarMap g = smoothness_backward(disp, *img, 1.0);
  p.analytic = p.point.zeros_like();
  std::copy(g.data().begin(), g.data().end(), p.analytic.values().begin());
  p.f = [img, h, w](const ParamVector& x) {
    return smoothness(ScalarMap(h, w, std::vector<double>(x.values().begin(), x.values().end())), *img);
  };
  return p;
}

Probe tam_embed_probe(Rng& rng) {
  const auto cfg = small_tam(rng.index(1u << 30));
  const auto init = tam::init_weights(cfg);
  auto w = std::make_shared<tam::EmbedWeights>(init.embed);
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.feature_dim));
  const Matrix G = random_matrix(rng, cfg.k, cfg.d_model);
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}, {"w", &w->w}, {"b", &w->b}, {"pos", &w->pos}};
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::EmbedWeights>(tam::EmbedWeights{Matrix::Zero(w->w.rows(), w->w.cols()),
                                                                   Matrix::Zero(1, w->b.cols()),
                                                                   Matrix::Zero(w->pos.rows(), w->pos.cols())});
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}, {"w", &gw->w}, {"b", &gw->b}, {"pos", &gw->pos}};
  return tensor_probe(
      vars, [x, w, G] { return contract(tam::embed_project(*x, *w), G); },
      [x, w, G, gx, gw](TensorSet&) { *gx = tam::embed_project_backward(*x, *w, G, *gw); }, grads);
}

Probe tam_layer_norm_probe(Rng& rng) {
  const auto cfg = small_tam(0);
  auto w = std::make_shared<tam::LayerNormWeights>(
      tam::LayerNormWeights{perturbed(rng, Matrix::Ones(1, cfg.d_model)), random_matrix(rng, 1, cfg.d_model, 0.3)});
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.d_model));
  const Matrix G = random_matrix(rng, cfg.k, cfg.d_model);
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}, {"gamma", &w->gamma}, {"beta", &w->beta}};
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::LayerNormWeights>(
      tam::LayerNormWeights{Matrix::Zero(1, cfg.d_model), Matrix::Zero(1, cfg.d_model)});
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}, {"gamma", &gw->gamma}, {"beta", &gw->beta}};
  return tensor_probe(
      vars, [x, w, G] { return contract(tam::layer_norm(*x, *w), G); },
      [x, w, G, gx, gw](TensorSet&) { *gx = tam::layer_norm_backward(*x, *w, G, *gw); }, grads);
}

Probe tam_attention_probe(Rng& rng) {
  const auto cfg = small_tam(rng.index(1u << 30));
  auto w = std::make_shared<tam::AttentionWeights>(tam::init_weights(cfg).layers.front().attn);
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.d_model));
  const Matrix G = random_matrix(rng, cfg.k, cfg.d_model);
  const int heads = cfg.heads;
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}};
  add_attention(*vars, "", *w);
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::AttentionWeights>(tam::zeros_like(tam::init_weights(cfg)).layers.front().attn);
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}};
  add_attention(*grads, "", *gw);
  return tensor_probe(
      vars, [x, w, G, heads] { return contract(tam::multi_head_attention(*x, *w, heads), G); },
      [x, w, G, gx, gw, heads](TensorSet&) { *gx = tam::multi_head_attention_backward(*x, *w, heads, G, *gw); },
      grads);
}

Probe tam_feed_forward_probe(Rng& rng) {
  const auto cfg = small_tam(rng.index(1u << 30));
  auto w = std::make_shared<tam::FeedForwardWeights>(tam::init_weights(cfg).layers.front().ffn);
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.d_model));
  const Matrix G = random_matrix(rng, cfg.k, cfg.d_model);
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}};
  add_ffn(*vars, "", *w);
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::FeedForwardWeights>(tam::zeros_like(tam::init_weights(cfg)).layers.front().ffn);
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}};
  add_ffn(*grads, "", *gw);
  return tensor_probe(
      vars, [x, w, G] { return contract(tam::feed_forward(*x, *w), G); },
      [x, w, G, gx, gw](TensorSet&) { *gx = tam::feed_forward_backward(*x, *w, G, *gw); }, grads);
}

Probe tam_encoder_layer_probe(Rng& rng) {
  const auto cfg = small_tam(rng.index(1u << 30));
  auto w = std::make_shared<tam::EncoderLayerWeights>(tam::init_weights(cfg).layers.front());
  w->ln1.gamma = perturbed(rng, w->ln1.gamma);
  w->ln2.beta = perturbed(rng, w->ln2.beta);
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.d_model));
  const Matrix G = random_matrix(rng, cfg.k, cfg.d_model);
  const int heads = cfg.heads;
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}};
  add_layer(*vars, "", *w);
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::EncoderLayerWeights>(tam::zeros_like(tam::init_weights(cfg)).layers.front());
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}};
  add_layer(*grads, "", *gw);
  return tensor_probe(
      vars, [x, w, G, heads] { return contract(tam::encoder_layer(*x, *w, heads), G); },
      [x, w, G, gx, gw, heads](TensorSet&) { *gx = tam::encoder_layer_backward(*x, *w, heads, G, *gw); }, grads);
}

Probe tam_forward_probe(Rng& rng) {
  const auto cfg = small_tam(rng.index(1u << 30));
  auto w = std::make_shared<tam::TamWeights>(tam::init_weights(cfg));
  auto x = std::make_shared<Matrix>(random_matrix(rng, cfg.k, cfg.feature_dim));
  const Eigen::RowVectorXd G = random_matrix(rng, 1, cfg.d_model);
  auto vars = std::make_shared<TensorSet>();
  vars->items = {{"x", x.get()}};
  tam::for_each_tensor(*w, [&](const std::string& n, Matrix& m) { vars->items.emplace_back(n, &m); });
  auto gx = std::make_shared<Matrix>(x->rows(), x->cols());
  auto gw = std::make_shared<tam::TamWeights>(tam::zeros_like(*w));
  auto grads = std::make_shared<TensorSet>();
  grads->items = {{"x", gx.get()}};
  tam::for_each_tensor(*gw, [&](const std::string& n, Matrix& m) { grads->items.emplace_back(n, &m); });
  return tensor_probe(
      vars, [x, w, G, cfg] { return tam::tam_forward(*x, cfg, *w).dot(G); },
      [x, w, G, gx, gw, cfg](TensorSet&) { *gx = tam::tam_backward(*x, cfg, *w, G, *gw); }, grads);
}

Probe total_loss_probe(Rng& rng) {
  const int h = 8, w = 8;
  auto sc = std::make_shared<SmallScene>(small_scene(rng, h, w));
  auto cfg = std::make_shared<LossConfig>();
  cfg->scales = 3;
  std::vector<ScalarMap> disp;
  std::vector<PoseParams> poses;
  for (int s = 0; s < cfg->scales; ++s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    disp.push_back(random_map(rng, hs, ws, 0.3, 0.6));
  }
  for (std::size_t i = 0; i < sc->context.size(); ++i) {
    PoseParams q{};
    for (double& v : q) v = rng.uniform(-0.02, 0.02);
    poses.push_back(q);
  }
  Probe p;
  for (int s = 0; s < cfg->scales; ++s) {
    const auto [hs, ws] = scale_shape(h, w, s);
    auto seg = p.point.add("disparity_" + std::to_string(s), {hs, ws});
    std::copy(disp[s].data().begin(), disp[s].data().end(), seg.begin());
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    auto seg = p.point.add("pose_" + std::to_string(i), {6});
    std::copy(poses[i].begin(), poses[i].end(), seg.begin());
  }
  LossGradients lg;
  total_loss(sc->context, sc->target, disp, poses, sc->K, *cfg, &lg);
  p.analytic = p.point.zeros_like();
  for (int s = 0; s < cfg->scales; ++s) {
    std::copy(lg.d_disparity[s].data().begin(), lg.d_disparity[s].data().end(),
              p.analytic.segment("disparity_" + std::to_string(s)).begin());
  }
  for (std::size_t i = 0; i < poses.size(); ++i) {
    std::copy(lg.d_pose[i].begin(), lg.d_pose[i].end(), p.analytic.segment("pose_" + std::to_string(i)).begin());
  }
  p.f = [sc, cfg, h, w](const ParamVector& x) {
    std::vector<ScalarMap> d;
    for (int s = 0; s < cfg->scales; ++s) {
      const auto [hs, ws] = scale_shape(h, w, s);
      const auto seg = x.segment("disparity_" + std::to_string(s));
      d.emplace_back(hs, ws, std::vector<double>(seg.begin(), seg.end()));
    }
    std::vector<PoseParams> q(sc->context.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
      const auto seg = x.segment("pose_" + std::to_string(i));
      std::copy(seg.begin(), seg.end(), q[i].begin());
    }
    return total_loss(sc->context, sc->target, d, q, sc->K, *cfg).total;
  };
  return p;
}

Probe depth_pose_probe(Rng& rng) {
  const int h = 8, w = 8;
  auto sc = std::make_shared<SmallScene>(small_scene(rng, h, w));
  auto cfg = std::make_shared<OptimizeConfig>();
  cfg->loss.scales = 3;
  Probe p;
  p.point = make_depth_pose_params(h, w, cfg->loss.scales, sc->context.size());
  for (double& v : p.point.values()) v = rng.uniform(-0.3, 0.3);
  for (std::size_t i = 0; i < sc->context.size(); ++i) {
    for (double& v : p.point.segment("pose_" + std::to_string(i))) v = rng.uniform(-0.02, 0.02);
  }
  depth_pose_objective(sc->context, sc->target, sc->K, *cfg, p.point, &p.analytic);
  p.f = [sc, cfg](const ParamVector& x) {
    return depth_pose_objective(sc->context, sc->target, sc->K, *cfg, x, nullptr).total;
  };
  return p;
}

using Factory = Probe (*)(Rng&);

// Several kernels are only piecewise smooth (bilinear cells and the image
// border, ReLU, |.|, the auto-mask comparison). An instance is accepted only
// if central differences at step h and 2h agree everywhere, i.e. no probe
// straddles a kink. The screen never looks at the analytic gradient.
constexpr int kMaxRedraws = 100;

bool smooth_at(const Probe& p, const GradCheckOptions& opts) {
  ParamVector numeric = p.point.zeros_like();
  ParamVector x = p.point;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x.values()[i];
    x.values()[i] = x0 + 2.0 * opts.step;
    const double fp = p.f(x);
    x.values()[i] = x0 - 2.0 * opts.step;
    const double fm = p.f(x);
    x.values()[i] = x0;
    numeric.values()[i] = (fp - fm) / (4.0 * opts.step);
  }
  return finite_diff_check(p.f, numeric, p.point, opts).passed;
}

const std::vector<std::pair<std::string, Factory>>& registry() {
  static const std::vector<std::pair<std::string, Factory>> r = {
      {"bilinear_sample", bilinear_probe},
      {"warp_jacobians", warp_jacobian_probe},
      {"warp_backward", warp_backward_probe},
      {"photometric", photometric_probe},
      {"smoothness", smoothness_probe},
      {"tam.embed_project", tam_embed_probe},
      {"tam.layer_norm", tam_layer_norm_probe},
      {"tam.multi_head_attention", tam_attention_probe},
      {"tam.feed_forward", tam_feed_forward_probe},
      {"tam.encoder_layer", tam_encoder_layer_probe},
      {"tam.forward", tam_forward_probe},
      {"total_loss", total_loss_probe},
      {"depth_pose_objective", depth_pose_probe},
  };
  return r;
}

}  // namespace

const std::vector<std::string>& gradcheck_kernel_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& [name, f] : registry()) n.push_back(name);
    return n;
  }();
  return names;
}

GradCheckSuiteReport run_gradcheck_suite(const GradCheckSuiteConfig& cfg) {
  const auto& names = gradcheck_kernel_names();
  const auto known = [&](const std::string& n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  if (!cfg.planted_bug.empty() && !known(cfg.planted_bug)) {
    throw std::invalid_argument("unknown kernel for planted bug: " + cfg.planted_bug);
  }
  for (const auto& n : cfg.only) {
    if (!known(n)) throw std::invalid_argument("unknown gradcheck kernel: " + n);
  }

  GradCheckSuiteReport rep;
  std::uint64_t index = 0;
  for (const auto& [name, factory] : registry()) {
    // Each kernel draws from its own stream so selecting a subset does not
    // change the instances.
    Rng rng(cfg.seed * 1000003ULL + index++);
    if (!cfg.only.empty() && std::find(cfg.only.begin(), cfg.only.end(), name) == cfg.only.end()) continue;
    Probe p = factory(rng);
    int redraws = 0;
    while (!smooth_at(p, cfg.options)) {
      if (++redraws > kMaxRedraws) throw std::runtime_error("gradcheck: no smooth instance found for " + name);
      p = factory(rng);
    }
    if (name == cfg.planted_bug) {
      for (double& v : p.analytic.values()) v *= 2.0;
    }
    KernelCheck kc{name, finite_diff_check(p.f, p.analytic, p.point, cfg.options), redraws};
    rep.passed = rep.passed && kc.report.passed;
    rep.kernels.push_back(std::move(kc));
  }
  return rep;
}

nlohmann::json to_json(const GradCheckSuiteReport& r) {
  nlohmann::json ks = nlohmann::json::array();
  for (const auto& k : r.kernels) {
    ks.push_back({{"kernel", k.kernel},
                  {"passed", k.report.passed},
                  {"max_rel_error", k.report.max_rel_error},
                  {"worst", k.report.worst},
                  {"checked", k.report.checked},
                  {"failing", k.report.failing},
                  {"redraws", k.redraws}});
  }
  return {{"passed", r.passed}, {"kernels", ks}};
}

}  // namespace depthcast
