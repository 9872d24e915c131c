#include "depthcast/tam_train.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "depthcast/params.hpp"
#include "depthcast/rng.hpp"

namespace depthcast::tam {

namespace {

Eigen::RowVectorXd step_params(const Pose& step) {
  const PoseParams p = params_from_pose(step);
  Eigen::RowVectorXd v(6);
  for (int i = 0; i < 6; ++i) v(i) = p[static_cast<std::size_t>(i)];
  return v;
}

Eigen::RowVectorXd pooled(const ImageBuffer& img, int rows, int cols) {
  const ScalarMap gray = img.channel_mean();
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(rows * cols);
  const int ch = img.height() / rows, cw = img.width() / cols;
  for (int gr = 0; gr < rows; ++gr) {
    for (int gc = 0; gc < cols; ++gc) {
      double s = 0.0;
      for (int r = gr * ch; r < (gr + 1) * ch; ++r)
        for (int c = gc * cw; c < (gc + 1) * cw; ++c) s += gray(r, c);
      f(gr * cols + gc) = s / (ch * cw);
    }
  }
  return f;
}

ToySample make_sample(const synth::Scene& scene, const ToyDataConfig& cfg, const Intrinsics& K, Rng& rng) {
  synth::TrajectorySpec spec;
  spec.kind = cfg.yaw_rate_range > 0.0 ? synth::TrajectorySpec::Kind::ConstantTurn
                                       : synth::TrajectorySpec::Kind::ConstantVelocity;
  spec.length = cfg.k + 1;
  for (int i = 0; i < 3; ++i) spec.start[3 + i] = rng.uniform(-cfg.start_range(i), cfg.start_range(i));
  for (int i = 0; i < 3; ++i) spec.velocity(i) = rng.uniform(-cfg.velocity_range(i), cfg.velocity_range(i));
  spec.yaw_rate = cfg.yaw_rate_range > 0.0 ? rng.uniform(-cfg.yaw_rate_range, cfg.yaw_rate_range) : 0.0;
  const synth::Trajectory traj = synth::make_trajectory(spec);

  ToySample s;
  s.features.resize(cfg.k, cfg.feature_dim());
  for (int i = 0; i < cfg.k; ++i) {
    const auto rr = synth::render(scene, traj.cam_to_world[static_cast<std::size_t>(i)], K, cfg.height, cfg.width);
    s.features.row(i) = pooled(rr.image, cfg.grid_rows, cfg.grid_cols);
  }
  // Motion from the last observed frame to the forecast frame, expressed as
  // the camera-to-camera step (points of the new camera into the old one).
  s.target = step_params(synth::relative_pose(traj.cam_to_world[static_cast<std::size_t>(cfg.k) - 1],
                                              traj.cam_to_world[static_cast<std::size_t>(cfg.k)]));
  return s;
}

// Packs every trainable tensor into one flat vector and back.
ParamVector layout(const TrainResult& m) {
  ParamVector p;
  for_each_tensor(m.weights, [&](const std::string& name, const Matrix& t) {
    p.add("tam." + name, {static_cast<int>(t.rows()), static_cast<int>(t.cols())});
  });
  p.add("head.w", {static_cast<int>(m.head_w.rows()), static_cast<int>(m.head_w.cols())});
  p.add("head.b", {1, static_cast<int>(m.head_b.cols())});
  return p;
}

void copy_in(const Matrix& m, std::span<double> dst) {
  // Row-major flattening.
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) dst[i++] = m(r, c);
}

void copy_out(std::span<const double> src, Matrix& m) {
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = src[i++];
}

void pack(const TamWeights& w, const Matrix& hw, const Matrix& hb, ParamVector& p) {
  for_each_tensor(w, [&](const std::string& name, const Matrix& t) { copy_in(t, p.segment("tam." + name)); });
  copy_in(hw, p.segment("head.w"));
  copy_in(hb, p.segment("head.b"));
}

void unpack(const ParamVector& p, TamWeights& w, Matrix& hw, Matrix& hb) {
  for_each_tensor(w, [&](const std::string& name, Matrix& t) { copy_out(p.segment("tam." + name), t); });
  copy_out(p.segment("head.w"), hw);
  copy_out(p.segment("head.b"), hb);
}

Matrix normalized(const Matrix& f, const TrainResult& m) {
  Matrix x = f;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    x.row(r) = ((x.row(r) - m.feature_mean).array() / m.feature_scale.array()).matrix();
  }
  return x;
}

Eigen::RowVectorXd predict_normalized(const TrainResult& m, const TamConfig& cfg, const Matrix& x) {
  return tam_forward(x, cfg, m.weights) * m.head_w + m.head_b;
}

}  // namespace

void ToyDataConfig::validate() const {
  if (train_sequences < 1 || test_sequences < 1 || k < 1) throw std::invalid_argument("toy data: sizes must be positive");
  if (grid_rows < 1 || grid_cols < 1 || height % grid_rows != 0 || width % grid_cols != 0) {
    throw std::invalid_argument("toy data: the pooling grid must divide the frame size");
  }
}

void TrainConfig::validate() const {
  tam.validate();
  if (epochs < 0 || batch_size < 1) throw std::invalid_argument("training: epochs >= 0 and batch_size >= 1 required");
}

synth::Scene toy_scene() {
  synth::Scene scene;
  synth::Primitive wall;
  wall.name = "wall";
  wall.plane.origin = Vec3(0.0, 0.0, 12.0);
  wall.texture.base = 0.5;
  wall.texture.channel_phase = 0.0;
  wall.texture.components = {{0.02, 0.0, 0.25, 0.0}, {0.0, 0.03, 0.15, 0.0}, {0.06, 0.05, 0.05, 1.0}};
  scene.primitives.push_back(wall);
  scene.far_depth = 40.0;
  return scene;
}

ToyDataset make_toy_dataset(const synth::Scene& scene, const ToyDataConfig& cfg) {
  cfg.validate();
  const Intrinsics K = Intrinsics::make(0.5 * cfg.width, 0.5 * cfg.width, 0.5 * (cfg.width - 1), 0.5 * (cfg.height - 1));
  Rng rng(cfg.seed);
  ToyDataset data;
  for (int i = 0; i < cfg.train_sequences; ++i) data.train.push_back(make_sample(scene, cfg, K, rng));
  for (int i = 0; i < cfg.test_sequences; ++i) data.test.push_back(make_sample(scene, cfg, K, rng));
  return data;
}

double target_variance(const std::vector<ToySample>& samples) {
  if (samples.empty()) throw std::invalid_argument("target_variance: no samples");
  Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(samples.front().target.size());
  for (const auto& s : samples) mean += s.target;
  mean /= static_cast<double>(samples.size());
  double v = 0.0;
  for (const auto& s : samples) v += (s.target - mean).squaredNorm();
  return v / static_cast<double>(samples.size() * static_cast<std::size_t>(mean.size()));
}

double evaluate_mse(const TrainResult& m, const TrainConfig& cfg, const std::vector<ToySample>& samples) {
  double se = 0.0;
  for (const auto& s : samples) {
    const Eigen::RowVectorXd y =
        (predict_normalized(m, cfg.tam, normalized(s.features, m)).array() * m.target_scale.array()).matrix() +
        m.target_mean;
    se += (y - s.target).squaredNorm();
  }
  return se / static_cast<double>(samples.size() * 6);
}

TrainResult train_tam_toy(const ToyDataset& data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.train.empty() || data.test.empty()) throw std::invalid_argument("training: empty split");
  const int k = static_cast<int>(data.train.front().features.rows());
  const int f = static_cast<int>(data.train.front().features.cols());
  if (k != cfg.tam.k || f != cfg.tam.feature_dim) {
    throw std::invalid_argument("training: TAM context length / feature size do not match the data");
  }

  std::vector<ToySample> train = data.train;
  Rng rng(cfg.seed);
  if (cfg.shuffle_labels) {
    for (std::size_t i = train.size() - 1; i > 0; --i) std::swap(train[i].target, train[rng.index(i + 1)].target);
  }

  TrainResult m;
  m.weights = init_weights(cfg.tam);
  {
    Rng head_rng(cfg.tam.seed ^ 0x9e3779b97f4a7c15ULL);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.tam.d_model));
    m.head_w.resize(cfg.tam.d_model, 6);
    m.head_b.resize(1, 6);
    for (Eigen::Index i = 0; i < m.head_w.size(); ++i) m.head_w.data()[i] = head_rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < m.head_b.size(); ++i) m.head_b.data()[i] = head_rng.uniform(-bound, bound);
  }

  // Standardization statistics over the training split. Constant columns
  // keep a unit scale.
  const auto fit = [](const std::vector<Eigen::RowVectorXd>& rows, Eigen::RowVectorXd& mean, Eigen::RowVectorXd& scale) {
    mean = Eigen::RowVectorXd::Zero(rows.front().size());
    for (const auto& r : rows) mean += r;
    mean /= static_cast<double>(rows.size());
    scale = Eigen::RowVectorXd::Zero(mean.size());
    for (const auto& r : rows) scale += (r - mean).array().square().matrix();
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
      const double sd = std::sqrt(scale(i) / static_cast<double>(rows.size()));
      scale(i) = sd > 1e-12 ? sd : 1.0;
    }
  };
  {
    std::vector<Eigen::RowVectorXd> frows, trows;
    for (const auto& s : train) {
      for (Eigen::Index r = 0; r < s.features.rows(); ++r) frows.emplace_back(s.features.row(r));
      trows.push_back(s.target);
    }
    fit(frows, m.feature_mean, m.feature_scale);
    fit(trows, m.target_mean, m.target_scale);
  }
  std::vector<Matrix> x;
  std::vector<Eigen::RowVectorXd> y;
  for (const auto& s : train) {
    x.push_back(normalized(s.features, m));
    y.push_back(((s.target - m.target_mean).array() / m.target_scale.array()).matrix());
  }

  ParamVector params = layout(m);
  pack(m.weights, m.head_w, m.head_b, params);
  ParamVector grads = params.zeros_like();
  AdamState state(cfg.adam);
  TamWeights gw = zeros_like(m.weights);
  Matrix ghw(m.head_w.rows(), m.head_w.cols()), ghb(1, 6);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.index(i + 1)]);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
      const double scale = 2.0 / static_cast<double>((b1 - b0) * 6);
      gw = zeros_like(m.weights);
      ghw.setZero();
      ghb.setZero();
      for (std::size_t j = b0; j < b1; ++j) {
        const std::size_t n = order[j];
        const Eigen::RowVectorXd h = tam_forward(x[n], cfg.tam, m.weights);
        const Eigen::RowVectorXd err = h * m.head_w + m.head_b - y[n];
        const Eigen::RowVectorXd g = scale * err;
        ghw += h.transpose() * g;
        ghb += g;
        tam_backward(x[n], cfg.tam, m.weights, g * m.head_w.transpose(), gw);
      }
      pack(gw, ghw, ghb, grads);
      try {
        adam_step(params, grads, state);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("TAM training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
      }
      unpack(params, m.weights, m.head_w, m.head_b);
    }
    m.train_mse.push_back(evaluate_mse(m, cfg, train));
    m.test_mse.push_back(evaluate_mse(m, cfg, data.test));
    if (!std::isfinite(m.train_mse.back())) {
      throw std::runtime_error("TAM training diverged in epoch " + std::to_string(epoch) + ": loss is not finite");
    }
  }
  m.target_variance = target_variance(data.test);
  return m;
}

std::vector<io::NamedTensor> checkpoint_tensors(const TrainResult& m) {
  std::vector<io::NamedTensor> out;
  const auto add = [&](const std::string& name, const Matrix& t) {
    io::NamedTensor nt{name, {static_cast<int>(t.rows()), static_cast<int>(t.cols())}, {}};
    nt.values.resize(static_cast<std::size_t>(t.size()));
    copy_in(t, nt.values);
    out.push_back(std::move(nt));
  };
  for_each_tensor(m.weights, [&](const std::string& name, const Matrix& t) { add("tam." + name, t); });
  add("head.w", m.head_w);
  add("head.b", m.head_b);
  add("norm.feature_mean", m.feature_mean);
  add("norm.feature_scale", m.feature_scale);
  add("norm.target_mean", m.target_mean);
  add("norm.target_scale", m.target_scale);
  return out;
}

nlohmann::json to_json(const TamConfig& c) {
  return {{"k", c.k},           {"d_model", c.d_model},         {"heads", c.heads}, {"layers", c.layers},
          {"d_ff", c.ff_width()}, {"feature_dim", c.feature_dim}, {"seed", c.seed}};
}

nlohmann::json to_json(const ToyDataConfig& c) {
  return {{"train_sequences", c.train_sequences},
          {"test_sequences", c.test_sequences},
          {"k", c.k},
          {"height", c.height},
          {"width", c.width},
          {"grid", {c.grid_rows, c.grid_cols}},
          {"start_range", {c.start_range.x(), c.start_range.y(), c.start_range.z()}},
          {"velocity_range", {c.velocity_range.x(), c.velocity_range.y(), c.velocity_range.z()}},
          {"yaw_rate_range", c.yaw_rate_range},
          {"seed", c.seed}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"tam", to_json(c.tam)},
          {"lr", c.adam.lr},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"shuffle_labels", c.shuffle_labels},
          {"seed", c.seed}};
}

}  // namespace depthcast::tam
