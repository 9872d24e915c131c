#include <doctest.h>

#include <cmath>

#include "depthcast/gradcheck_suite.hpp"
#include "depthcast/rng.hpp"
#include "depthcast/tam.hpp"

using namespace depthcast;
using namespace depthcast::tam;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

AttentionWeights random_attention(Rng& rng, int d) {
  return {random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d), random_matrix(rng, d, d),
          random_matrix(rng, 1, d), random_matrix(rng, 1, d), random_matrix(rng, 1, d), random_matrix(rng, 1, d)};
}

}  // namespace

TEST_SUITE("tam") {

TEST_CASE("configuration checks") {
  TamConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.ff_width() == 4 * cfg.d_model);
  cfg.heads = 5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.heads = 4;
  cfg.k = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.k = 4;
  cfg.layers = 0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("initialization is seeded and bounded") {
  TamConfig cfg;
  cfg.seed = 9;
  const TamWeights a = init_weights(cfg), b = init_weights(cfg);
  bool same = true;
  for_each_tensor(a, [&](const std::string& name, const Matrix& m) {
    const Matrix* other = nullptr;
    for_each_tensor(b, [&](const std::string& n2, const Matrix& m2) {
      if (n2 == name) other = &m2;
    });
    same = same && other && *other == m;
  });
  CHECK(same);
  CHECK(a.layers.size() == 2);
  CHECK(a.layers[0].ln1.gamma.minCoeff() == 1.0);
  CHECK(a.layers[0].ln1.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.embed.w.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(double(cfg.feature_dim)));
  CHECK(a.layers[1].ffn.w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(double(cfg.ff_width())));
  cfg.seed = 10;
  CHECK(init_weights(cfg).embed.w != a.embed.w);
}

TEST_CASE("embedding projection") {
  Rng rng(51);
  const Matrix x = random_matrix(rng, 4, 6);
  EmbedWeights zero{Matrix::Zero(6, 6), Matrix::Zero(1, 6), Matrix::Zero(4, 6)};
  CHECK(embed_project(x, zero).cwiseAbs().maxCoeff() == 0.0);
  EmbedWeights ident{Matrix::Identity(6, 6), Matrix::Zero(1, 6), Matrix::Zero(4, 6)};
  CHECK(embed_project(x, ident) == x);

  const EmbedWeights w{random_matrix(rng, 6, 5), random_matrix(rng, 1, 5), random_matrix(rng, 4, 5)};
  const Matrix y = embed_project(x, w);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 5; ++c) {
      double acc = w.b(0, c) + w.pos(r, c);
      for (int k = 0; k < 6; ++k) acc += x(r, k) * w.w(k, c);
      CHECK(y(r, c) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
  CHECK_THROWS_AS(embed_project(random_matrix(rng, 4, 7), w), std::invalid_argument);
  CHECK_THROWS_AS(embed_project(random_matrix(rng, 3, 6), w), std::invalid_argument);
}

TEST_CASE("layer norm is shift invariant") {
  Rng rng(52);
  const Matrix x = random_matrix(rng, 3, 8);
  const LayerNormWeights w{random_matrix(rng, 1, 8), random_matrix(rng, 1, 8)};
  const Matrix shifted = x.array() + 3.7;
  CHECK((layer_norm(shifted, w) - layer_norm(x, w)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention weights are row-stochastic and outputs stay in the value hull") {
  Rng rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 8, heads = 2, k = 4;
    const Matrix x = random_matrix(rng, k, d, 2.0);
    const AttentionWeights w = random_attention(rng, d);
    AttentionCache cache;
    multi_head_attention(x, w, heads, &cache);
    REQUIRE(cache.weights.size() == 2);
    for (const Matrix& a : cache.weights) {
      for (int r = 0; r < k; ++r) CHECK(std::abs(a.row(r).sum() - 1.0) < 1e-12);
      CHECK(a.minCoeff() >= 0.0);
    }
    for (int c = 0; c < d; ++c) {
      const double lo = cache.v.col(c).minCoeff(), hi = cache.v.col(c).maxCoeff();
      for (int r = 0; r < k; ++r) {
        CHECK(cache.heads(r, c) >= lo - 1e-12);
        CHECK(cache.heads(r, c) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("equal logits give uniform attention over the values") {
  Rng rng(54);
  const int d = 4, k = 3;
  const Matrix x = random_matrix(rng, k, d);
  AttentionWeights w = random_attention(rng, d);
  w.wq.setZero();
  w.wk.setZero();
  AttentionCache cache;
  multi_head_attention(x, w, 2, &cache);
  for (const Matrix& a : cache.weights) CHECK((a.array() - 1.0 / k).abs().maxCoeff() < 1e-15);
  const Eigen::RowVectorXd mean_v = cache.v.colwise().mean();
  for (int r = 0; r < k; ++r) CHECK((cache.heads.row(r) - mean_v).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("two-token, two-wide attention expanded by hand") {
  Rng rng(55);
  const Matrix x = random_matrix(rng, 2, 2);
  const AttentionWeights w = random_attention(rng, 2);
  for (int heads : {1, 2}) {
    const Matrix y = multi_head_attention(x, w, heads);
    // Projections written out scalar by scalar.
    double q[2][2], kk[2][2], v[2][2];
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        q[i][j] = x(i, 0) * w.wq(0, j) + x(i, 1) * w.wq(1, j) + w.bq(0, j);
        kk[i][j] = x(i, 0) * w.wk(0, j) + x(i, 1) * w.wk(1, j) + w.bk(0, j);
        v[i][j] = x(i, 0) * w.wv(0, j) + x(i, 1) * w.wv(1, j) + w.bv(0, j);
      }
    }
    double o[2][2];
    if (heads == 1) {
      const double s = 1.0 / std::sqrt(2.0);
      for (int i = 0; i < 2; ++i) {
        const double l0 = s * (q[i][0] * kk[0][0] + q[i][1] * kk[0][1]);
        const double l1 = s * (q[i][0] * kk[1][0] + q[i][1] * kk[1][1]);
        const double a0 = std::exp(l0) / (std::exp(l0) + std::exp(l1)), a1 = 1 - a0;
        for (int j = 0; j < 2; ++j) o[i][j] = a0 * v[0][j] + a1 * v[1][j];
      }
    } else {
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const double l0 = q[i][j] * kk[0][j], l1 = q[i][j] * kk[1][j];
          const double a0 = std::exp(l0) / (std::exp(l0) + std::exp(l1));
          o[i][j] = a0 * v[0][j] + (1 - a0) * v[1][j];
        }
      }
    }
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double expect = o[i][0] * w.wo(0, j) + o[i][1] * w.wo(1, j) + w.bo(0, j);
        CHECK(y(i, j) == doctest::Approx(expect).epsilon(1e-13));
      }
    }
  }
}

TEST_CASE("an encoder layer with silent sublayers is the identity") {
  TamConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.feature_dim = 5;
  TamWeights w = init_weights(cfg);
  EncoderLayerWeights layer = w.layers[0];
  for (Matrix* m : {&layer.attn.wq, &layer.attn.wk, &layer.attn.wv, &layer.attn.wo, &layer.attn.bq, &layer.attn.bk,
                    &layer.attn.bv, &layer.attn.bo, &layer.ffn.w1, &layer.ffn.b1, &layer.ffn.w2, &layer.ffn.b2}) {
    m->setZero();
  }
  Rng rng(56);
  const Matrix x = random_matrix(rng, 4, 8);
  CHECK(encoder_layer(x, layer, 2) == x);
}

TEST_CASE("read-out semantics") {
  Rng rng(57);
  TamConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.feature_dim = 6;
  cfg.layers = 0;
  const TamWeights w0 = init_weights(cfg);
  const Matrix x = random_matrix(rng, cfg.k, cfg.feature_dim);
  const Eigen::RowVectorXd out0 = tam_forward(x, cfg, w0);
  CHECK((out0 - embed_project(x, w0.embed).row(cfg.k - 1)).cwiseAbs().maxCoeff() == 0.0);

  cfg.layers = 2;
  TamWeights w = init_weights(cfg);
  Matrix perm = x;
  perm.row(0).swap(perm.row(2));

  // Learned positions break the symmetry between context frames.
  w.embed.pos = random_matrix(rng, cfg.k, cfg.d_model);
  CHECK((tam_forward(x, cfg, w) - tam_forward(perm, cfg, w)).cwiseAbs().maxCoeff() > 1e-6);

  w.embed.pos.setZero();
  CHECK((tam_forward(x, cfg, w) - tam_forward(perm, cfg, w)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(tam_forward(random_matrix(rng, cfg.k + 1, cfg.feature_dim), cfg, w), std::invalid_argument);
}

TEST_CASE("property: permuting context rows never changes the read-out without positions") {
  Rng rng(58);
  TamConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 4;
  cfg.feature_dim = 5;
  for (int trial = 0; trial < 10; ++trial) {
    cfg.seed = trial;
    TamWeights w = init_weights(cfg);
    w.embed.pos.setZero();
    const Matrix x = random_matrix(rng, cfg.k, cfg.feature_dim);
    Matrix p = x;
    p.row(0).swap(p.row(1 + trial % 2));
    CHECK((tam_forward(x, cfg, w) - tam_forward(p, cfg, w)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("property: every sub-operation's backward pass matches finite differences") {
  std::vector<std::string> kernels;
  for (const auto& name : gradcheck_kernel_names())
    if (name.rfind("tam.", 0) == 0) kernels.push_back(name);
  REQUIRE(kernels.size() == 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    GradCheckSuiteConfig cfg;
    cfg.seed = seed;
    cfg.only = kernels;
    for (const auto& k : run_gradcheck_suite(cfg).kernels) {
      INFO(k.kernel, " seed ", seed, " worst ", k.report.worst, " err ", k.report.max_rel_error);
      CHECK(k.report.passed);
    }
  }
}

}  // TEST_SUITE
