#pragma once

#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "depthcast/adam.hpp"
#include "depthcast/checkpoint.hpp"
#include "depthcast/synth.hpp"
#include "depthcast/tam.hpp"

namespace depthcast::tam {

/// Forecasting toy: from k rendered frames of a constant-velocity trajectory
/// with a random start, predict the next step's motion as a 6-vector
/// (axis-angle, translation) of the camera-to-camera step.
struct ToyDataConfig {
  int train_sequences = 256;
  int test_sequences = 128;
  int k = 4;
  int height = 16;
  int width = 48;
  int grid_rows = 4;  // features are channel-mean intensities pooled on
  int grid_cols = 12; // a grid_rows x grid_cols grid
  Vec3 start_range{3.0, 1.0, 1.0};      // start position uniform in +-range
  Vec3 velocity_range{0.3, 0.1, 0.3};   // per-step translation uniform in +-range
  double yaw_rate_range = 0.0;          // per-step yaw uniform in +-range
  std::uint64_t seed = 0;

  int feature_dim() const { return grid_rows * grid_cols; }
  void validate() const;
};

struct ToySample {
  Matrix features;         // k x feature_dim
  Eigen::RowVectorXd target;  // 6
};

struct ToyDataset {
  std::vector<ToySample> train;
  std::vector<ToySample> test;
};

/// Fronto-parallel plane with slowly varying texture, so pooled intensities
/// encode the camera position.
synth::Scene toy_scene();

ToyDataset make_toy_dataset(const synth::Scene& scene, const ToyDataConfig& cfg);

struct TrainConfig {
  TamConfig tam;
  AdamConfig adam{.lr = 1e-3};
  int epochs = 60;
  int batch_size = 16;
  /// Permutes training targets across samples (control run).
  bool shuffle_labels = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  TamWeights weights;
  Matrix head_w;  // d_model x 6
  Matrix head_b;  // 1 x 6
  // Input / output standardization fitted on the training split.
  Eigen::RowVectorXd feature_mean, feature_scale, target_mean, target_scale;
  std::vector<double> train_mse;  // per epoch, original target units
  std::vector<double> test_mse;
  double target_variance = 0.0;  // held-out, mean over the 6 components
};

/// Throws std::runtime_error if the loss becomes non-finite.
TrainResult train_tam_toy(const ToyDataset& data, const TrainConfig& cfg);

/// Mean squared error over samples and components, in target units.
double evaluate_mse(const TrainResult& model, const TrainConfig& cfg, const std::vector<ToySample>& samples);
double target_variance(const std::vector<ToySample>& samples);

std::vector<io::NamedTensor> checkpoint_tensors(const TrainResult& model);

nlohmann::json to_json(const TamConfig& c);
nlohmann::json to_json(const ToyDataConfig& c);
nlohmann::json to_json(const TrainConfig& c);

}  // namespace depthcast::tam
