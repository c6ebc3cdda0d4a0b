// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "tapsim/predictor_error.hpp"

namespace tapsim {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;
using VectorView = Eigen::Map<Eigen::VectorXd>;
using ConstVectorView = Eigen::Map<const Eigen::VectorXd>;

struct GruShape {
  std::size_t layers = 1;
  std::size_t input_dim = 1;
  std::size_t hidden_dim = 1;

  bool operator==(const GruShape&) const = default;
};

enum class Gate { Reset = 0, Update = 1, Candidate = 2 };

/// Multi-layer GRU with a sigmoid read-out back to input width.
///
/// All parameters live in one flat vector, in this order:
///   for each layer: W_r, W_z, W_n (H x in), U_r, U_z, U_n (H x H), b_r, b_z, b_n (H)
///   then V (D x H) and c (D).
/// Matrices are row-major, which is also the on-disk order.
///
/// Per step and layer (x is the layer input, h the previous hidden state):
///   r  = sigmoid(W_r x + U_r h + b_r)
///   z  = sigmoid(W_z x + U_z h + b_z)
///   n  = tanh(W_n x + U_n (r * h) + b_n)
///   h' = (1 - z) * n + z * h
/// and the read-out is y = sigmoid(V h'_top + c).
class GruNetwork {
 public:
  explicit GruNetwork(GruShape shape);

  const GruShape& shape() const { return shape_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  static std::size_t parameter_count(const GruShape& shape);

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  ConstMatrixView input_weights(std::size_t layer, Gate gate) const;
  ConstMatrixView recurrent_weights(std::size_t layer, Gate gate) const;
  ConstVectorView bias(std::size_t layer, Gate gate) const;
  ConstMatrixView output_weights() const;
  ConstVectorView output_bias() const;

  MatrixView input_weights(std::size_t layer, Gate gate);
  MatrixView recurrent_weights(std::size_t layer, Gate gate);
  VectorView bias(std::size_t layer, Gate gate);
  MatrixView output_weights();
  VectorView output_bias();

  std::size_t layer_input_dim(std::size_t layer) const {
    return layer == 0 ? shape_.input_dim : shape_.hidden_dim;
  }

  /// Offset of a block inside params(); exposed for gradient bookkeeping.
  struct Layout {
    std::size_t input[3];
    std::size_t recurrent[3];
    std::size_t bias[3];
  };
  const Layout& layout(std::size_t layer) const { return layouts_.at(layer); }
  std::size_t output_weights_offset() const { return output_offset_; }
  std::size_t output_bias_offset() const { return output_offset_ + shape_.input_dim * shape_.hidden_dim; }

 private:
  GruShape shape_;
  Eigen::VectorXd params_;
  std::vector<Layout> layouts_;
  std::size_t output_offset_ = 0;
};

/// Uniform weights: input blocks within +-1/sqrt(fan_in), recurrent blocks,
/// biases and the read-out within +-1/sqrt(H).
GruNetwork init_gru(std::uint64_t seed, const GruShape& shape);

/// One training/validation pair: `window` holds phi+1 rows (oldest first),
/// `label` the gamma rows that follow.
struct Sample {
  Eigen::MatrixXd window;
  Eigen::MatrixXd label;
};

/// Runs the window through the network from a zero state, then decodes
/// `horizon` steps autoregressively. The first phi rows only warm the state;
/// the last window row is the first decoder input and each later decoder input
/// is the previous prediction. Returns horizon x D.
Eigen::MatrixXd gru_forward(const GruNetwork& net, const Eigen::MatrixXd& window, std::size_t horizon);

/// Batched forward for equally-shaped samples; result[i] is horizon x D.
std::vector<Eigen::MatrixXd> gru_forward_batch(const GruNetwork& net, std::span<const Sample> batch);

/// Mean squared error over samples, horizon steps and dimensions. When
/// `gradient` is non-null it receives dLoss/dParams via backpropagation
/// through time over both the decode and warm-up phases.
double gru_loss(const GruNetwork& net, std::span<const Sample> batch, Eigen::VectorXd* gradient = nullptr);

/// Mean absolute error of free-running predictions against labels.
double evaluate_avg_ae(const GruNetwork& net, std::span<const Sample> validation);

/// Builds every (window, label) pair from consecutive rows: windows of
/// lookback+1 rows followed by `horizon` label rows, starting every `stride` rows.
std::vector<Sample> make_samples(const Eigen::MatrixXd& rows, std::size_t lookback,
                                 std::size_t horizon, std::size_t stride = 1);

}  // namespace tapsim
