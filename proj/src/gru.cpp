// SPDX-License-Identifier: Apache-2.0
#include "tapsim/gru.hpp"

#include <cmath>
#include <random>
#include <string>

namespace tapsim {

namespace {

constexpr std::size_t kGates = 3;

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& a) {
  return (1.0 + (-a.array()).exp()).inverse().matrix();
}

struct LayerStep {
  Eigen::MatrixXd x;       // layer input, in x B
  Eigen::MatrixXd h_prev;  // H x B
  Eigen::MatrixXd r, z, n;
};

struct Step {
  std::vector<LayerStep> layers;
  Eigen::MatrixXd h_top;  // decode steps only
  Eigen::MatrixXd y;      // D x B, decode steps only
};

struct Unrolled {
  std::vector<Step> steps;
  std::vector<Eigen::MatrixXd> outputs;  // horizon entries, D x B
};

void check_batch(const GruNetwork& net, std::span<const Sample> batch) {
  if (batch.empty()) throw PredictorError("batch is empty");
  const auto d = static_cast<Eigen::Index>(net.shape().input_dim);
  const auto rows = batch.front().window.rows();
  const auto horizon = batch.front().label.rows();
  if (rows < 1 || horizon < 1) throw PredictorError("samples need a non-empty window and label");
  for (const auto& s : batch) {
    if (s.window.cols() != d || s.label.cols() != d) {
      throw PredictorError("sample width " + std::to_string(s.window.cols()) + " does not match network input " +
                           std::to_string(d));
    }
    if (s.window.rows() != rows || s.label.rows() != horizon) {
      throw PredictorError("samples in one batch must share window and horizon lengths");
    }
  }
}

// Forward over the whole batch. Each sample is a column. With keep = false
// only the outputs are retained.
Unrolled unroll(const GruNetwork& net, std::span<const Sample> batch, std::size_t horizon, bool keep) {
  const auto& shape = net.shape();
  const auto hidden = static_cast<Eigen::Index>(shape.hidden_dim);
  const auto width = static_cast<Eigen::Index>(shape.input_dim);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto lookback = static_cast<std::size_t>(batch.front().window.rows()) - 1;
  const std::size_t total = lookback + horizon;

  Unrolled out;
  if (keep) out.steps.resize(total);
  std::vector<Eigen::MatrixXd> h(shape.layers, Eigen::MatrixXd::Zero(hidden, b));
  Eigen::MatrixXd x(width, b);
  Eigen::MatrixXd y;

  for (std::size_t s = 0; s < total; ++s) {
    if (s <= lookback) {
      x.resize(width, b);
      for (Eigen::Index i = 0; i < b; ++i) {
        x.col(i) = batch[static_cast<std::size_t>(i)].window.row(static_cast<Eigen::Index>(s)).transpose();
      }
    } else {
      x = y;
    }
    if (keep) out.steps[s].layers.resize(shape.layers);
    for (std::size_t l = 0; l < shape.layers; ++l) {
      const auto wr = net.input_weights(l, Gate::Reset);
      const auto wz = net.input_weights(l, Gate::Update);
      const auto wn = net.input_weights(l, Gate::Candidate);
      const auto ur = net.recurrent_weights(l, Gate::Reset);
      const auto uz = net.recurrent_weights(l, Gate::Update);
      const auto un = net.recurrent_weights(l, Gate::Candidate);
      Eigen::MatrixXd r = sigmoid((wr * x + ur * h[l]).colwise() + net.bias(l, Gate::Reset));
      Eigen::MatrixXd z = sigmoid((wz * x + uz * h[l]).colwise() + net.bias(l, Gate::Update));
      const Eigen::MatrixXd rh = r.cwiseProduct(h[l]);
      Eigen::MatrixXd n = ((wn * x + un * rh).colwise() + net.bias(l, Gate::Candidate)).array().tanh().matrix();
      Eigen::MatrixXd next = (1.0 - z.array()) * n.array() + z.array() * h[l].array();
      if (keep) {
        auto& c = out.steps[s].layers[l];
        c.x = x;
        c.h_prev = std::move(h[l]);
        c.r = std::move(r);
        c.z = std::move(z);
        c.n = std::move(n);
      }
      h[l] = std::move(next);
      x = h[l];
    }
    if (s >= lookback) {
      y = sigmoid((net.output_weights() * h.back()).colwise() + net.output_bias());
      out.outputs.push_back(y);
      if (keep) {
        out.steps[s].h_top = h.back();
        out.steps[s].y = y;
      }
    }
  }
  return out;
}

}  // namespace

std::size_t GruNetwork::parameter_count(const GruShape& shape) {
  const auto d = shape.input_dim;
  const auto h = shape.hidden_dim;
  std::size_t count = 0;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const auto in = l == 0 ? d : h;
    count += kGates * (in * h + h * h + h);
  }
  return count + h * d + d;
}

GruNetwork::GruNetwork(GruShape shape) : shape_(shape) {
  if (shape_.layers < 1 || shape_.input_dim < 1 || shape_.hidden_dim < 1) {
    throw PredictorError("GRU needs at least one layer, input and hidden unit");
  }
  const auto h = shape_.hidden_dim;
  std::size_t offset = 0;
  for (std::size_t l = 0; l < shape_.layers; ++l) {
    Layout layout{};
    const auto in = layer_input_dim(l);
    for (std::size_t g = 0; g < kGates; ++g, offset += h * in) layout.input[g] = offset;
    for (std::size_t g = 0; g < kGates; ++g, offset += h * h) layout.recurrent[g] = offset;
    for (std::size_t g = 0; g < kGates; ++g, offset += h) layout.bias[g] = offset;
    layouts_.push_back(layout);
  }
  output_offset_ = offset;
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count(shape_)));
}

#define TAPSIM_BLOCK(Type, ptr, rows, cols) \
  Type(ptr, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols))

ConstMatrixView GruNetwork::input_weights(std::size_t layer, Gate gate) const {
  return TAPSIM_BLOCK(ConstMatrixView, params_.data() + layout(layer).input[static_cast<int>(gate)],
                      shape_.hidden_dim, layer_input_dim(layer));
}
ConstMatrixView GruNetwork::recurrent_weights(std::size_t layer, Gate gate) const {
  return TAPSIM_BLOCK(ConstMatrixView, params_.data() + layout(layer).recurrent[static_cast<int>(gate)],
                      shape_.hidden_dim, shape_.hidden_dim);
}
ConstVectorView GruNetwork::bias(std::size_t layer, Gate gate) const {
  return ConstVectorView(params_.data() + layout(layer).bias[static_cast<int>(gate)],
                         static_cast<Eigen::Index>(shape_.hidden_dim));
}
ConstMatrixView GruNetwork::output_weights() const {
  return TAPSIM_BLOCK(ConstMatrixView, params_.data() + output_offset_, shape_.input_dim, shape_.hidden_dim);
}
ConstVectorView GruNetwork::output_bias() const {
  return ConstVectorView(params_.data() + output_bias_offset(), static_cast<Eigen::Index>(shape_.input_dim));
}
MatrixView GruNetwork::input_weights(std::size_t layer, Gate gate) {
  return TAPSIM_BLOCK(MatrixView, params_.data() + layout(layer).input[static_cast<int>(gate)],
                      shape_.hidden_dim, layer_input_dim(layer));
}
MatrixView GruNetwork::recurrent_weights(std::size_t layer, Gate gate) {
  return TAPSIM_BLOCK(MatrixView, params_.data() + layout(layer).recurrent[static_cast<int>(gate)],
                      shape_.hidden_dim, shape_.hidden_dim);
}
VectorView GruNetwork::bias(std::size_t layer, Gate gate) {
  return VectorView(params_.data() + layout(layer).bias[static_cast<int>(gate)],
                    static_cast<Eigen::Index>(shape_.hidden_dim));
}
MatrixView GruNetwork::output_weights() {
  return TAPSIM_BLOCK(MatrixView, params_.data() + output_offset_, shape_.input_dim, shape_.hidden_dim);
}
VectorView GruNetwork::output_bias() {
  return VectorView(params_.data() + output_bias_offset(), static_cast<Eigen::Index>(shape_.input_dim));
}

#undef TAPSIM_BLOCK

GruNetwork init_gru(std::uint64_t seed, const GruShape& shape) {
  GruNetwork net(shape);
  std::mt19937_64 rng(seed);
  const double recurrent_scale = 1.0 / std::sqrt(static_cast<double>(shape.hidden_dim));
  auto fill = [&](double* data, std::size_t count, double scale) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (std::size_t i = 0; i < count; ++i) data[i] = dist(rng);
  };
  double* base = net.params().data();
  const auto h = shape.hidden_dim;
  for (std::size_t l = 0; l < shape.layers; ++l) {
    const auto in = net.layer_input_dim(l);
    const auto& layout = net.layout(l);
    for (std::size_t g = 0; g < kGates; ++g) {
      fill(base + layout.input[g], h * in, 1.0 / std::sqrt(static_cast<double>(in)));
    }
    for (std::size_t g = 0; g < kGates; ++g) fill(base + layout.recurrent[g], h * h, recurrent_scale);
    for (std::size_t g = 0; g < kGates; ++g) fill(base + layout.bias[g], h, recurrent_scale);
  }
  fill(base + net.output_weights_offset(), shape.input_dim * h, recurrent_scale);
  fill(base + net.output_bias_offset(), shape.input_dim, recurrent_scale);
  return net;
}

Eigen::MatrixXd gru_forward(const GruNetwork& net, const Eigen::MatrixXd& window, std::size_t horizon) {
  if (horizon == 0) throw PredictorError("prediction horizon must be at least 1");
  if (window.rows() < 1) throw PredictorError("window must hold at least one vector");
  if (static_cast<std::size_t>(window.cols()) != net.shape().input_dim) {
    throw PredictorError("window width " + std::to_string(window.cols()) + " does not match network input " +
                         std::to_string(net.shape().input_dim));
  }
  const Sample sample{window, Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(horizon), window.cols())};
  const auto unrolled = unroll(net, std::span<const Sample>(&sample, 1), horizon, false);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(horizon), window.cols());
  for (std::size_t k = 0; k < horizon; ++k) out.row(static_cast<Eigen::Index>(k)) = unrolled.outputs[k].transpose();
  return out;
}

std::vector<Eigen::MatrixXd> gru_forward_batch(const GruNetwork& net, std::span<const Sample> batch) {
  check_batch(net, batch);
  const auto horizon = static_cast<std::size_t>(batch.front().label.rows());
  const auto unrolled = unroll(net, batch, horizon, false);
  std::vector<Eigen::MatrixXd> out(batch.size(), Eigen::MatrixXd(static_cast<Eigen::Index>(horizon),
                                                                 static_cast<Eigen::Index>(net.shape().input_dim)));
  for (std::size_t k = 0; k < horizon; ++k) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out[i].row(static_cast<Eigen::Index>(k)) = unrolled.outputs[k].col(static_cast<Eigen::Index>(i)).transpose();
    }
  }
  return out;
}

double gru_loss(const GruNetwork& net, std::span<const Sample> batch, Eigen::VectorXd* gradient) {
  check_batch(net, batch);
  const auto& shape = net.shape();
  const auto horizon = static_cast<std::size_t>(batch.front().label.rows());
  const auto lookback = static_cast<std::size_t>(batch.front().window.rows()) - 1;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto width = static_cast<Eigen::Index>(shape.input_dim);
  const double denom = static_cast<double>(batch.size() * horizon * shape.input_dim);

  const auto unrolled = unroll(net, batch, horizon, gradient != nullptr);

  std::vector<Eigen::MatrixXd> residual(horizon, Eigen::MatrixXd(width, b));
  double loss = 0.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    for (Eigen::Index i = 0; i < b; ++i) {
      residual[k].col(i) = unrolled.outputs[k].col(i) -
                           batch[static_cast<std::size_t>(i)].label.row(static_cast<Eigen::Index>(k)).transpose();
    }
    loss += residual[k].squaredNorm();
  }
  loss /= denom;
  if (!gradient) return loss;

  GruNetwork grad(shape);
  const auto hidden = static_cast<Eigen::Index>(shape.hidden_dim);
  std::vector<Eigen::MatrixXd> dh(shape.layers, Eigen::MatrixXd::Zero(hidden, b));
  Eigen::MatrixXd dy_carry = Eigen::MatrixXd::Zero(width, b);

  for (std::size_t s = lookback + horizon; s-- > 0;) {
    const auto& step = unrolled.steps[s];
    if (s >= lookback) {
      const std::size_t k = s - lookback;
      Eigen::MatrixXd dy = residual[k] * (2.0 / denom);
      if (k + 1 < horizon) dy += dy_carry;
      const Eigen::MatrixXd da = dy.cwiseProduct((step.y.array() * (1.0 - step.y.array())).matrix());
      grad.output_weights() += da * step.h_top.transpose();
      grad.output_bias() += da.rowwise().sum();
      dh.back() += net.output_weights().transpose() * da;
    }
    for (std::size_t l = shape.layers; l-- > 0;) {
      const auto& c = step.layers[l];
      const Eigen::MatrixXd& dnext = dh[l];
      const Eigen::ArrayXXd z = c.z.array();
      const Eigen::ArrayXXd r = c.r.array();
      const Eigen::ArrayXXd n = c.n.array();
      const Eigen::ArrayXXd hp = c.h_prev.array();

      const Eigen::MatrixXd da_n = (dnext.array() * (1.0 - z) * (1.0 - n * n)).matrix();
      const Eigen::MatrixXd da_z = (dnext.array() * (hp - n) * z * (1.0 - z)).matrix();
      Eigen::MatrixXd dh_prev = (dnext.array() * z).matrix();

      const Eigen::MatrixXd rh = (r * hp).matrix();
      const Eigen::MatrixXd d_rh = net.recurrent_weights(l, Gate::Candidate).transpose() * da_n;
      const Eigen::MatrixXd da_r = (d_rh.array() * hp * r * (1.0 - r)).matrix();
      dh_prev += (d_rh.array() * r).matrix();

      grad.input_weights(l, Gate::Reset) += da_r * c.x.transpose();
      grad.input_weights(l, Gate::Update) += da_z * c.x.transpose();
      grad.input_weights(l, Gate::Candidate) += da_n * c.x.transpose();
      grad.recurrent_weights(l, Gate::Reset) += da_r * c.h_prev.transpose();
      grad.recurrent_weights(l, Gate::Update) += da_z * c.h_prev.transpose();
      grad.recurrent_weights(l, Gate::Candidate) += da_n * rh.transpose();
      grad.bias(l, Gate::Reset) += da_r.rowwise().sum();
      grad.bias(l, Gate::Update) += da_z.rowwise().sum();
      grad.bias(l, Gate::Candidate) += da_n.rowwise().sum();

      dh_prev += net.recurrent_weights(l, Gate::Reset).transpose() * da_r;
      dh_prev += net.recurrent_weights(l, Gate::Update).transpose() * da_z;

      Eigen::MatrixXd dx = net.input_weights(l, Gate::Reset).transpose() * da_r;
      dx += net.input_weights(l, Gate::Update).transpose() * da_z;
      dx += net.input_weights(l, Gate::Candidate).transpose() * da_n;

      dh[l] = std::move(dh_prev);
      if (l > 0) {
        dh[l - 1] += dx;
      } else {
        // Decoder inputs after the window are the previous step's outputs.
        dy_carry = s > lookback ? dx : Eigen::MatrixXd::Zero(width, b);
      }
    }
  }
  *gradient = std::move(grad.params());
  return loss;
}

double evaluate_avg_ae(const GruNetwork& net, std::span<const Sample> validation) {
  if (validation.empty()) throw PredictorError("validation set is empty");
  const auto predictions = gru_forward_batch(net, validation);
  double total = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < validation.size(); ++i) {
    total += (predictions[i] - validation[i].label).cwiseAbs().sum();
    count += static_cast<double>(validation[i].label.size());
  }
  return total / count;
}

std::vector<Sample> make_samples(const Eigen::MatrixXd& rows, std::size_t lookback, std::size_t horizon,
                                 std::size_t stride) {
  if (horizon == 0 || stride == 0) throw PredictorError("horizon and stride must be positive");
  std::vector<Sample> samples;
  const auto total = static_cast<std::size_t>(rows.rows());
  const std::size_t span = lookback + 1 + horizon;
  for (std::size_t start = 0; start + span <= total; start += stride) {
    samples.push_back(Sample{
        rows.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(lookback + 1)),
        rows.middleRows(static_cast<Eigen::Index>(start + lookback + 1), static_cast<Eigen::Index>(horizon))});
  }
  return samples;
}

}  // namespace tapsim
