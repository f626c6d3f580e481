#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vvlab::nn {

enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1, kTanh = 2, kSigmoid = 3 };

const char* to_string(Activation a);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::kIdentity;

  Eigen::Index inputs() const { return weight.cols(); }
  Eigen::Index outputs() const { return weight.rows(); }
};

// Partials of a scalar objective, shape-congruent with a DenseNet, plus the
// partial with respect to the network input (one column per sample).
struct GradientSet {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;
};

// Feed-forward stack of affine layers. Batched calls take one sample per
// column.
class DenseNet {
 public:
  DenseNet() = default;
  explicit DenseNet(std::vector<DenseLayer> layers);

  // Uniform Glorot initialization, hidden layers share one activation.
  static DenseNet create(int inputs, std::span<const int> hidden, int outputs,
                         Activation hidden_activation, Activation output_activation,
                         std::mt19937_64& rng);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index inputs() const;
  Eigen::Index outputs() const;
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  // Activations recorded by a forward pass for reuse in backward.
  struct Tape {
    std::vector<Eigen::MatrixXd> values;  // values[0] = input, values[k+1] = output of layer k
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs, Tape& tape) const;

  // Reverse-mode partials given d(objective)/d(output). Parameter partials are
  // summed over the batch columns.
  GradientSet backward(const Tape& tape, const Eigen::MatrixXd& upstream) const;
  GradientSet backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) const;

  GradientSet zero_gradients() const;

  // this <- tau * source + (1 - tau) * this, elementwise.
  void blend_from(const DenseNet& source, double tau);

  bool same_shape(const DenseNet& other) const;
  bool operator==(const DenseNet& other) const;

 private:
  void check() const;
  std::vector<DenseLayer> layers_;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> m_weight, v_weight;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
  std::int64_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_net(const DenseNet& net, double learning_rate);
};

// One bias-corrected Adam descent step. Callers wanting ascent negate grads.
void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state);

// Versioned little-endian model format:
//   "VVNN" | u32 version | u32 layer count |
//   per layer: u32 inputs | u32 outputs | u8 activation | f64 weight[out*in] row-major | f64 bias[out]
inline constexpr std::uint32_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize(const DenseNet& net);
DenseNet deserialize(std::span<const std::uint8_t> bytes);

}  // namespace vvlab::nn
