#include "vvlab/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "vvlab/error.hpp"

namespace vvlab::nn {

static_assert(std::endian::native == std::endian::little, "model format assumes a little-endian host");

const char* to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

namespace {

void apply(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::kIdentity: break;
    case Activation::kRelu: z = z.cwiseMax(0.0); break;
    case Activation::kTanh: z = z.array().tanh().matrix(); break;
    case Activation::kSigmoid: z = (1.0 / (1.0 + (-z.array()).exp())).matrix(); break;
  }
}

// Derivative of the activation expressed through its output y.
Eigen::MatrixXd derivative_from_output(Activation a, const Eigen::MatrixXd& y) {
  switch (a) {
    case Activation::kIdentity: return Eigen::MatrixXd::Ones(y.rows(), y.cols());
    case Activation::kRelu: return (y.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - y.array().square()).matrix();
    case Activation::kSigmoid: return (y.array() * (1.0 - y.array())).matrix();
  }
  return {};
}

}  // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { check(); }

void DenseNet::check() const {
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const auto& l = layers_[k];
    if (l.bias.size() != l.weight.rows()) throw ValidationError("layer bias size mismatch");
    if (k > 0 && l.inputs() != layers_[k - 1].outputs()) {
      throw ValidationError("layer " + std::to_string(k) + " input size does not match previous output");
    }
  }
}

DenseNet DenseNet::create(int inputs, std::span<const int> hidden, int outputs,
                          Activation hidden_activation, Activation output_activation,
                          std::mt19937_64& rng) {
  std::vector<int> sizes;
  sizes.push_back(inputs);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(outputs);
  std::vector<DenseLayer> layers;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int fan_in = sizes[k];
    const int fan_out = sizes[k + 1];
    if (fan_in <= 0 || fan_out <= 0) throw PreconditionError("layer sizes must be positive");
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    DenseLayer layer;
    layer.weight.resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) layer.weight(r, c) = u(rng);
    }
    layer.bias = Eigen::VectorXd::Zero(fan_out);
    layer.activation = k + 2 == sizes.size() ? output_activation : hidden_activation;
    layers.push_back(std::move(layer));
  }
  return DenseNet(std::move(layers));
}

Eigen::Index DenseNet::inputs() const { return layers_.empty() ? 0 : layers_.front().inputs(); }

Eigen::Index DenseNet::outputs() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

std::size_t DenseNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::VectorXd DenseNet::forward(const Eigen::VectorXd& input) const {
  return forward(Eigen::MatrixXd(input)).col(0);
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& inputs) const {
  if (layers_.empty()) return inputs;
  if (inputs.rows() != this->inputs()) {
    throw PreconditionError("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                            std::to_string(this->inputs()));
  }
  Eigen::MatrixXd x = inputs;
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * x;
    z.colwise() += l.bias;
    apply(l.activation, z);
    x = std::move(z);
  }
  return x;
}

Eigen::MatrixXd DenseNet::forward(const Eigen::MatrixXd& inputs, Tape& tape) const {
  if (inputs.rows() != this->inputs()) {
    throw PreconditionError("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                            std::to_string(this->inputs()));
  }
  tape.values.clear();
  tape.values.reserve(layers_.size() + 1);
  tape.values.push_back(inputs);
  for (const auto& l : layers_) {
    Eigen::MatrixXd z = l.weight * tape.values.back();
    z.colwise() += l.bias;
    apply(l.activation, z);
    tape.values.push_back(std::move(z));
  }
  return tape.values.back();
}

GradientSet DenseNet::backward(const Tape& tape, const Eigen::MatrixXd& upstream) const {
  if (tape.values.size() != layers_.size() + 1) throw PreconditionError("tape does not match network");
  const Eigen::MatrixXd& out = tape.values.back();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw PreconditionError("upstream gradient shape does not match network output");
  }
  GradientSet g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    delta = delta.cwiseProduct(derivative_from_output(l.activation, tape.values[k + 1]));
    g.weight[k] = delta * tape.values[k].transpose();
    g.bias[k] = delta.rowwise().sum();
    delta = l.weight.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

GradientSet DenseNet::backward(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& upstream) const {
  Tape tape;
  forward(inputs, tape);
  return backward(tape, upstream);
}

GradientSet DenseNet::zero_gradients() const {
  GradientSet g;
  for (const auto& l : layers_) {
    g.weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  g.input = Eigen::MatrixXd::Zero(inputs(), 1);
  return g;
}

void DenseNet::blend_from(const DenseNet& source, double tau) {
  if (!same_shape(source)) throw PreconditionError("blend_from requires identical shapes");
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    layers_[k].weight = tau * source.layers_[k].weight + (1.0 - tau) * layers_[k].weight;
    layers_[k].bias = tau * source.layers_[k].bias + (1.0 - tau) * layers_[k].bias;
  }
}

bool DenseNet::same_shape(const DenseNet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].weight.rows() != other.layers_[k].weight.rows() ||
        layers_[k].weight.cols() != other.layers_[k].weight.cols() ||
        layers_[k].activation != other.layers_[k].activation) {
      return false;
    }
  }
  return true;
}

bool DenseNet::operator==(const DenseNet& other) const {
  if (!same_shape(other)) return false;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    if (layers_[k].weight != other.layers_[k].weight || layers_[k].bias != other.layers_[k].bias) return false;
  }
  return true;
}

AdamState AdamState::for_net(const DenseNet& net, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& l : net.layers()) {
    s.m_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    s.v_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    s.m_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    s.v_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
  return s;
}

namespace {

template <typename Param, typename Moment>
void adam_update(Param& p, const Param& g, Moment& m, Moment& v, const AdamState& s, double c1, double c2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  p.array() -= s.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + s.epsilon);
}

}  // namespace

void adam_step(DenseNet& net, const GradientSet& grads, AdamState& state) {
  auto& layers = net.layers();
  if (grads.weight.size() != layers.size() || state.m_weight.size() != layers.size()) {
    throw PreconditionError("gradient/optimizer state does not match network");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (grads.weight[k].rows() != layers[k].weight.rows() || grads.weight[k].cols() != layers[k].weight.cols() ||
        grads.bias[k].size() != layers[k].bias.size()) {
      throw PreconditionError("gradient shape mismatch at layer " + std::to_string(k));
    }
    adam_update(layers[k].weight, grads.weight[k], state.m_weight[k], state.v_weight[k], state, c1, c2);
    adam_update(layers[k].bias, grads.bias[k], state.m_bias[k], state.v_bias[k], state, c1, c2);
  }
}

namespace {

constexpr char kMagic[4] = {'V', 'V', 'N', 'N'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ParseError("model file truncated at byte " + std::to_string(pos_));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const DenseNet& net) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layers().size()));
  for (const auto& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.inputs()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.outputs()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) put<double>(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias[r]);
  }
  return out;
}

DenseNet deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a model file (bad magic)");
  }
  Reader in(bytes.subspan(4));
  const auto version = in.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw ParseError("unsupported model format version " + std::to_string(version) + " (expected " +
                     std::to_string(kModelFormatVersion) + ")");
  }
  const auto count = in.get<std::uint32_t>();
  if (count > 4096) throw ParseError("implausible layer count " + std::to_string(count));
  std::vector<DenseLayer> layers;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto n_in = in.get<std::uint32_t>();
    const auto n_out = in.get<std::uint32_t>();
    const auto tag = in.get<std::uint8_t>();
    if (tag > static_cast<std::uint8_t>(Activation::kSigmoid)) {
      throw ParseError("unknown activation tag " + std::to_string(tag));
    }
    if (static_cast<std::uint64_t>(n_in) * n_out > bytes.size()) throw ParseError("model file truncated");
    DenseLayer l;
    l.activation = static_cast<Activation>(tag);
    l.weight.resize(n_out, n_in);
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = in.get<double>();
    }
    l.bias.resize(n_out);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = in.get<double>();
    layers.push_back(std::move(l));
  }
  if (!in.done()) throw ParseError("trailing bytes after model");
  try {
    return DenseNet(std::move(layers));
  } catch (const ValidationError& e) {
    throw ParseError(std::string("inconsistent model layers: ") + e.what());
  }
}

}  // namespace vvlab::nn
