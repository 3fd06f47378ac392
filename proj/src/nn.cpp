#include "idxsel/nn.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace idxsel::nn {

using nlohmann::json;

namespace test_hooks {
double activation_derivative_bias = 0.0;
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "linear") return Activation::linear;
  throw ParseError("unknown activation '" + s + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::linear: return "linear";
  }
  throw ArgumentError("invalid activation enum value");
}

namespace {

double apply_activation(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::linear: return z;
  }
  throw ArgumentError("invalid activation enum value");
}

// Derivative in terms of the pre-activation z.
double activation_derivative(Activation a, double z) {
  double d = 0.0;
  switch (a) {
    case Activation::relu: d = z > 0.0 ? 1.0 : 0.0; break;
    case Activation::tanh: {
      const double t = std::tanh(z);
      d = 1.0 - t * t;
      break;
    }
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      d = s * (1.0 - s);
      break;
    }
    case Activation::linear: d = 1.0; break;
  }
  return d + test_hooks::activation_derivative_bias;
}

void check_shapes(const Mlp& net) {
  const std::size_t layers = net.layer_dims.size();
  if (layers < 2) throw DimensionError("mlp needs at least input and output dims");
  if (net.activations.size() != layers - 1 || net.weights.size() != layers - 1 ||
      net.biases.size() != layers - 1) {
    throw DimensionError("mlp layer bookkeeping out of sync");
  }
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    if (net.weights[l].rows() != net.layer_dims[l + 1] ||
        net.weights[l].cols() != net.layer_dims[l] ||
        net.biases[l].size() != net.layer_dims[l + 1]) {
      throw DimensionError("mlp weight shapes inconsistent at layer " + std::to_string(l));
    }
  }
}

void check_same_arch(const Mlp& a, const Mlp& b) {
  if (a.layer_dims != b.layer_dims || a.activations != b.activations) {
    throw DimensionError("mlp architectures differ");
  }
}

}  // namespace

std::size_t Mlp::param_count() const {
  std::size_t count = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    count += static_cast<std::size_t>(weights[l].size()) +
             static_cast<std::size_t>(biases[l].size());
  }
  return count;
}

Mlp make_mlp(const std::vector<int>& layer_dims, const std::vector<Activation>& activations,
             std::uint64_t seed) {
  if (layer_dims.size() < 2) throw DimensionError("mlp needs at least input and output dims");
  if (activations.size() != layer_dims.size() - 1) {
    throw DimensionError("need one activation per affine layer");
  }
  for (int d : layer_dims) {
    if (d < 1) throw DimensionError("layer dims must be positive");
  }
  Mlp net;
  net.layer_dims = layer_dims;
  net.activations = activations;
  net.rng_seed = seed;
  Rng rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = rng.uniform(-bound, bound);
    }
    Eigen::VectorXd b(fan_out);
    for (int r = 0; r < fan_out; ++r) b(r) = rng.uniform(-bound, bound);
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  return net;
}

void Gradients::add_scaled(const Gradients& other, double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += factor * other.weights[l];
    biases[l] += factor * other.biases[l];
  }
}

void Gradients::scale(double factor) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] *= factor;
    biases[l] *= factor;
  }
}

void Gradients::clear() {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].setZero();
    biases[l].setZero();
  }
}

Gradients zero_gradients(const Mlp& net) {
  Gradients g;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    g.weights.emplace_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    g.biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return g;
}

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& input) {
  check_shapes(net);
  if (input.size() != net.input_dim()) {
    throw DimensionError("mlp forward: input size " + std::to_string(input.size()) +
                         " != expected " + std::to_string(net.input_dim()));
  }
  Eigen::VectorXd a = input;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Eigen::VectorXd z = net.weights[l] * a + net.biases[l];
    a.resize(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      a(i) = apply_activation(net.activations[l], z(i));
    }
  }
  return a;
}

Gradients backward(const Mlp& net, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream_grad, Eigen::VectorXd* input_grad) {
  check_shapes(net);
  if (input.size() != net.input_dim()) {
    throw DimensionError("mlp backward: input size mismatch");
  }
  if (upstream_grad.size() != net.output_dim()) {
    throw DimensionError("mlp backward: upstream grad size mismatch");
  }
  const std::size_t layers = net.weights.size();
  std::vector<Eigen::VectorXd> activations(layers + 1);
  std::vector<Eigen::VectorXd> pre_activations(layers);
  activations[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    pre_activations[l] = net.weights[l] * activations[l] + net.biases[l];
    Eigen::VectorXd a(pre_activations[l].size());
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a(i) = apply_activation(net.activations[l], pre_activations[l](i));
    }
    activations[l + 1] = std::move(a);
  }

  Gradients grads = zero_gradients(net);
  Eigen::VectorXd delta = upstream_grad;
  for (std::size_t l = layers; l-- > 0;) {
    for (Eigen::Index i = 0; i < delta.size(); ++i) {
      delta(i) *= activation_derivative(net.activations[l], pre_activations[l](i));
    }
    grads.weights[l] = delta * activations[l].transpose();
    grads.biases[l] = delta;
    if (l > 0 || input_grad != nullptr) {
      Eigen::VectorXd prev = net.weights[l].transpose() * delta;
      if (l == 0) {
        *input_grad = prev;
      } else {
        delta = std::move(prev);
      }
    }
  }
  return grads;
}

AdamState make_adam(const Mlp& net, double learning_rate) {
  AdamState state;
  state.learning_rate = learning_rate;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    state.m_weights.emplace_back(
        Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    state.v_weights.emplace_back(
        Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    state.m_biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    state.v_biases.emplace_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  return state;
}

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  if (state.m_weights.size() != net.weights.size()) {
    throw DimensionError("adam state does not match network");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * grad;
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * grad.array().square();
    param.array() -=
        state.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  };
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    update(net.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l]);
    update(net.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l]);
  }
}

void soft_update(Mlp& target, const Mlp& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ArgumentError("soft_update: tau must be in (0, 1]");
  check_same_arch(target, online);
  for (std::size_t l = 0; l < target.weights.size(); ++l) {
    target.weights[l] = tau * online.weights[l] + (1.0 - tau) * target.weights[l];
    target.biases[l] = tau * online.biases[l] + (1.0 - tau) * target.biases[l];
  }
}

double gradient_check(const Mlp& net, std::uint64_t seed, double step_size) {
  Rng rng(seed);
  Eigen::VectorXd input(net.input_dim());
  for (Eigen::Index i = 0; i < input.size(); ++i) input(i) = rng.uniform(-1.0, 1.0);
  Eigen::VectorXd probe(net.output_dim());
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe(i) = rng.uniform(-1.0, 1.0);

  const Gradients analytic = backward(net, input, probe);
  auto loss = [&](const Mlp& candidate) { return probe.dot(forward(candidate, input)); };

  double worst = 0.0;
  Mlp scratch = net;
  auto probe_param = [&](double& value, double analytic_grad) {
    const double saved = value;
    value = saved + step_size;
    const double up = loss(scratch);
    value = saved - step_size;
    const double down = loss(scratch);
    value = saved;
    const double numeric = (up - down) / (2.0 * step_size);
    // Floor at 1e-6: below that, the central-difference quotient is dominated
    // by rounding noise (~1e-11 on O(1) losses at this step size) and cannot
    // certify a relative tolerance.
    const double scale = std::max({1e-6, std::abs(analytic_grad), std::abs(numeric)});
    worst = std::max(worst, std::abs(analytic_grad - numeric) / scale);
  };
  for (std::size_t l = 0; l < scratch.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < scratch.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < scratch.weights[l].cols(); ++c) {
        probe_param(scratch.weights[l](r, c), analytic.weights[l](r, c));
      }
    }
    for (Eigen::Index r = 0; r < scratch.biases[l].size(); ++r) {
      probe_param(scratch.biases[l](r), analytic.biases[l](r));
    }
  }
  return worst;
}

std::string mlp_to_json(const Mlp& net) {
  json arch;
  arch["layer_dims"] = net.layer_dims;
  json acts = json::array();
  for (Activation a : net.activations) acts.push_back(activation_name(a));
  arch["activations"] = acts;
  arch["rng_seed"] = net.rng_seed;

  json params = json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(net.weights[l].size()));
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) w.push_back(net.weights[l](r, c));
    }
    params.push_back(w);
    std::vector<double> b(net.biases[l].data(), net.biases[l].data() + net.biases[l].size());
    params.push_back(b);
  }
  return json{{"version", 1}, {"arch", arch}, {"params", params}}.dump();
}

Mlp mlp_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("mlp checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) {
      throw ParseError("mlp checkpoint: unsupported version");
    }
    const json& arch = j.at("arch");
    Mlp net;
    net.layer_dims = arch.at("layer_dims").get<std::vector<int>>();
    for (const auto& name : arch.at("activations")) {
      net.activations.push_back(parse_activation(name.get<std::string>()));
    }
    net.rng_seed = arch.at("rng_seed").get<std::uint64_t>();
    const json& params = j.at("params");
    if (params.size() != 2 * (net.layer_dims.size() - 1)) {
      throw ParseError("mlp checkpoint: wrong tensor count");
    }
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
      const auto w = params.at(2 * l).get<std::vector<double>>();
      const auto b = params.at(2 * l + 1).get<std::vector<double>>();
      const int rows = net.layer_dims[l + 1];
      const int cols = net.layer_dims[l];
      if (static_cast<int>(w.size()) != rows * cols || static_cast<int>(b.size()) != rows) {
        throw ParseError("mlp checkpoint: tensor size mismatch at layer " + std::to_string(l));
      }
      Eigen::MatrixXd weight(rows, cols);
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
      }
      net.weights.push_back(std::move(weight));
      net.biases.push_back(
          Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
    }
    check_shapes(net);
    return net;
  } catch (const json::exception& e) {
    throw ParseError(std::string("mlp checkpoint: malformed document: ") + e.what());
  }
}

}  // namespace idxsel::nn
