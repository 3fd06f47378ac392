#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "idxsel/common.hpp"

namespace idxsel::nn {

enum class Activation { relu, tanh, sigmoid, linear };

Activation parse_activation(const std::string& s);
std::string activation_name(Activation a);

// Plain feedforward net. weights[l] is (layer_dims[l+1] x layer_dims[l]);
// one activation per affine layer.
struct Mlp {
  std::vector<int> layer_dims;
  std::vector<Activation> activations;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  std::uint64_t rng_seed = 0;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  std::size_t param_count() const;
};

// Uniform fan-in init (U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and
// biases); pure function of (dims, activations, seed).
Mlp make_mlp(const std::vector<int>& layer_dims, const std::vector<Activation>& activations,
             std::uint64_t seed);

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void add_scaled(const Gradients& other, double scale);
  void scale(double factor);
  void clear();
};

Gradients zero_gradients(const Mlp& net);

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& input);

// Exact reverse-mode gradients of upstream_grad . forward(net, input).
// input_grad receives d(loss)/d(input) when non-null.
Gradients backward(const Mlp& net, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream_grad, Eigen::VectorXd* input_grad = nullptr);

struct AdamState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> m_weights, v_weights;
  std::vector<Eigen::VectorXd> m_biases, v_biases;
};

AdamState make_adam(const Mlp& net, double learning_rate);

// Standard bias-corrected Adam update, in place.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

// target <- tau*online + (1-tau)*target; tau in (0,1].
void soft_update(Mlp& target, const Mlp& online, double tau);

// Max relative error between backward() and central finite differences of a
// random linear functional of the output, over all parameters.
double gradient_check(const Mlp& net, std::uint64_t seed, double step_size = 1e-5);

// {"version","arch","params"} round trip.
std::string mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const std::string& text);

namespace test_hooks {
// Additive corruption of every activation derivative inside backward();
// exists so the gradient checker can be shown to catch a broken derivative.
extern double activation_derivative_bias;
}  // namespace test_hooks

}  // namespace idxsel::nn
