#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace confrag {

enum class Activation { relu, tanh };
enum class Loss { bce_logits, mse };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);
std::string to_string(Loss l);

struct NetSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims{16};
  std::size_t output_dim = 1;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const NetSpec&) const = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

// Fully connected network. Every hidden layer applies the activation; the
// head is affine. The last hidden layer's post-activation values are the
// "features" exposed for nearest-neighbor queries.
struct Net {
  NetSpec spec;
  std::vector<Layer> layers;

  void validate() const;
  std::size_t parameter_count() const;
};

// Row-major batch: one sample per row.
struct Batch {
  Eigen::MatrixXd inputs;   // n x input_dim
  Eigen::MatrixXd targets;  // n x output_dim
};

struct ForwardResult {
  Eigen::VectorXd output;
  Eigen::VectorXd features;
};

struct BatchForward {
  Eigen::MatrixXd outputs;   // n x output_dim
  Eigen::MatrixXd features;  // n x last hidden dim
};

// Uniform fan-in initialization (limit sqrt(6/fan_in) for relu, sqrt(3/fan_in)
// for tanh), zero biases.
Net net_init(const NetSpec& spec);

ForwardResult net_forward(const Net& net, std::span<const double> x);
BatchForward forward_batch(const Net& net, const Eigen::MatrixXd& inputs);

// Mean loss over all batch elements.
double loss_value(const Net& net, const Batch& batch, Loss loss);

struct Gradients {
  double loss = 0.0;
  std::vector<Layer> layers;
};
Gradients compute_gradients(const Net& net, const Batch& batch, Loss loss);

// One gradient-descent step; returns the loss before the step. Throws if the
// loss is not finite.
double train_step(Net& net, const Batch& batch, Loss loss, double lr);

// Largest relative error between analytic and central-difference gradients.
// Errors use max(|analytic|, |numeric|, 1e-6) as denominator, so near-zero
// gradients fall back to absolute error. For relu, parameters whose
// perturbation flips the sign of any hidden pre-activation are skipped.
double grad_check(const Net& net, const Batch& batch, Loss loss, double eps);

// JSON checkpoint with a spec header; reloads bit-exactly.
std::string net_to_json(const Net& net);
Net net_from_json(const std::string& text);
void save_net(const Net& net, const std::filesystem::path& path);
Net load_net(const std::filesystem::path& path);

}  // namespace confrag
