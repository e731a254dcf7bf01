#include "confrag/netcore.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "confrag/random.hpp"

namespace confrag {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Loss l) { return l == Loss::bce_logits ? "bce_logits" : "mse"; }

void NetSpec::validate() const {
  if (input_dim == 0) throw std::invalid_argument("net input_dim must be >= 1");
  if (output_dim == 0) throw std::invalid_argument("net output_dim must be >= 1");
  if (hidden_dims.empty()) throw std::invalid_argument("net needs at least one hidden layer");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("net hidden dims must be >= 1");
  }
}

void Net::validate() const {
  spec.validate();
  if (layers.size() != spec.hidden_dims.size() + 1) throw std::invalid_argument("net layer count does not match spec");
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::size_t out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim;
    const Layer& layer = layers[l];
    if (static_cast<std::size_t>(layer.weight.rows()) != out || static_cast<std::size_t>(layer.weight.cols()) != in ||
        static_cast<std::size_t>(layer.bias.size()) != out) {
      throw std::invalid_argument("net layer " + std::to_string(l) + " has the wrong shape");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw std::invalid_argument("net layer " + std::to_string(l) + " has non-finite parameters");
    }
    in = out;
  }
}

std::size_t Net::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Net net_init(const NetSpec& spec) {
  spec.validate();
  Net net;
  net.spec = spec;
  Rng rng(derive_seed(spec.seed, Stream::net_init));
  const double gain = spec.activation == Activation::relu ? 6.0 : 3.0;
  std::size_t in = spec.input_dim;
  for (std::size_t l = 0; l <= spec.hidden_dims.size(); ++l) {
    const std::size_t out = l < spec.hidden_dims.size() ? spec.hidden_dims[l] : spec.output_dim;
    const double limit = std::sqrt(gain / static_cast<double>(in));
    Layer layer;
    layer.weight.resize(static_cast<Index>(out), static_cast<Index>(in));
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      for (Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = rng.uniform(-limit, limit);
    }
    layer.bias = VectorXd::Zero(static_cast<Index>(out));
    net.layers.push_back(std::move(layer));
    in = out;
  }
  return net;
}

namespace {

void activate(MatrixXd& z, Activation a) {
  if (a == Activation::relu) {
    z = z.cwiseMax(0.0);
  } else {
    z = z.array().tanh().matrix();
  }
}

// Derivative of the activation expressed through its pre- and post-activation
// values.
MatrixXd activation_grad(const MatrixXd& pre, const MatrixXd& post, Activation a) {
  if (a == Activation::relu) return (pre.array() > 0.0).cast<double>().matrix();
  return (1.0 - post.array().square()).matrix();
}

struct Trace {
  std::vector<MatrixXd> pre;   // hidden pre-activations
  std::vector<MatrixXd> post;  // inputs, then hidden activations
  MatrixXd output;
};

Trace run_forward(const Net& net, const MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.cols()) != net.spec.input_dim) {
    throw std::invalid_argument("input has " + std::to_string(inputs.cols()) + " features, net expects " +
                                std::to_string(net.spec.input_dim));
  }
  Trace t;
  t.post.push_back(inputs);
  const std::size_t hidden = net.layers.size() - 1;
  for (std::size_t l = 0; l < hidden; ++l) {
    const Layer& layer = net.layers[l];
    MatrixXd z = t.post.back() * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    t.pre.push_back(z);
    activate(z, net.spec.activation);
    t.post.push_back(std::move(z));
  }
  const Layer& head = net.layers.back();
  t.output = t.post.back() * head.weight.transpose();
  t.output.rowwise() += head.bias.transpose();
  return t;
}

void check_targets(const Net& net, const Batch& batch, Loss loss) {
  if (batch.inputs.rows() != batch.targets.rows()) throw std::invalid_argument("batch inputs and targets differ in rows");
  if (batch.inputs.rows() == 0) throw std::invalid_argument("batch must not be empty");
  if (static_cast<std::size_t>(batch.targets.cols()) != net.spec.output_dim) {
    throw std::invalid_argument("batch targets do not match the net output dimension");
  }
  if (loss == Loss::bce_logits) {
    for (Index i = 0; i < batch.targets.size(); ++i) {
      const double t = batch.targets.data()[i];
      if (t != 0.0 && t != 1.0) throw std::invalid_argument("bce_logits targets must be 0 or 1");
    }
  }
}

double bce_element(double z, double t) { return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double mean_loss(const MatrixXd& output, const MatrixXd& targets, Loss loss) {
  double sum = 0.0;
  for (Index i = 0; i < output.size(); ++i) {
    const double z = output.data()[i];
    const double t = targets.data()[i];
    sum += loss == Loss::bce_logits ? bce_element(z, t) : (z - t) * (z - t);
  }
  return sum / static_cast<double>(output.size());
}

}  // namespace

ForwardResult net_forward(const Net& net, std::span<const double> x) {
  MatrixXd row(1, static_cast<Index>(x.size()));
  for (std::size_t k = 0; k < x.size(); ++k) row(0, static_cast<Index>(k)) = x[k];
  Trace t = run_forward(net, row);
  return {t.output.row(0).transpose(), t.post.back().row(0).transpose()};
}

BatchForward forward_batch(const Net& net, const MatrixXd& inputs) {
  Trace t = run_forward(net, inputs);
  return {std::move(t.output), std::move(t.post.back())};
}

double loss_value(const Net& net, const Batch& batch, Loss loss) {
  check_targets(net, batch, loss);
  return mean_loss(run_forward(net, batch.inputs).output, batch.targets, loss);
}

Gradients compute_gradients(const Net& net, const Batch& batch, Loss loss) {
  check_targets(net, batch, loss);
  Trace t = run_forward(net, batch.inputs);
  Gradients g;
  g.loss = mean_loss(t.output, batch.targets, loss);

  const double scale = 1.0 / static_cast<double>(t.output.size());
  MatrixXd delta(t.output.rows(), t.output.cols());
  for (Index i = 0; i < delta.size(); ++i) {
    const double z = t.output.data()[i];
    const double target = batch.targets.data()[i];
    delta.data()[i] = scale * (loss == Loss::bce_logits ? sigmoid(z) - target : 2.0 * (z - target));
  }

  g.layers.resize(net.layers.size());
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const MatrixXd& input = t.post[l];
    g.layers[l].weight = delta.transpose() * input;
    g.layers[l].bias = delta.colwise().sum().transpose();
    if (l > 0) {
      MatrixXd back = delta * net.layers[l].weight;
      delta = back.cwiseProduct(activation_grad(t.pre[l - 1], t.post[l], net.spec.activation));
    }
  }
  return g;
}

double train_step(Net& net, const Batch& batch, Loss loss, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("learning rate must be finite and >= 0");
  Gradients g = compute_gradients(net, batch, loss);
  if (!std::isfinite(g.loss)) {
    std::ostringstream msg;
    msg << "non-finite " << to_string(loss) << " loss (" << g.loss << ") on a batch of " << batch.inputs.rows()
        << " samples";
    throw std::runtime_error(msg.str());
  }
  if (lr == 0.0) return g.loss;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    net.layers[l].weight -= lr * g.layers[l].weight;
    net.layers[l].bias -= lr * g.layers[l].bias;
  }
  return g.loss;
}

namespace {

std::vector<MatrixXd> hidden_signs(const Net& net, const MatrixXd& inputs) {
  Trace t = run_forward(net, inputs);
  std::vector<MatrixXd> signs;
  for (const MatrixXd& z : t.pre) signs.push_back((z.array() > 0.0).cast<double>().matrix());
  return signs;
}

}  // namespace

double grad_check(const Net& net, const Batch& batch, Loss loss, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("grad_check eps must lie in [1e-7, 1e-3]");
  const Gradients analytic = compute_gradients(net, batch, loss);
  const bool relu = net.spec.activation == Activation::relu;
  const std::vector<MatrixXd> base_signs = relu ? hidden_signs(net, batch.inputs) : std::vector<MatrixXd>{};

  Net probe = net;
  double worst = 0.0;
  auto check = [&](double& param, double grad) {
    const double saved = param;
    param = saved + eps;
    const double plus = loss_value(probe, batch, loss);
    const bool kink_plus = relu && hidden_signs(probe, batch.inputs) != base_signs;
    param = saved - eps;
    const double minus = loss_value(probe, batch, loss);
    const bool kink_minus = relu && hidden_signs(probe, batch.inputs) != base_signs;
    param = saved;
    if (kink_plus || kink_minus) return;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    Layer& layer = probe.layers[l];
    for (Index i = 0; i < layer.weight.size(); ++i) check(layer.weight.data()[i], analytic.layers[l].weight.data()[i]);
    for (Index i = 0; i < layer.bias.size(); ++i) check(layer.bias.data()[i], analytic.layers[l].bias.data()[i]);
  }
  return worst;
}

std::string net_to_json(const Net& net) {
  net.validate();
  nlohmann::json j;
  j["format"] = "confrag-net";
  j["version"] = 1;
  j["spec"] = {{"input_dim", net.spec.input_dim},
               {"hidden_dims", net.spec.hidden_dims},
               {"output_dim", net.spec.output_dim},
               {"activation", to_string(net.spec.activation)},
               {"seed", net.spec.seed}};
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : net.layers) {
    nlohmann::json weight = nlohmann::json::array();
    for (Index r = 0; r < layer.weight.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(layer.weight.cols()));
      for (Index c = 0; c < layer.weight.cols(); ++c) row[static_cast<std::size_t>(c)] = layer.weight(r, c);
      weight.push_back(row);
    }
    std::vector<double> bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
    layers.push_back({{"weight", weight}, {"bias", bias}});
  }
  j["layers"] = layers;
  return j.dump();
}

Net net_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  if (j.value("format", "") != "confrag-net") throw std::runtime_error("not a confrag net checkpoint");
  Net net;
  const auto& s = j.at("spec");
  net.spec.input_dim = s.at("input_dim").get<std::size_t>();
  net.spec.hidden_dims = s.at("hidden_dims").get<std::vector<std::size_t>>();
  net.spec.output_dim = s.at("output_dim").get<std::size_t>();
  net.spec.activation = activation_from_string(s.at("activation").get<std::string>());
  net.spec.seed = s.at("seed").get<std::uint64_t>();
  for (const auto& jl : j.at("layers")) {
    Layer layer;
    const auto& rows = jl.at("weight");
    const auto bias = jl.at("bias").get<std::vector<double>>();
    const auto cols = rows.empty() ? std::size_t{0} : rows.front().size();
    layer.weight.resize(static_cast<Index>(rows.size()), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (row.size() != cols) throw std::runtime_error("ragged weight matrix in checkpoint");
      for (std::size_t c = 0; c < cols; ++c) layer.weight(static_cast<Index>(r), static_cast<Index>(c)) = row[c];
    }
    layer.bias = Eigen::Map<const VectorXd>(bias.data(), static_cast<Index>(bias.size()));
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

void save_net(const Net& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path.string() + "'");
  out << net_to_json(net) << '\n';
}

Net load_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return net_from_json(buf.str());
}

}  // namespace confrag
