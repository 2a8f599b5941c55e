#include "optex/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace optex::nn {

Mlp::Mlp(const std::vector<std::size_t>& sizes, Activation output, std::mt19937_64& rng)
    : output_activation(output) {
  if (sizes.size() < 2) throw std::invalid_argument("Mlp needs at least input and output sizes");
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(static_cast<double>(in)),
                                             1.0 / std::sqrt(static_cast<double>(in)));
    Eigen::MatrixXd w(out, in);
    for (Eigen::Index j = 0; j < in; ++j)
      for (Eigen::Index i = 0; i < out; ++i) w(i, j) = u(rng);
    Eigen::VectorXd bias(out);
    for (Eigen::Index i = 0; i < out; ++i) bias(i) = u(rng);
    W.push_back(std::move(w));
    b.push_back(std::move(bias));
  }
}

void Mlp::Gradients::zero_like(const Mlp& net) {
  W.resize(net.W.size());
  b.resize(net.b.size());
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    W[l] = Eigen::MatrixXd::Zero(net.W[l].rows(), net.W[l].cols());
    b[l] = Eigen::VectorXd::Zero(net.b[l].size());
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache* cache) const {
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(x);
  }
  Eigen::MatrixXd h = x;
  const std::size_t L = W.size();
  for (std::size_t l = 0; l < L; ++l) {
    Eigen::MatrixXd z = W[l] * h;
    z.colwise() += b[l];
    if (l + 1 < L) {
      h = z.cwiseMax(0.0);
    } else {
      h = output_activation == Activation::tanh ? Eigen::MatrixXd(z.array().tanh().matrix()) : z;
    }
    if (cache) cache->activations.push_back(h);
  }
  return h;
}

Eigen::MatrixXd Mlp::pre_activation(const Cache& cache) const {
  Eigen::MatrixXd z = W.back() * cache.activations[W.size() - 1];
  z.colwise() += b.back();
  return z;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache, const Eigen::MatrixXd& grad_out, Gradients* grads,
                              const Eigen::MatrixXd* grad_pre_out) const {
  const std::size_t L = W.size();
  if (grads && grads->W.size() != L) grads->zero_like(*this);
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t l = L; l-- > 0;) {
    const Eigen::MatrixXd& out = cache.activations[l + 1];
    if (l + 1 == L) {
      if (output_activation == Activation::tanh) delta = delta.cwiseProduct((1.0 - out.array().square()).matrix());
      if (grad_pre_out) delta += *grad_pre_out;
    } else {
      delta = delta.cwiseProduct((out.array() > 0.0).cast<double>().matrix());
    }
    if (grads) {
      grads->W[l].noalias() = delta * cache.activations[l].transpose();
      grads->b[l] = delta.rowwise().sum();
    }
    delta = W[l].transpose() * delta;
  }
  return delta;
}

void Mlp::soft_update_from(const Mlp& source, double tau) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l] = tau * source.W[l] + (1.0 - tau) * W[l];
    b[l] = tau * source.b[l] + (1.0 - tau) * b[l];
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += static_cast<std::size_t>(W[l].size() + b[l].size());
  return n;
}

bool Mlp::finite() const {
  for (std::size_t l = 0; l < W.size(); ++l)
    if (!W[l].allFinite() || !b[l].allFinite()) return false;
  return true;
}

nlohmann::json Mlp::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < W.size(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < W[l].rows(); ++i) {
      std::vector<double> r(static_cast<std::size_t>(W[l].cols()));
      for (Eigen::Index j = 0; j < W[l].cols(); ++j) r[static_cast<std::size_t>(j)] = W[l](i, j);
      rows.push_back(r);
    }
    std::vector<double> bias(b[l].data(), b[l].data() + b[l].size());
    layers.push_back({{"W", rows}, {"b", bias}, {"activation", l + 1 < W.size() ? "relu" : (
        output_activation == Activation::tanh ? "tanh" : "identity")}});
  }
  return {{"layers", layers}};
}

Mlp Mlp::from_json(const nlohmann::json& j) {
  Mlp net;
  const auto& layers = j.at("layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto rows = layers[l].at("W").get<std::vector<std::vector<double>>>();
    const auto bias = layers[l].at("b").get<std::vector<double>>();
    if (rows.empty() || rows.size() != bias.size()) throw std::runtime_error("malformed layer in weight file");
    Eigen::MatrixXd w(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows[0].size()) throw std::runtime_error("ragged weight matrix in weight file");
      for (std::size_t c = 0; c < rows[i].size(); ++c)
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
    }
    if (l > 0 && w.cols() != net.W.back().rows()) throw std::runtime_error("layer shapes do not chain");
    net.W.push_back(std::move(w));
    net.b.push_back(Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size())));
    if (l + 1 == layers.size())
      net.output_activation = layers[l].value("activation", "identity") == "tanh" ? Activation::tanh
                                                                                : Activation::identity;
  }
  return net;
}

Adam::Adam(const Mlp& net, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.zero_like(net);
  v_.zero_like(net);
}

void Adam::step(Mlp& net, const Mlp::Gradients& g) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = beta1_ * m + (1.0 - beta1_) * grad;
    v = beta2_ * v + (1.0 - beta2_) * grad.cwiseProduct(grad);
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  };
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    update(net.W[l], g.W[l], m_.W[l], v_.W[l]);
    update(net.b[l], g.b[l], m_.b[l], v_.b[l]);
  }
}

}  // namespace optex::nn
