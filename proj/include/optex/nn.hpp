#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace optex::nn {

enum class Activation { identity, tanh };

/// Dense feed-forward network with ReLU hidden layers. Inputs and outputs are
/// column-major batches: one sample per column.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::size_t>& sizes, Activation output, std::mt19937_64& rng);

  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, then each layer's output
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;
    void zero_like(const Mlp& net);
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;

  /// Backpropagates dL/d(output) through the cached pass. Parameter gradients
  /// are written into grads (if non-null); returns dL/d(input). grad_pre_out,
  /// when given, is an extra gradient on the output layer's pre-activation.
  Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& grad_out, Gradients* grads,
                           const Eigen::MatrixXd* grad_pre_out = nullptr) const;

  /// Output-layer pre-activation of a cached pass.
  Eigen::MatrixXd pre_activation(const Cache& cache) const;

  /// target <- tau * source + (1 - tau) * target
  void soft_update_from(const Mlp& source, double tau);

  std::size_t input_size() const { return W.empty() ? 0 : static_cast<std::size_t>(W.front().cols()); }
  std::size_t output_size() const { return W.empty() ? 0 : static_cast<std::size_t>(W.back().rows()); }
  std::size_t parameter_count() const;
  bool finite() const;

  nlohmann::json to_json() const;
  static Mlp from_json(const nlohmann::json& j);

  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  Activation output_activation = Activation::identity;
};

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Mlp& net, const Mlp::Gradients& g);
  double learning_rate() const { return lr_; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  long t_ = 0;
  Mlp::Gradients m_, v_;
};

}  // namespace optex::nn
