#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <deque>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mockforge/core.hpp"

namespace mockforge::tensor {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily on first backward
  bool requires_grad = false;
  std::uint64_t seq = 0;     // recording order on the tape
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Shared handle to a node of the dynamic computation graph.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Direct write access; only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  double item() const;
  double at(std::size_t flat) const { return node_->value.at(flat); }

  /// Same values, cut from the graph.
  Tensor detach() const;
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- forward ops -------------------------------------------------------------

/// [..., k] x [k, n] -> [..., n]; leading axes are flattened.
Tensor matmul(const Tensor& a, const Tensor& b);
/// [g, m, k] x [g, k, n] -> [g, m, n]; with transpose_b, b is [g, n, k].
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
/// Same shape, or b of shape [last axis of a] (trailing-axis bias).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double lo);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
/// Reduces the last axis.
Tensor logsumexp(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Rows of table [V, d] selected by ids -> [ids.size(), d].
Tensor embedding(const Tensor& table, std::span<const int> ids);
/// Positions where mask != 0 are replaced by value (and receive no gradient).
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);
Tensor reshape(const Tensor& a, Shape shape);
/// [a, b, c, d] -> [a, c, b, d]
Tensor permute_0213(const Tensor& a);
/// [N, C] gathered at idx[N] -> [N]
Tensor pick(const Tensor& a, std::span<const int> idx);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Inverted dropout with keep-mask drawn from rng; identity when p == 0.
Tensor dropout(const Tensor& a, double p, Rng& rng);

// ---- backward ----------------------------------------------------------------

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; callers
/// zero them between steps (ParameterStore::zero_grad).
void backward(const Tensor& loss);

// ---- parameters, optimizer, snapshots -----------------------------------------

class ParameterStore {
 public:
  Tensor& add(std::string name, Tensor t);
  /// Xavier-uniform initialized matrix/vector parameter.
  Tensor& add_xavier(std::string name, Shape shape, Rng& rng);
  Tensor& add_constant(std::string name, Shape shape, double value);

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  bool contains(std::string_view name) const;
  const std::deque<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::deque<std::pair<std::string, Tensor>> items_;  // stable references across add()
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(ParameterStore& params, AdamConfig config = {});

  /// One bias-corrected update from the gradients currently stored on the parameters.
  /// Throws NumericalError naming the parameter when a gradient is not finite.
  void step();
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  double learning_rate() const { return config_.learning_rate; }
  std::uint64_t step_count() const { return steps_; }
  const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
  const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

 private:
  ParameterStore* params_;
  AdamConfig config_;
  std::uint64_t steps_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

struct GradCheckOptions {
  double delta = 1e-3;
  std::size_t max_coords_per_param = 10;
  std::uint64_t seed = 7;
};

/// Central finite differences against backward; returns the worst over sampled
/// coordinates of |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|), taking each
/// coordinate's best of the step sizes delta, delta/10, delta/100.
double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params, const GradCheckOptions& opt = {});

/// Manifest (name -> shape, dtype, byte offset) plus one little-endian blob.
std::pair<nlohmann::json, std::string> snapshot(const ParameterStore& params);
/// Copies values into an existing store, verifying names and shapes.
void restore(ParameterStore& params, const nlohmann::json& manifest, std::string_view blob);

}  // namespace mockforge::tensor
