#pragma once

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

#include "bidex/rng.hpp"

namespace bidex::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Named view into a parameter array. Biases are stored as n x 1 matrices so
/// every parameter, gradient, and optimizer moment shares one shape system.
struct ParamRef {
  std::string name;
  Matrix* value;
};

using GradList = std::vector<Matrix>;

enum class OutputActivation { None, Tanh };

struct MlpSpec {
  int input_width = 1;
  std::vector<int> hidden;
  int output_width = 1;
  OutputActivation output_activation = OutputActivation::None;
};

/// Fully connected network with ELU hidden activations. Batches are
/// row-major: one sample per row.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const MlpSpec& spec, RngStream& rng, double output_gain = 1.0,
      const std::string& name = "mlp");

  struct Cache {
    Matrix input;
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // activation output per layer
  };

  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;

  /// Exact reverse-mode gradients; returns dLoss/dInput and appends
  /// parameter gradients (same order as params()) into grads.
  Matrix backward(const Cache& cache, const Matrix& upstream,
                  GradList& grads) const;

  std::vector<ParamRef> params();
  std::vector<ParamRef> params() const;
  const MlpSpec& spec() const { return spec_; }
  std::size_t num_layers() const { return weights_.size(); }

 private:
  MlpSpec spec_;
  std::string name_;
  mutable std::vector<Matrix> weights_;  // out x in
  mutable std::vector<Matrix> biases_;   // out x 1
};

struct PointEncoderSpec {
  std::vector<int> per_point = {32, 32};
  std::vector<int> post_pool = {128};
  int output_width = 128;
};

/// Shared per-point MLP, concatenated max and mean pooling over the point
/// axis, then a post-pool MLP. Permutation invariant by construction.
class PointEncoder {
 public:
  PointEncoder() = default;
  PointEncoder(const PointEncoderSpec& spec, RngStream& rng,
               const std::string& name = "encoder");

  struct Cache {
    Mlp::Cache per_point;
    Mlp::Cache post;
    Matrix point_features;  // (N*P) x F
    std::vector<Eigen::Index> argmax;  // N*F winners of the max pool
    Eigen::Index batch = 0;
    Eigen::Index points_per_sample = 0;
  };

  /// points: (N*P) x 3 with sample-major rows; returns N x output_width.
  Matrix forward(const Matrix& points, Eigen::Index points_per_sample,
                 Cache* cache = nullptr) const;
  Matrix backward(const Cache& cache, const Matrix& upstream,
                  GradList& grads) const;

  std::vector<ParamRef> params();
  const PointEncoderSpec& spec() const { return spec_; }

 private:
  PointEncoderSpec spec_;
  Mlp per_point_;
  Mlp post_;
};

struct AdamWConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Decoupled-weight-decay Adam over a fixed parameter list.
class AdamW {
 public:
  AdamW() = default;
  AdamW(std::vector<ParamRef> params, const AdamWConfig& config);

  /// Applies one update; throws std::runtime_error naming the parameter on a
  /// non-finite gradient.
  void step(const GradList& grads);

  std::size_t step_count() const { return step_count_; }
  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

  /// Moment arrays in parameter order, exposed for checkpointing.
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  void set_step_count(std::size_t n) { step_count_ = n; }
  const std::vector<ParamRef>& tracked_params() const { return params_; }

 private:
  std::vector<ParamRef> params_;
  AdamWConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t step_count_ = 0;
};

/// Scales the whole gradient list so its global L2 norm is at most max_norm;
/// returns the pre-clip norm.
double clip_grad_norm(GradList& grads, double max_norm);

/// Central finite differences against analytic gradients over a random
/// subset of at least min_coords parameter coordinates. loss_fn re-runs the
/// forward pass; grads holds the analytic result for the unperturbed point.
/// Returns the maximum relative error.
double gradient_check(std::vector<ParamRef> params, const GradList& grads,
                      const std::function<double()>& loss_fn, RngStream& rng,
                      std::size_t min_coords = 200, double h = 1e-5);

}  // namespace bidex::nn
