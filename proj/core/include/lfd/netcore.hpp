#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace lfd {

using Rng = std::mt19937_64;

// SplitMix64 finalizer over (base, stream): independent seeds for sub-streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Orthogonal initialization scaled by `gain` (QR of a Gaussian matrix).
void orthogonal_init(Eigen::MatrixXd& w, double gain, Rng& rng);

// Parameter-shaped gradient accumulator.
struct MlpGrads {
  std::vector<DenseLayer> layers;

  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
  double squared_norm() const;
  std::vector<std::span<const double>> spans() const;
};

// Dense tanh network with a linear output layer. Batches are column-major:
// one sample per column.
class Mlp {
 public:
  struct Cache {
    // activations[0] is the input, activations[l] the tanh output of hidden
    // layer l. The linear output is not cached.
    std::vector<Eigen::MatrixXd> activations;
  };

  Mlp() = default;
  // sizes = {in, hidden..., out}. Hidden layers use gain sqrt(2); the output
  // layer uses `output_gain`. Biases start at zero.
  Mlp(const std::vector<int>& sizes, Rng& rng, double output_gain = 0.01);

  int input_dim() const;
  int output_dim() const;
  size_t num_layers() const { return layers_.size(); }
  size_t num_params() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache& cache) const;

  // Reverse-mode pass: d_out is dLoss/dOutput for the cached batch.
  MlpGrads backward(const Cache& cache, const Eigen::MatrixXd& d_out) const;

  MlpGrads zero_grads() const;
  std::vector<std::span<double>> spans();

  bool all_finite() const;
  bool operator==(const Mlp& other) const;

 private:
  std::vector<DenseLayer> layers_;
};

struct AdamConfig {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam over a fixed list of parameter blocks.
class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig config, const std::vector<size_t>& block_sizes);

  void step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads);

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

std::vector<size_t> block_sizes(std::span<const std::span<double>> params);

// Diagonal Gaussian with state-independent log-std.
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

double gaussian_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                        const Eigen::Ref<const Eigen::VectorXd>& log_std,
                        const Eigen::Ref<const Eigen::VectorXd>& action);
// Gradients of the log-density w.r.t. mean and log_std.
void gaussian_logprob_grad(const Eigen::Ref<const Eigen::VectorXd>& mean,
                           const Eigen::Ref<const Eigen::VectorXd>& log_std,
                           const Eigen::Ref<const Eigen::VectorXd>& action,
                           Eigen::Ref<Eigen::VectorXd> d_mean, Eigen::Ref<Eigen::VectorXd> d_log_std);
double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std);
Eigen::VectorXd gaussian_sample(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::VectorXd>& log_std, Rng& rng);

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits);
double categorical_logprob(const Eigen::Ref<const Eigen::VectorXd>& logits, int k);
// d logprob / d logits = onehot(k) - softmax.
Eigen::VectorXd categorical_logprob_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, int k);
double categorical_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits);
Eigen::VectorXd categorical_entropy_grad(const Eigen::Ref<const Eigen::VectorXd>& logits);
int categorical_sample(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng);
int categorical_argmax(const Eigen::Ref<const Eigen::VectorXd>& logits);

}  // namespace lfd
