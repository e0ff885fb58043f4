#include "lfd/netcore.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numbers>

#include "lfd/error.hpp"

namespace lfd {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void orthogonal_init(Eigen::MatrixXd& w, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index rows = w.rows(), cols = w.cols();
  const bool tall = rows >= cols;
  Eigen::MatrixXd a(tall ? rows : cols, tall ? cols : rows);
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
  // Sign fix so the distribution is uniform over orthogonal matrices.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  w = gain * (tall ? q : Eigen::MatrixXd(q.transpose()));
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  for (size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& l : layers) {
    l.weight *= s;
    l.bias *= s;
  }
  return *this;
}

double MlpGrads::squared_norm() const {
  double s = 0.0;
  for (const auto& l : layers) s += l.weight.squaredNorm() + l.bias.squaredNorm();
  return s;
}

std::vector<std::span<const double>> MlpGrads::spans() const {
  std::vector<std::span<const double>> out;
  for (const auto& l : layers) {
    out.emplace_back(l.weight.data(), static_cast<size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<size_t>(l.bias.size()));
  }
  return out;
}

Mlp::Mlp(const std::vector<int>& sizes, Rng& rng, double output_gain) {
  if (sizes.size() < 2) throw Error(ErrorCode::kConfigError, "MLP needs at least input and output sizes");
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    DenseLayer layer;
    layer.weight.resize(sizes[l + 1], sizes[l]);
    const bool is_output = l + 2 == sizes.size();
    orthogonal_init(layer.weight, is_output ? output_gain : std::sqrt(2.0), rng);
    layer.bias = Eigen::VectorXd::Zero(sizes[l + 1]);
    layers_.push_back(std::move(layer));
  }
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

size_t Mlp::num_params() const {
  size_t n = 0;
  for (const auto& l : layers_) n += static_cast<size_t>(l.weight.size() + l.bias.size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Cache unused;
  return forward(x, unused);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Cache& cache) const {
  if (x.rows() != input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "MLP input has " + std::to_string(x.rows()) +
                                                   " rows, expected " + std::to_string(input_dim()));
  }
  cache.activations.clear();
  cache.activations.reserve(layers_.size());
  cache.activations.push_back(x);
  for (size_t l = 0; l + 1 < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weight * cache.activations.back();
    z.colwise() += layers_[l].bias;
    cache.activations.push_back(z.array().tanh().matrix());
  }
  Eigen::MatrixXd out = layers_.back().weight * cache.activations.back();
  out.colwise() += layers_.back().bias;
  return out;
}

MlpGrads Mlp::backward(const Cache& cache, const Eigen::MatrixXd& d_out) const {
  MlpGrads g;
  g.layers.resize(layers_.size());
  Eigen::MatrixXd delta = d_out;
  for (size_t l = layers_.size(); l-- > 0;) {
    const Eigen::MatrixXd& input = cache.activations[l];
    g.layers[l].weight.noalias() = delta * input.transpose();
    g.layers[l].bias = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd back = layers_[l].weight.transpose() * delta;
    // tanh' = 1 - tanh^2, with tanh cached as the layer input.
    delta = back.array() * (1.0 - input.array().square());
  }
  return g;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return g;
}

std::vector<std::span<double>> Mlp::spans() {
  std::vector<std::span<double>> out;
  for (auto& l : layers_) {
    out.emplace_back(l.weight.data(), static_cast<size_t>(l.weight.size()));
    out.emplace_back(l.bias.data(), static_cast<size_t>(l.bias.size()));
  }
  return out;
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weight.rows() != other.layers_[l].weight.rows() ||
        layers_[l].weight.cols() != other.layers_[l].weight.cols() ||
        layers_[l].weight != other.layers_[l].weight || layers_[l].bias != other.layers_[l].bias) {
      return false;
    }
  }
  return true;
}

Adam::Adam(AdamConfig config, const std::vector<size_t>& sizes) : config_(config) {
  for (size_t n : sizes) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
  }
}

void Adam::step(std::span<const std::span<double>> params,
                std::span<const std::span<const double>> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "Adam block count mismatch");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (size_t b = 0; b < params.size(); ++b) {
    auto p = params[b];
    auto g = grads[b];
    auto& m = m_[b];
    auto& v = v_[b];
    if (p.size() != m.size() || g.size() != m.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "Adam block size mismatch");
    }
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

std::vector<size_t> block_sizes(std::span<const std::span<double>> params) {
  std::vector<size_t> out;
  for (const auto& p : params) out.push_back(p.size());
  return out;
}

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
}

double gaussian_logprob(const Eigen::Ref<const Eigen::VectorXd>& mean,
                        const Eigen::Ref<const Eigen::VectorXd>& log_std,
                        const Eigen::Ref<const Eigen::VectorXd>& action) {
  double lp = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double z = (action[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - kHalfLog2Pi;
  }
  return lp;
}

void gaussian_logprob_grad(const Eigen::Ref<const Eigen::VectorXd>& mean,
                           const Eigen::Ref<const Eigen::VectorXd>& log_std,
                           const Eigen::Ref<const Eigen::VectorXd>& action,
                           Eigen::Ref<Eigen::VectorXd> d_mean, Eigen::Ref<Eigen::VectorXd> d_log_std) {
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    const double inv_var = std::exp(-2.0 * log_std[i]);
    const double diff = action[i] - mean[i];
    d_mean[i] = diff * inv_var;
    d_log_std[i] = diff * diff * inv_var - 1.0;
  }
}

double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std) {
  return log_std.sum() + static_cast<double>(log_std.size()) * (0.5 + kHalfLog2Pi);
}

Eigen::VectorXd gaussian_sample(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                const Eigen::Ref<const Eigen::VectorXd>& log_std, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd a(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) a[i] = mean[i] + std::exp(log_std[i]) * normal(rng);
  return a;
}

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

double categorical_logprob(const Eigen::Ref<const Eigen::VectorXd>& logits, int k) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits[k] - lse;
}

Eigen::VectorXd categorical_logprob_grad(const Eigen::Ref<const Eigen::VectorXd>& logits, int k) {
  Eigen::VectorXd g = -softmax(logits);
  g[k] += 1.0;
  return g;
}

double categorical_entropy(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  const Eigen::VectorXd p = softmax(logits);
  double h = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) h -= p[i] * (logits[i] - lse);
  return h;
}

Eigen::VectorXd categorical_entropy_grad(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  // dH/dz_i = -p_i (log p_i + H)
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  const Eigen::VectorXd p = softmax(logits);
  const double h = categorical_entropy(logits);
  Eigen::VectorXd g(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) g[i] = -p[i] * ((logits[i] - lse) + h);
  return g;
}

int categorical_sample(const Eigen::Ref<const Eigen::VectorXd>& logits, Rng& rng) {
  const Eigen::VectorXd p = softmax(logits);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u = uni(rng);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

int categorical_argmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return static_cast<int>(best);
}

}  // namespace lfd
