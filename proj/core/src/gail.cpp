#include "lfd/gail.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfd/error.hpp"

namespace lfd {
namespace {

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

bool grads_finite(const MlpGrads& g) {
  for (const auto& l : g.layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

}  // namespace

void GailConfig::validate() const {
  if (batch_size <= 0 || passes < 0) throw Error(ErrorCode::kConfigError, "gail: batch_size and passes");
  if (!(gamma >= 0 && gamma <= 1)) throw Error(ErrorCode::kConfigError, "gail: gamma must lie in [0, 1]");
}

Discriminator::Discriminator(const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes{kDiscInputDim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  net_ = Mlp(sizes, rng, 0.01);
}

Eigen::VectorXd Discriminator::logits(const Eigen::MatrixXd& x) const {
  return net_.forward(x).row(0).transpose().cwiseMax(-kDiscLogitClamp).cwiseMin(kDiscLogitClamp);
}

Eigen::VectorXd Discriminator::probabilities(const Eigen::MatrixXd& x) const {
  return logits(x).unaryExpr([](double z) { return sigmoid(z); });
}

Eigen::VectorXd Discriminator::rewards(const Eigen::MatrixXd& x) const {
  // -log sigmoid(z) = softplus(-z)
  return logits(x).unaryExpr([](double z) { return softplus(-z); });
}

Eigen::MatrixXd disc_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& encoded) {
  if (obs.rows() != kObsDim || encoded.rows() != kActionDim || obs.cols() != encoded.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "discriminator input blocks do not match the schema");
  }
  Eigen::MatrixXd x(kDiscInputDim, obs.cols());
  x.topRows(kObsDim) = obs;
  x.bottomRows(kActionDim) = encoded;
  return x;
}

double surrogate_reward(const Discriminator& disc, const ObsVec& obs, const ActionVec& action) {
  Eigen::MatrixXd x(kDiscInputDim, 1);
  x.col(0) << obs, action;
  return disc.rewards(x)[0];
}

double disc_loss(const Discriminator& disc, const Eigen::MatrixXd& expert, const Eigen::MatrixXd& agent,
                 MlpGrads* grads) {
  if (expert.cols() == 0 || agent.cols() == 0) {
    throw Error(ErrorCode::kConfigError, "discriminator batches must be nonempty");
  }
  const Eigen::Index ne = expert.cols(), na = agent.cols();
  Eigen::MatrixXd x(kDiscInputDim, ne + na);
  x.leftCols(ne) = expert;
  x.rightCols(na) = agent;

  Mlp::Cache cache;
  const Eigen::RowVectorXd z = disc.net().forward(x, cache).row(0);
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(1, ne + na);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < ne + na; ++j) {
    const bool is_agent = j >= ne;
    const double w = 1.0 / static_cast<double>(is_agent ? na : ne);
    const double zc = std::clamp(z[j], -kDiscLogitClamp, kDiscLogitClamp);
    loss += w * softplus(is_agent ? -zc : zc);
    const bool inside = z[j] > -kDiscLogitClamp && z[j] < kDiscLogitClamp;
    if (inside) d_out(0, j) = w * (is_agent ? sigmoid(zc) - 1.0 : sigmoid(zc));
  }
  if (grads) *grads = disc.net().backward(cache, d_out);
  return loss;
}

Adam make_disc_optimizer(Discriminator& disc, const AdamConfig& config) {
  const auto spans = disc.net().spans();
  return Adam(config, block_sizes(spans));
}

double disc_update(Discriminator& disc, Adam& adam, const Eigen::MatrixXd& expert, const Eigen::MatrixXd& agent) {
  // balanced batches, so neither side dominates the logistic loss
  if (expert.cols() == 0 || expert.cols() != agent.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "discriminator batches must be nonempty and equal-sized");
  }
  MlpGrads g;
  const double loss = disc_loss(disc, expert, agent, &g);
  if (!std::isfinite(loss) || !grads_finite(g)) {
    throw Error(ErrorCode::kNonFiniteLoss, "discriminator loss is not finite");
  }
  adam.step(disc.net().spans(), g.spans());
  return loss;
}

GailStats gail_iteration(Discriminator& disc, Adam& adam, RolloutBuffer& buf, const TransitionTable& demos,
                         const GailConfig& config, Rng& rng) {
  if (demos.size() == 0) throw Error(ErrorCode::kConfigError, "GAIL needs a nonempty demonstration set");
  const Eigen::Index n = buf.size();
  const auto b = static_cast<Eigen::Index>(config.batch_size);

  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::uniform_int_distribution<Eigen::Index> pick(0, demos.size() - 1);

  GailStats stats;
  int updates = 0;
  Eigen::MatrixXd expert(kDiscInputDim, b), agent(kDiscInputDim, b);
  for (int pass = 0; pass < config.passes; ++pass) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (Eigen::Index start = 0; start + b <= n; start += b) {
      for (Eigen::Index j = 0; j < b; ++j) {
        const Eigen::Index a = idx[static_cast<size_t>(start + j)];
        agent.col(j) << buf.obs.col(a), buf.encoded.col(a);
        const Eigen::Index e = pick(rng);
        expert.col(j) << demos.obs.col(e), demos.encoded.col(e);
      }
      stats.disc_loss += disc_update(disc, adam, expert, agent);
      ++updates;
    }
  }
  if (updates > 0) {
    stats.disc_loss /= updates;
    stats.expert_prob = disc.probabilities(expert).mean();
    stats.agent_prob = disc.probabilities(agent).mean();
  }
  buf.rewards_gail = disc.rewards(disc_input(buf.obs, buf.encoded));
  stats.mean_reward = n > 0 ? buf.rewards_gail.mean() : 0.0;
  return stats;
}

double roc_auc(std::span<const double> positives, std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) return 0.5;
  // Mann-Whitney U with midranks for ties.
  std::vector<std::pair<double, int>> all;
  all.reserve(positives.size() + negatives.size());
  for (double p : positives) all.emplace_back(p, 1);
  for (double q : negatives) all.emplace_back(q, 0);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  for (size_t i = 0; i < all.size();) {
    size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (size_t k = i; k < j; ++k) {
      if (all[k].second) rank_sum += mid;
    }
    i = j;
  }
  const double np = static_cast<double>(positives.size()), nn = static_cast<double>(negatives.size());
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

}  // namespace lfd
