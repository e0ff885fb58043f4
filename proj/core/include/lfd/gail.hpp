#pragma once

#include <Eigen/Core>

#include <vector>

#include "lfd/demos.hpp"
#include "lfd/netcore.hpp"
#include "lfd/ppo.hpp"

namespace lfd {

inline constexpr int kDiscInputDim = kObsDim + kActionDim;  // 132
inline constexpr double kDiscLogitClamp = 20.0;

struct GailConfig {
  double gamma = 0.99;
  std::vector<int> hidden{256, 256, 256};
  int batch_size = 512;  // per side; each update sees batch_size expert + batch_size agent pairs
  int passes = 1;        // passes over the policy buffer per policy update
  AdamConfig adam{};

  void validate() const;
};

// D(s, a) = probability that the pair came from the agent.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const std::vector<int>& hidden, Rng& rng);

  // Clamped logits, one per column of `x` (kDiscInputDim x n).
  Eigen::VectorXd logits(const Eigen::MatrixXd& x) const;
  Eigen::VectorXd probabilities(const Eigen::MatrixXd& x) const;
  // -log D, bounded to about [0, 20].
  Eigen::VectorXd rewards(const Eigen::MatrixXd& x) const;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }

 private:
  Mlp net_;
};

// Stacks observation columns over action-encoding columns.
Eigen::MatrixXd disc_input(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& encoded);

double surrogate_reward(const Discriminator& disc, const ObsVec& obs, const ActionVec& action);

// Binary cross-entropy with the agent labelled 1:
// mean_agent softplus(-z) + mean_expert softplus(z).
// Its negation is the ascended objective E_agent[log D] + E_expert[log(1 - D)].
double disc_loss(const Discriminator& disc, const Eigen::MatrixXd& expert, const Eigen::MatrixXd& agent,
                 MlpGrads* grads = nullptr);

// One Adam step on disc_loss over equal-sized batches. Throws NonFiniteLoss
// (parameters untouched) or DimensionMismatch for unbalanced batches.
double disc_update(Discriminator& disc, Adam& adam, const Eigen::MatrixXd& expert, const Eigen::MatrixXd& agent);

Adam make_disc_optimizer(Discriminator& disc, const AdamConfig& config);

struct GailStats {
  double disc_loss = 0.0;
  double expert_prob = 0.0;  // mean D on the last expert batch
  double agent_prob = 0.0;   // mean D on the last agent batch
  double mean_reward = 0.0;  // mean stamped reward over the buffer
};

// Balanced discriminator pass(es) over the buffer, then stamps -log D into
// buf.rewards_gail.
GailStats gail_iteration(Discriminator& disc, Adam& adam, RolloutBuffer& buf, const TransitionTable& demos,
                         const GailConfig& config, Rng& rng);

// Area under the ROC curve for scores where positives should score higher.
double roc_auc(std::span<const double> positives, std::span<const double> negatives);

}  // namespace lfd
