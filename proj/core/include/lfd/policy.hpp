#pragma once

#include <Eigen/Core>

#include <vector>

#include "lfd/netcore.hpp"
#include "lfd/tilesim.hpp"

namespace lfd {

// Rows of the combined output block: 6 Gaussian means and 3 command logits
// from the actor, then 1 value from the critic.
inline constexpr int kMeanRows = 6;
inline constexpr int kLogitRows = kNumEffectorCmds;
inline constexpr int kActorOutputs = kMeanRows + kLogitRows;
inline constexpr int kValueRow = kActorOutputs;
inline constexpr int kPolicyOutputs = kValueRow + 1;

struct PolicySample {
  AgentAction action;       // clipped, as sent to the env
  Vec6 raw = Vec6::Zero();  // unclipped Gaussian draw; log-probs are taken on this
  int cmd = 0;
  double logprob = 0.0;
  double value = 0.0;
};

// Gradient of a scalar loss w.r.t. all policy parameters.
struct PolicyGrads {
  MlpGrads actor;
  MlpGrads critic;
  Eigen::VectorXd log_std;

  bool empty() const { return actor.layers.empty(); }
  std::vector<std::span<const double>> spans() const;
  bool all_finite() const;
  double squared_norm() const;
  PolicyGrads& operator+=(const PolicyGrads& other);
  PolicyGrads& operator*=(double s);
};

// Hybrid action policy (actor) and a separate value network (critic). The
// critic shares no weights, so value regression cannot disturb the actor.
class ActorCritic {
 public:
  struct Cache {
    Mlp::Cache actor;
    Mlp::Cache critic;
    bool has_critic = false;
  };

  ActorCritic() = default;
  ActorCritic(const std::vector<int>& hidden, Rng& rng, double init_log_std = -0.5);

  // Combined block (kPolicyOutputs x batch).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& obs, Cache& cache) const;
  // Actor rows only (kActorOutputs x batch); the cache then has no critic part.
  Eigen::MatrixXd forward_actor(const Eigen::MatrixXd& obs, Cache& cache) const;
  // d_out has kPolicyOutputs rows, or kActorOutputs after forward_actor.
  PolicyGrads backward(const Cache& cache, const Eigen::MatrixXd& d_out, const Eigen::VectorXd& d_log_std) const;

  // The clamped log-std actually used by the distribution.
  Eigen::VectorXd log_std() const;
  // d(clamped)/d(parameter): 1 inside the clamp range, 0 outside.
  Eigen::VectorXd log_std_mask() const;

  PolicySample sample(const ObsVec& obs, Rng& rng) const;
  // Gaussian mean and categorical argmax.
  AgentAction act_deterministic(const ObsVec& obs) const;
  double value(const ObsVec& obs) const;

  const Mlp& actor() const { return actor_; }
  Mlp& actor() { return actor_; }
  const Mlp& critic() const { return critic_; }
  Mlp& critic() { return critic_; }
  const Eigen::VectorXd& log_std_param() const { return log_std_; }
  Eigen::VectorXd& log_std_param() { return log_std_; }

  // Actor blocks, critic blocks, then the log-std block.
  std::vector<std::span<double>> spans();
  bool all_finite() const;
  bool operator==(const ActorCritic& other) const;

 private:
  Mlp actor_;
  Mlp critic_;
  Eigen::VectorXd log_std_;
};

AgentAction action_from(const Vec6& raw, int cmd);
int cmd_index(EffectorCmd c);

}  // namespace lfd
