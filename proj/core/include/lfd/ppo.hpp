#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "lfd/policy.hpp"
#include "lfd/tilesim.hpp"

namespace lfd {

struct PpoConfig {
  double clip = 0.2;          // zeta
  double value_coef = 0.95;   // c1
  double entropy_coef = 0.01; // c2
  int batch_size = 512;
  int buffer_size = 10240;
  int horizon = 400;
  int epochs = 3;
  double gamma = 0.99;
  double lambda = 0.95;
  double max_grad_norm = 0.0;  // 0 disables global-norm clipping
  AdamConfig adam{};

  void validate() const;
};

// Flat storage of one rollout; env segments are laid out back to back.
struct RolloutBuffer {
  Eigen::MatrixXd obs;      // kObsDim x n
  Eigen::MatrixXd raw;      // 6 x n, unclipped Gaussian draws
  Eigen::MatrixXd encoded;  // kActionDim x n, action as seen by the env
  std::vector<int> cmds;
  Eigen::VectorXd logprobs;
  Eigen::VectorXd rewards_ext;
  Eigen::VectorXd rewards_gail;
  Eigen::VectorXd rewards;     // mixed; GAE runs on this
  Eigen::VectorXd values;
  Eigen::VectorXd next_values; // bootstrap target used at step t
  std::vector<std::uint8_t> dones;  // episode ended at t
  std::vector<std::uint8_t> cuts;   // advantage recursion stops after t
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;

  void resize(Eigen::Index n);
  Eigen::Index size() const { return obs.cols(); }
};

struct EpisodeStats {
  double ext_return = 0.0;
  int length = 0;
  bool picked = false;
  bool installed = false;
};

// Lock-step environments with per-env episode seeds derived from one base.
class EnvPool {
 public:
  EnvPool() = default;
  EnvPool(const SceneConfig& scene, int n_envs, std::uint64_t seed);

  size_t size() const { return envs_.size(); }
  TileEnv& env(size_t i) { return envs_[i]; }

  // Episodes finished since the last call.
  std::vector<EpisodeStats> take_finished();

 private:
  friend RolloutBuffer collect_rollouts(EnvPool& pool, const ActorCritic& policy, const PpoConfig& config,
                                        Rng& rng);
  void start_episode(size_t i);

  std::vector<TileEnv> envs_;
  std::vector<ObsVec> obs_;
  std::vector<EpisodeStats> running_;
  std::vector<std::uint64_t> episode_counter_;
  std::vector<long> horizon_pos_;
  std::vector<EpisodeStats> finished_;
  std::uint64_t seed_ = 0;
};

// Fills buffer_size steps (buffer_size / n_envs per env). rewards = rewards_ext.
RolloutBuffer collect_rollouts(EnvPool& pool, const ActorCritic& policy, const PpoConfig& config, Rng& rng);

// Backward GAE over `rewards`; fills advantages and returns (= A + V).
void compute_gae(RolloutBuffer& buf, double gamma, double lambda);

// Per-buffer normalization to mean 0, std 1.
void normalize_advantages(RolloutBuffer& buf);

struct PpoBatch {
  Eigen::MatrixXd obs;
  Eigen::MatrixXd raw;
  std::vector<int> cmds;
  Eigen::VectorXd old_logprobs;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

PpoBatch gather_batch(const RolloutBuffer& buf, std::span<const Eigen::Index> idx);

struct PpoLossTerms {
  double total = 0.0;      // minimized: -surrogate + c1 * value_loss - c2 * entropy
  double surrogate = 0.0;  // mean min(rho A, clip(rho) A)
  double value_loss = 0.0; // mean (V - R)^2
  double entropy = 0.0;    // mean Gaussian + categorical entropy
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

// Loss on one minibatch; when `grads` is given it receives the exact gradient
// of `total`.
PpoLossTerms ppo_loss(const ActorCritic& policy, const PpoBatch& batch, const PpoConfig& config,
                      PolicyGrads* grads = nullptr);

// Extra loss added to every minibatch (behavior cloning). Returns its value and
// accumulates its gradient.
using AuxLoss = std::function<double(const ActorCritic&, PolicyGrads&)>;

struct PpoUpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double aux_loss = 0.0;
  int minibatches = 0;
};

// K epochs of shuffled minibatch Adam steps. On a non-finite loss or gradient
// the policy and optimizer are restored and NonFiniteLoss is thrown.
PpoUpdateStats ppo_update(ActorCritic& policy, Adam& adam, const RolloutBuffer& buf, const PpoConfig& config,
                          Rng& rng, const AuxLoss& aux = {});

Adam make_policy_optimizer(ActorCritic& policy, const AdamConfig& config);

}  // namespace lfd
