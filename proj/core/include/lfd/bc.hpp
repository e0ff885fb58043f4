#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "lfd/demos.hpp"
#include "lfd/policy.hpp"
#include "lfd/ppo.hpp"

namespace lfd {

struct BcConfig {
  double strength = 0.5;
  long active_steps = 100000;  // BC applies on [0, active_steps)
  int batch_size = 512;

  void validate() const;
};

bool bc_active(const BcConfig& config, long trainer_step);

struct BcBatch {
  Eigen::MatrixXd obs;     // kObsDim x n
  Eigen::MatrixXd deltas;  // 6 x n
  std::vector<int> cmds;
};

BcBatch sample_bc_batch(const TransitionTable& demos, int batch_size, Rng& rng);
BcBatch bc_batch_from(const TransitionTable& demos, std::span<const Eigen::Index> idx);

// strength * mean negative log-likelihood of the demonstrated actions
// (Gaussian joint deltas + categorical command). Adds its gradient into
// `grads` when given; `grads` must be shaped like the policy or empty.
double bc_loss(const ActorCritic& policy, const BcBatch& batch, double strength, PolicyGrads* grads = nullptr);

// Mean squared joint-delta error of the deterministic policy.
double bc_action_error(const ActorCritic& policy, const BcBatch& batch);

// Auxiliary loss hook for ppo_update; draws batches from its own rng.
AuxLoss make_bc_aux(const TransitionTable& demos, const BcConfig& config, Rng& rng);

}  // namespace lfd
