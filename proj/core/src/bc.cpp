#include "lfd/bc.hpp"

#include <cmath>

#include "lfd/error.hpp"

namespace lfd {

void BcConfig::validate() const {
  if (strength < 0) throw Error(ErrorCode::kConfigError, "bc: strength must be non-negative");
  if (active_steps < 0) throw Error(ErrorCode::kConfigError, "bc: active_steps must be non-negative");
  if (batch_size <= 0) throw Error(ErrorCode::kConfigError, "bc: batch_size must be positive");
}

bool bc_active(const BcConfig& config, long trainer_step) {
  return config.strength > 0 && trainer_step >= 0 && trainer_step < config.active_steps;
}

BcBatch bc_batch_from(const TransitionTable& demos, std::span<const Eigen::Index> idx) {
  BcBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.obs.resize(kObsDim, n);
  b.deltas.resize(6, n);
  b.cmds.resize(idx.size());
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index k = idx[static_cast<size_t>(j)];
    b.obs.col(j) = demos.obs.col(k);
    b.deltas.col(j) = demos.deltas.col(k);
    b.cmds[static_cast<size_t>(j)] = demos.cmds[static_cast<size_t>(k)];
  }
  return b;
}

BcBatch sample_bc_batch(const TransitionTable& demos, int batch_size, Rng& rng) {
  if (demos.size() == 0) throw Error(ErrorCode::kConfigError, "BC needs a nonempty demonstration set");
  std::uniform_int_distribution<Eigen::Index> pick(0, demos.size() - 1);
  std::vector<Eigen::Index> idx(static_cast<size_t>(batch_size));
  for (auto& i : idx) i = pick(rng);
  return bc_batch_from(demos, idx);
}

double bc_loss(const ActorCritic& policy, const BcBatch& batch, double strength, PolicyGrads* grads) {
  const Eigen::Index b = batch.obs.cols();
  if (b == 0) throw Error(ErrorCode::kConfigError, "BC batch is empty");
  const double w = strength / static_cast<double>(b);
  ActorCritic::Cache cache;
  const Eigen::MatrixXd out = policy.forward_actor(batch.obs, cache);
  const Eigen::VectorXd ls = policy.log_std();

  double loss = 0.0;
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(kActorOutputs, b);
  Eigen::VectorXd d_ls = Eigen::VectorXd::Zero(kMeanRows);
  Eigen::VectorXd dm(kMeanRows), dl(kMeanRows);
  for (Eigen::Index j = 0; j < b; ++j) {
    const auto mean = out.col(j).head<kMeanRows>();
    const Eigen::VectorXd logits = out.col(j).segment<kLogitRows>(kMeanRows);
    const int cmd = batch.cmds[static_cast<size_t>(j)];
    loss -= w * (gaussian_logprob(mean, ls, batch.deltas.col(j)) + categorical_logprob(logits, cmd));
    if (!grads) continue;
    gaussian_logprob_grad(mean, ls, batch.deltas.col(j), dm, dl);
    d_out.col(j).head<kMeanRows>() = -w * dm;
    d_ls -= w * dl;
    d_out.col(j).segment<kLogitRows>(kMeanRows) = -w * categorical_logprob_grad(logits, cmd);
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::kNonFiniteLoss, "BC loss is not finite");
  if (grads && strength != 0.0) {
    PolicyGrads g = policy.backward(cache, d_out, d_ls);
    if (grads->empty()) {
      *grads = std::move(g);
    } else {
      *grads += g;
    }
  }
  return loss;
}

double bc_action_error(const ActorCritic& policy, const BcBatch& batch) {
  ActorCritic::Cache cache;
  const Eigen::MatrixXd out = policy.forward_actor(batch.obs, cache);
  const Eigen::MatrixXd mean = out.topRows(kMeanRows).cwiseMax(-1.0).cwiseMin(1.0);
  return (mean - batch.deltas).squaredNorm() / static_cast<double>(batch.obs.cols());
}

AuxLoss make_bc_aux(const TransitionTable& demos, const BcConfig& config, Rng& rng) {
  return [&demos, config, &rng](const ActorCritic& policy, PolicyGrads& grads) {
    const BcBatch batch = sample_bc_batch(demos, config.batch_size, rng);
    return bc_loss(policy, batch, config.strength, &grads);
  };
}

}  // namespace lfd
