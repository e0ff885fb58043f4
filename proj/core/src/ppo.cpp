#include "lfd/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lfd/error.hpp"

namespace lfd {

void PpoConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "ppo: " + what); };
  if (!(clip > 0 && clip < 1)) bad("clip must lie in (0, 1)");
  if (batch_size <= 0 || buffer_size <= 0 || buffer_size % batch_size != 0) {
    bad("buffer_size must be a positive multiple of batch_size");
  }
  if (horizon <= 0 || epochs <= 0) bad("horizon and epochs must be positive");
  if (!(gamma >= 0 && gamma <= 1) || !(lambda >= 0 && lambda <= 1)) bad("gamma and lambda must lie in [0, 1]");
  if (value_coef < 0 || entropy_coef < 0 || max_grad_norm < 0) bad("coefficients must be non-negative");
}

void RolloutBuffer::resize(Eigen::Index n) {
  obs.setZero(kObsDim, n);
  raw.setZero(6, n);
  encoded.setZero(kActionDim, n);
  cmds.assign(static_cast<size_t>(n), 0);
  logprobs.setZero(n);
  rewards_ext.setZero(n);
  rewards_gail.setZero(n);
  rewards.setZero(n);
  values.setZero(n);
  next_values.setZero(n);
  dones.assign(static_cast<size_t>(n), 0);
  cuts.assign(static_cast<size_t>(n), 0);
  advantages.setZero(n);
  returns.setZero(n);
}

EnvPool::EnvPool(const SceneConfig& scene, int n_envs, std::uint64_t seed) : seed_(seed) {
  if (n_envs <= 0) throw Error(ErrorCode::kConfigError, "need at least one environment");
  const auto n = static_cast<size_t>(n_envs);
  envs_.reserve(n);
  for (size_t i = 0; i < n; ++i) envs_.emplace_back(scene);
  obs_.resize(n);
  running_.resize(n);
  episode_counter_.assign(n, 0);
  horizon_pos_.assign(n, 0);
  for (size_t i = 0; i < n; ++i) start_episode(i);
}

void EnvPool::start_episode(size_t i) {
  const std::uint64_t s = derive_seed(derive_seed(seed_, i), episode_counter_[i]++);
  obs_[i] = envs_[i].reset(s);
  running_[i] = EpisodeStats{};
}

std::vector<EpisodeStats> EnvPool::take_finished() {
  std::vector<EpisodeStats> out;
  out.swap(finished_);
  return out;
}

RolloutBuffer collect_rollouts(EnvPool& pool, const ActorCritic& policy, const PpoConfig& config, Rng& rng) {
  const auto n_envs = static_cast<Eigen::Index>(pool.size());
  if (config.buffer_size % n_envs != 0) {
    throw Error(ErrorCode::kConfigError, "buffer_size must be divisible by the number of environments");
  }
  const Eigen::Index per_env = config.buffer_size / n_envs;
  RolloutBuffer buf;
  buf.resize(config.buffer_size);

  for (Eigen::Index t = 0; t < per_env; ++t) {
    for (Eigen::Index e = 0; e < n_envs; ++e) {
      const auto i = static_cast<size_t>(e);
      const Eigen::Index k = e * per_env + t;
      const PolicySample s = policy.sample(pool.obs_[i], rng);
      buf.obs.col(k) = pool.obs_[i];
      buf.raw.col(k) = s.raw;
      buf.encoded.col(k) = s.action.encode();
      buf.cmds[static_cast<size_t>(k)] = s.cmd;
      buf.logprobs[k] = s.logprob;
      buf.values[k] = s.value;

      const StepResult r = pool.envs_[i].step(s.action);
      buf.rewards_ext[k] = r.reward;
      auto& stats = pool.running_[i];
      stats.ext_return += r.reward;
      stats.length += 1;
      stats.picked = stats.picked || r.event == StepEvent::kPicked;
      stats.installed = stats.installed || r.event == StepEvent::kInstalled;

      const bool horizon_end = ++pool.horizon_pos_[i] % config.horizon == 0;
      const bool segment_end = t + 1 == per_env;
      if (r.done) {
        buf.dones[static_cast<size_t>(k)] = 1;
        buf.cuts[static_cast<size_t>(k)] = 1;
        // time-limit truncation is not a true terminal
        buf.next_values[k] = r.event == StepEvent::kTruncated ? policy.value(r.observation) : 0.0;
        pool.finished_.push_back(stats);
        pool.start_episode(i);
      } else {
        pool.obs_[i] = r.observation;
        if (horizon_end || segment_end) {
          buf.cuts[static_cast<size_t>(k)] = 1;
          buf.next_values[k] = policy.value(r.observation);
        }
      }
    }
  }
  for (Eigen::Index k = 0; k + 1 < buf.size(); ++k) {
    if (!buf.cuts[static_cast<size_t>(k)]) buf.next_values[k] = buf.values[k + 1];
  }
  buf.rewards = buf.rewards_ext;
  return buf;
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const Eigen::Index n = buf.size() > 0 ? buf.size() : buf.rewards.size();
  buf.advantages.setZero(n);
  double next_adv = 0.0;
  for (Eigen::Index t = n; t-- > 0;) {
    const bool cut = buf.cuts[static_cast<size_t>(t)] != 0;
    const double delta = buf.rewards[t] + gamma * buf.next_values[t] - buf.values[t];
    next_adv = delta + (cut ? 0.0 : gamma * lambda * next_adv);
    buf.advantages[t] = next_adv;
  }
  buf.returns = buf.advantages + buf.values;
}

void normalize_advantages(RolloutBuffer& buf) {
  const Eigen::Index n = buf.advantages.size();
  if (n == 0) return;
  const double mean = buf.advantages.mean();
  const double var = (buf.advantages.array() - mean).square().sum() / static_cast<double>(n);
  const double sd = std::sqrt(var);
  buf.advantages = (buf.advantages.array() - mean) / (sd + 1e-8);
}

PpoBatch gather_batch(const RolloutBuffer& buf, std::span<const Eigen::Index> idx) {
  const auto b = static_cast<Eigen::Index>(idx.size());
  PpoBatch out;
  out.obs.resize(kObsDim, b);
  out.raw.resize(6, b);
  out.cmds.resize(idx.size());
  out.old_logprobs.resize(b);
  out.advantages.resize(b);
  out.returns.resize(b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Eigen::Index k = idx[static_cast<size_t>(j)];
    out.obs.col(j) = buf.obs.col(k);
    out.raw.col(j) = buf.raw.col(k);
    out.cmds[static_cast<size_t>(j)] = buf.cmds[static_cast<size_t>(k)];
    out.old_logprobs[j] = buf.logprobs[k];
    out.advantages[j] = buf.advantages[k];
    out.returns[j] = buf.returns[k];
  }
  return out;
}

PpoLossTerms ppo_loss(const ActorCritic& policy, const PpoBatch& batch, const PpoConfig& config,
                      PolicyGrads* grads) {
  const Eigen::Index b = batch.obs.cols();
  const double inv_b = 1.0 / static_cast<double>(b);
  ActorCritic::Cache cache;
  const Eigen::MatrixXd out = policy.forward(batch.obs, cache);
  const Eigen::VectorXd ls = policy.log_std();

  PpoLossTerms terms;
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(kPolicyOutputs, b);
  Eigen::VectorXd d_ls = Eigen::VectorXd::Zero(kMeanRows);
  Eigen::VectorXd dm(kMeanRows), dl(kMeanRows);
  const double gauss_entropy = gaussian_entropy(ls);

  for (Eigen::Index j = 0; j < b; ++j) {
    const auto mean = out.col(j).head<kMeanRows>();
    const Eigen::VectorXd logits = out.col(j).segment<kLogitRows>(kMeanRows);
    const int cmd = batch.cmds[static_cast<size_t>(j)];
    const double logp = gaussian_logprob(mean, ls, batch.raw.col(j)) + categorical_logprob(logits, cmd);
    const double ratio = std::exp(logp - batch.old_logprobs[j]);
    const double adv = batch.advantages[j];
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - config.clip, 1.0 + config.clip) * adv;
    terms.surrogate += std::min(unclipped, clipped) * inv_b;
    terms.approx_kl += (batch.old_logprobs[j] - logp) * inv_b;
    if (std::abs(ratio - 1.0) > config.clip) terms.clip_fraction += inv_b;

    const double v = out(kValueRow, j);
    const double err = v - batch.returns[j];
    terms.value_loss += err * err * inv_b;
    terms.entropy += (gauss_entropy + categorical_entropy(logits)) * inv_b;

    if (!grads) continue;
    // d(-surrogate)/d logp; zero where the clipped branch is active
    const double g = unclipped <= clipped ? -ratio * adv * inv_b : 0.0;
    gaussian_logprob_grad(mean, ls, batch.raw.col(j), dm, dl);
    d_out.col(j).head<kMeanRows>() = g * dm;
    d_ls += g * dl;
    d_out.col(j).segment<kLogitRows>(kMeanRows) =
        g * categorical_logprob_grad(logits, cmd) - config.entropy_coef * inv_b * categorical_entropy_grad(logits);
    d_out(kValueRow, j) = config.value_coef * 2.0 * err * inv_b;
  }
  terms.total = -terms.surrogate + config.value_coef * terms.value_loss - config.entropy_coef * terms.entropy;

  if (grads) {
    d_ls.array() -= config.entropy_coef;  // d(-c2 * mean gaussian entropy)/d log_std
    *grads = policy.backward(cache, d_out, d_ls);
  }
  return terms;
}

Adam make_policy_optimizer(ActorCritic& policy, const AdamConfig& config) {
  const auto spans = policy.spans();
  return Adam(config, block_sizes(spans));
}

namespace {

double grad_norm(const PolicyGrads& g) { return std::sqrt(g.squared_norm()); }

}  // namespace

PpoUpdateStats ppo_update(ActorCritic& policy, Adam& adam, const RolloutBuffer& buf, const PpoConfig& config,
                          Rng& rng, const AuxLoss& aux) {
  const ActorCritic saved_policy = policy;
  const Adam saved_adam = adam;
  auto fail = [&](const std::string& what) {
    policy = saved_policy;
    adam = saved_adam;
    throw Error(ErrorCode::kNonFiniteLoss, "ppo update aborted: " + what);
  };

  std::vector<Eigen::Index> idx(static_cast<size_t>(buf.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  const size_t mb = static_cast<size_t>(config.batch_size);

  PpoUpdateStats stats;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t start = 0; start + mb <= idx.size(); start += mb) {
      const PpoBatch batch = gather_batch(buf, std::span<const Eigen::Index>(idx).subspan(start, mb));
      PolicyGrads grads;
      const PpoLossTerms terms = ppo_loss(policy, batch, config, &grads);
      double aux_loss = 0.0;
      if (aux) aux_loss = aux(policy, grads);
      if (!std::isfinite(terms.total) || !std::isfinite(aux_loss)) fail("non-finite loss");
      if (!grads.all_finite()) fail("non-finite gradient");
      if (config.max_grad_norm > 0) {
        const double norm = grad_norm(grads);
        if (norm > config.max_grad_norm) {
          const double s = config.max_grad_norm / norm;
          grads *= s;
        }
      }
      adam.step(policy.spans(), grads.spans());
      if (!policy.all_finite()) fail("non-finite parameters");

      stats.policy_loss += -terms.surrogate;
      stats.value_loss += terms.value_loss;
      stats.entropy += terms.entropy;
      stats.approx_kl += terms.approx_kl;
      stats.clip_fraction += terms.clip_fraction;
      stats.aux_loss += aux_loss;
      ++stats.minibatches;
    }
  }
  if (stats.minibatches > 0) {
    const double k = 1.0 / stats.minibatches;
    stats.policy_loss *= k;
    stats.value_loss *= k;
    stats.entropy *= k;
    stats.approx_kl *= k;
    stats.clip_fraction *= k;
    stats.aux_loss *= k;
  }
  return stats;
}

}  // namespace lfd
