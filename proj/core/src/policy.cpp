#include "lfd/policy.hpp"

#include <algorithm>

#include "lfd/error.hpp"

namespace lfd {

namespace {

std::vector<int> layer_sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

ActorCritic::ActorCritic(const std::vector<int>& hidden, Rng& rng, double init_log_std)
    : actor_(layer_sizes(kObsDim, hidden, kActorOutputs), rng, 0.01),
      critic_(layer_sizes(kObsDim, hidden, 1), rng, 1.0),
      log_std_(Eigen::VectorXd::Constant(kMeanRows, init_log_std)) {}

Eigen::MatrixXd ActorCritic::forward(const Eigen::MatrixXd& obs) const {
  Eigen::MatrixXd out(kPolicyOutputs, obs.cols());
  out.topRows(kActorOutputs) = actor_.forward(obs);
  out.row(kValueRow) = critic_.forward(obs);
  return out;
}

Eigen::MatrixXd ActorCritic::forward(const Eigen::MatrixXd& obs, Cache& cache) const {
  Eigen::MatrixXd out(kPolicyOutputs, obs.cols());
  out.topRows(kActorOutputs) = actor_.forward(obs, cache.actor);
  out.row(kValueRow) = critic_.forward(obs, cache.critic);
  cache.has_critic = true;
  return out;
}

Eigen::MatrixXd ActorCritic::forward_actor(const Eigen::MatrixXd& obs, Cache& cache) const {
  cache.has_critic = false;
  return actor_.forward(obs, cache.actor);
}

PolicyGrads ActorCritic::backward(const Cache& cache, const Eigen::MatrixXd& d_out,
                                  const Eigen::VectorXd& d_log_std) const {
  PolicyGrads g;
  g.actor = actor_.backward(cache.actor, d_out.topRows(kActorOutputs));
  if (d_out.rows() == kPolicyOutputs) {
    if (!cache.has_critic) throw Error(ErrorCode::kDimensionMismatch, "critic gradient without a critic pass");
    g.critic = critic_.backward(cache.critic, d_out.row(kValueRow));
  } else {
    g.critic = critic_.zero_grads();
  }
  g.log_std = d_log_std.cwiseProduct(log_std_mask());
  return g;
}

Eigen::VectorXd ActorCritic::log_std() const { return log_std_.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

Eigen::VectorXd ActorCritic::log_std_mask() const {
  Eigen::VectorXd m(log_std_.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m[i] = (log_std_[i] >= kLogStdMin && log_std_[i] <= kLogStdMax) ? 1.0 : 0.0;
  }
  return m;
}

AgentAction action_from(const Vec6& raw, int cmd) {
  AgentAction a;
  a.joint_deltas = raw;
  a.cmd = static_cast<EffectorCmd>(cmd);
  a.clip();
  return a;
}

int cmd_index(EffectorCmd c) { return static_cast<int>(c); }

PolicySample ActorCritic::sample(const ObsVec& obs, Rng& rng) const {
  const Eigen::VectorXd out = actor_.forward(obs);
  const Eigen::VectorXd ls = log_std();
  PolicySample s;
  s.raw = gaussian_sample(out.head(kMeanRows), ls, rng);
  s.cmd = categorical_sample(out.segment(kMeanRows, kLogitRows), rng);
  s.logprob = gaussian_logprob(out.head(kMeanRows), ls, s.raw) +
              categorical_logprob(out.segment(kMeanRows, kLogitRows), s.cmd);
  s.value = value(obs);
  s.action = action_from(s.raw, s.cmd);
  return s;
}

AgentAction ActorCritic::act_deterministic(const ObsVec& obs) const {
  const Eigen::VectorXd out = actor_.forward(obs);
  return action_from(out.head<kMeanRows>(), categorical_argmax(out.segment(kMeanRows, kLogitRows)));
}

double ActorCritic::value(const ObsVec& obs) const { return critic_.forward(obs)(0, 0); }

std::vector<std::span<double>> ActorCritic::spans() {
  auto s = actor_.spans();
  for (auto c : critic_.spans()) s.push_back(c);
  s.emplace_back(log_std_.data(), static_cast<size_t>(log_std_.size()));
  return s;
}

bool ActorCritic::all_finite() const {
  return actor_.all_finite() && critic_.all_finite() && log_std_.allFinite();
}

bool ActorCritic::operator==(const ActorCritic& other) const {
  return actor_ == other.actor_ && critic_ == other.critic_ && log_std_ == other.log_std_;
}

std::vector<std::span<const double>> PolicyGrads::spans() const {
  auto s = actor.spans();
  for (auto c : critic.spans()) s.push_back(c);
  s.emplace_back(log_std.data(), static_cast<size_t>(log_std.size()));
  return s;
}

bool PolicyGrads::all_finite() const {
  if (!log_std.allFinite()) return false;
  for (const auto* g : {&actor, &critic}) {
    for (const auto& l : g->layers) {
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    }
  }
  return true;
}

double PolicyGrads::squared_norm() const {
  return actor.squared_norm() + critic.squared_norm() + log_std.squaredNorm();
}

PolicyGrads& PolicyGrads::operator+=(const PolicyGrads& other) {
  actor += other.actor;
  critic += other.critic;
  log_std += other.log_std;
  return *this;
}

PolicyGrads& PolicyGrads::operator*=(double s) {
  actor *= s;
  critic *= s;
  log_std *= s;
  return *this;
}

}  // namespace lfd
