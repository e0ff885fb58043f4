#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lfd/bc.hpp"
#include "lfd/error.hpp"
#include "lfd/gail.hpp"
#include "lfd/ppo.hpp"
#include "lfd/trainer.hpp"
#include "oracles.hpp"

using namespace lfd;

namespace {

Eigen::VectorXd flat_params(ActorCritic& p) {
  std::vector<double> v;
  for (auto s : p.spans()) v.insert(v.end(), s.begin(), s.end());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ActorCritic with_params(const ActorCritic& p, const Eigen::VectorXd& x) {
  ActorCritic q = p;
  Eigen::Index k = 0;
  for (auto s : q.spans()) {
    for (double& d : s) d = x[k++];
  }
  return q;
}

Eigen::VectorXd flat_grads(const PolicyGrads& g) {
  std::vector<double> v;
  for (auto s : g.spans()) v.insert(v.end(), s.begin(), s.end());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd flat_params(Mlp& m) {
  std::vector<double> v;
  for (auto s : m.spans()) v.insert(v.end(), s.begin(), s.end());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd flat_grads(const MlpGrads& g) {
  std::vector<double> v;
  for (auto s : g.spans()) v.insert(v.end(), s.begin(), s.end());
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// A small policy with non-trivial output scale, so every loss term matters.
ActorCritic small_policy(std::uint64_t seed) {
  Rng rng(seed);
  ActorCritic p({8, 8}, rng, -0.3);
  for (auto& l : p.actor().layers()) l.weight *= 3.0;
  p.log_std_param() = Eigen::VectorXd::Random(kMeanRows) * 0.5;
  return p;
}

PpoBatch random_batch(const ActorCritic& p, int n, Rng& rng) {
  PpoBatch b;
  b.obs = Eigen::MatrixXd::Random(kObsDim, n);
  b.raw.resize(6, n);
  b.cmds.resize(static_cast<size_t>(n));
  b.old_logprobs.resize(n);
  b.advantages = Eigen::VectorXd::Random(n);
  b.returns = Eigen::VectorXd::Random(n);
  std::normal_distribution<double> g(0.0, 0.3);
  for (int j = 0; j < n; ++j) {
    const PolicySample s = p.sample(b.obs.col(j), rng);
    b.raw.col(j) = s.raw;
    b.cmds[static_cast<size_t>(j)] = s.cmd;
    // stale log-probs so both clip branches occur
    b.old_logprobs[j] = s.logprob + g(rng);
  }
  return b;
}

}  // namespace

TEST_CASE("PPO loss gradient matches finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ActorCritic p = small_policy(seed);
    Rng rng(seed + 10);
    const PpoBatch batch = random_batch(p, 16, rng);
    PpoConfig cfg;
    PolicyGrads g;
    const PpoLossTerms terms = ppo_loss(p, batch, cfg, &g);
    CHECK(terms.total == doctest::Approx(-terms.surrogate + 0.95 * terms.value_loss - 0.01 * terms.entropy));
    CHECK(terms.clip_fraction > 0.0);
    CHECK(terms.clip_fraction < 1.0);
    const Eigen::VectorXd numeric = oracle::fd_gradient(
        [&](const Eigen::VectorXd& x) { return ppo_loss(with_params(p, x), batch, cfg).total; }, flat_params(p));
    CHECK(oracle::rel_error(flat_grads(g), numeric) < 1e-4);
  }
}

TEST_CASE("PPO surrogate: ratio one gives the mean advantage") {
  ActorCritic p = small_policy(4);
  Rng rng(5);
  PpoBatch b = random_batch(p, 8, rng);
  for (int j = 0; j < 8; ++j) {
    const Eigen::VectorXd out = p.forward(b.obs.col(j));
    b.old_logprobs[j] = gaussian_logprob(out.head(kMeanRows), p.log_std(), b.raw.col(j)) +
                        categorical_logprob(out.segment(kMeanRows, kLogitRows), b.cmds[static_cast<size_t>(j)]);
  }
  const PpoLossTerms t = ppo_loss(p, b, PpoConfig{});
  CHECK(t.surrogate == doctest::Approx(b.advantages.mean()).epsilon(1e-10));
  CHECK(t.clip_fraction == 0.0);
  CHECK(std::abs(t.approx_kl) < 1e-12);
}

TEST_CASE("GAE against a hand calculation") {
  RolloutBuffer b;
  b.resize(4);
  b.rewards << 0.0, 1.0, 0.0, -0.5;
  b.values << 0.5, 0.4, 0.3, 0.2;
  // step 1 ends an episode; step 3 is a segment end bootstrapped with 0.7
  b.next_values << 0.4, 0.0, 0.2, 0.7;
  b.cuts = {0, 1, 0, 1};
  const double g = 0.9, l = 0.8;
  compute_gae(b, g, l);
  const double d3 = -0.5 + g * 0.7 - 0.2;
  const double d2 = 0.0 + g * 0.2 - 0.3;
  const double d1 = 1.0 - 0.4;
  const double d0 = 0.0 + g * 0.4 - 0.5;
  const double a3 = d3, a2 = d2 + g * l * a3, a1 = d1, a0 = d0 + g * l * a1;
  CHECK(b.advantages[3] == doctest::Approx(a3).epsilon(1e-14));
  CHECK(b.advantages[2] == doctest::Approx(a2).epsilon(1e-14));
  CHECK(b.advantages[1] == doctest::Approx(a1).epsilon(1e-14));
  CHECK(b.advantages[0] == doctest::Approx(a0).epsilon(1e-14));
  CHECK((b.returns - (b.advantages + b.values)).norm() == 0.0);

  // lambda = 1, no cuts except the end: advantages are discounted returns minus V
  RolloutBuffer c;
  c.resize(3);
  c.rewards << 1.0, 2.0, 3.0;
  c.values.setZero();
  c.next_values.setZero();
  c.cuts = {0, 0, 1};
  compute_gae(c, 0.5, 1.0);
  CHECK(c.advantages[0] == doctest::Approx(1.0 + 0.5 * 2.0 + 0.25 * 3.0));
}

TEST_CASE("advantage normalisation") {
  RolloutBuffer b;
  b.resize(5);
  b.advantages << 1, 2, 3, 4, 10;
  normalize_advantages(b);
  CHECK(b.advantages.mean() == doctest::Approx(0.0).epsilon(1e-12));
  const double var = b.advantages.squaredNorm() / 5;
  CHECK(var == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("rollout collection: size, determinism, sparsity and cuts") {
  PpoConfig cfg;
  cfg.buffer_size = 1000;
  cfg.batch_size = 100;
  cfg.horizon = 300;
  SceneConfig sc = SceneConfig::defaults();
  sc.max_steps = 120;
  Rng r1(3), r2(3);
  ActorCritic p({16}, r1), q({16}, r2);
  EnvPool pa(sc, 2, 7), pb(sc, 2, 7);
  Rng s1(11), s2(11);
  const RolloutBuffer a = collect_rollouts(pa, p, cfg, s1);
  const RolloutBuffer b = collect_rollouts(pb, q, cfg, s2);
  CHECK(a.size() == 1000);
  CHECK(a.obs == b.obs);
  CHECK(a.raw == b.raw);
  CHECK(a.rewards_ext == b.rewards_ext);
  CHECK(a.next_values == b.next_values);
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    const double r = a.rewards_ext[k];
    CHECK((r == 0.0 || r == 1.0 || r == -0.5));
    if (a.dones[static_cast<size_t>(k)]) CHECK(a.cuts[static_cast<size_t>(k)]);
  }
  // each env owns a contiguous 500-step segment ending in a cut
  CHECK(a.cuts[499] == 1);
  CHECK(a.cuts[999] == 1);
  // truncated episodes (120 steps) bootstrap with the critic
  CHECK(a.dones[119] == 1);
  CHECK(a.next_values[119] != 0.0);
  CHECK(pa.take_finished().size() >= 8);
  CHECK(pa.take_finished().empty());
}

TEST_CASE("PPO on a one-state bandit raises the better action monotonically") {
  Rng init(1);
  ActorCritic p({16}, init);
  PpoConfig cfg;
  cfg.buffer_size = 512;
  cfg.batch_size = 128;
  Adam adam = make_policy_optimizer(p, cfg.adam);
  Rng rng(2);
  const ObsVec obs = ObsVec::Zero();
  auto prob = [&] { return softmax(p.forward(obs).col(0).segment<kLogitRows>(kMeanRows))[0]; };
  double last = prob();
  const double start = last;
  int rises = 0;
  for (int u = 0; u < 50; ++u) {
    RolloutBuffer b;
    b.resize(cfg.buffer_size);
    for (Eigen::Index k = 0; k < b.size(); ++k) {
      const PolicySample s = p.sample(obs, rng);
      b.obs.col(k) = obs;
      b.raw.col(k) = s.raw;
      b.cmds[static_cast<size_t>(k)] = s.cmd;
      b.logprobs[k] = s.logprob;
      b.values[k] = s.value;
      b.rewards[k] = s.cmd == 0 ? 1.0 : 0.0;
      b.next_values[k] = 0.0;
      b.cuts[static_cast<size_t>(k)] = 1;
      b.dones[static_cast<size_t>(k)] = 1;
    }
    compute_gae(b, cfg.gamma, cfg.lambda);
    normalize_advantages(b);
    ppo_update(p, adam, b, cfg, rng);
    const double now = prob();
    CHECK(now >= last - 1e-9);
    if (now > last) ++rises;
    last = now;
  }
  CHECK(last > 0.95);
  CHECK(last > start);
  CHECK(rises >= 40);
}

TEST_CASE("ppo_update restores state on a non-finite loss") {
  Rng init(1);
  ActorCritic p({8}, init);
  PpoConfig cfg;
  cfg.buffer_size = 64;
  cfg.batch_size = 32;
  Adam adam = make_policy_optimizer(p, cfg.adam);
  RolloutBuffer b;
  b.resize(64);
  b.obs.setRandom();
  b.advantages.setOnes();
  b.returns.setZero();
  b.returns[5] = std::nan("");
  const ActorCritic before = p;
  Rng rng(3);
  try {
    ppo_update(p, adam, b, cfg, rng);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
  }
  CHECK(p == before);
  CHECK(adam.steps() == 0);
}

TEST_CASE("PPO config validation") {
  PpoConfig c;
  CHECK_NOTHROW(c.validate());
  c.clip = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = PpoConfig{};
  c.buffer_size = 1000;  // not divisible by 512
  CHECK_THROWS_AS(c.validate(), Error);
}

// ---------------------------------------------------------------- GAIL

TEST_CASE("discriminator loss gradient matches finite differences") {
  Rng rng(4);
  Discriminator d({10, 10}, rng);
  for (auto& l : d.net().layers()) l.weight *= 2.0;
  const Eigen::MatrixXd ex = Eigen::MatrixXd::Random(kDiscInputDim, 7);
  const Eigen::MatrixXd ag = Eigen::MatrixXd::Random(kDiscInputDim, 9);
  MlpGrads g;
  disc_loss(d, ex, ag, &g);
  const Eigen::VectorXd numeric = oracle::fd_gradient(
      [&](const Eigen::VectorXd& x) {
        Discriminator e = d;
        Eigen::Index k = 0;
        for (auto s : e.net().spans()) {
          for (double& v : s) v = x[k++];
        }
        return disc_loss(e, ex, ag);
      },
      flat_params(d.net()));
  CHECK(oracle::rel_error(flat_grads(g), numeric) < 1e-4);
}

TEST_CASE("discriminator loss closed form and symmetric optimum") {
  Rng rng(5);
  Discriminator d({6}, rng);
  auto& out = d.net().layers().back();
  out.weight.setZero();
  out.bias.setZero();  // D = 0.5 everywhere
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(kDiscInputDim, 5);
  MlpGrads g;
  const double loss = disc_loss(d, x, x, &g);
  CHECK(loss == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(flat_grads(g).norm() < 1e-12);
  CHECK((d.probabilities(x).array() - 0.5).abs().maxCoeff() < 1e-15);
  // reward = -log D = log 2 at D = 0.5
  CHECK((d.rewards(x).array() - std::log(2.0)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("surrogate reward is -log D and stays finite at the clamp") {
  Rng rng(6);
  Discriminator d({6}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(kDiscInputDim, 20);
  const Eigen::VectorXd p = d.probabilities(x), r = d.rewards(x);
  for (Eigen::Index i = 0; i < x.cols(); ++i) CHECK(r[i] == doctest::Approx(-std::log(p[i])).epsilon(1e-10));
  d.net().layers().back().bias.setConstant(-1e6);
  const Eigen::VectorXd big = d.rewards(x);
  CHECK(big.allFinite());
  CHECK(big.maxCoeff() <= kDiscLogitClamp + 1e-6);
}

TEST_CASE("discriminator learns a linearly separable split") {
  Rng rng(7);
  Discriminator d({32, 32}, rng);
  AdamConfig ac;
  Adam adam = make_disc_optimizer(d, ac);
  auto draw = [&](double shift, int n) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Random(kDiscInputDim, n) * 0.5;
    m.row(0).array() += shift;
    return m;
  };
  for (int i = 0; i < 300; ++i) disc_update(d, adam, draw(-1.0, 64), draw(1.0, 64));
  const Eigen::MatrixXd ex = draw(-1.0, 500), ag = draw(1.0, 500);
  const Eigen::VectorXd pe = d.probabilities(ex), pa = d.probabilities(ag);
  const double acc = ((pe.array() < 0.5).count() + (pa.array() >= 0.5).count()) / 1000.0;
  CHECK(acc > 0.95);
  // expert-like pairs earn more surrogate reward
  CHECK(d.rewards(ex).mean() > d.rewards(ag).mean());
}

TEST_CASE("roc_auc with ties") {
  const std::vector<double> pos{0.9, 0.8, 0.5}, neg{0.5, 0.2};
  // pairs: (0.9,0.5)1 (0.9,0.2)1 (0.8,0.5)1 (0.8,0.2)1 (0.5,0.5)0.5 (0.5,0.2)1 = 5.5/6
  CHECK(roc_auc(pos, neg) == doctest::Approx(5.5 / 6.0).epsilon(1e-12));
  CHECK(roc_auc(neg, pos) == doctest::Approx(0.5 / 6.0).epsilon(1e-12));
}

// ---------------------------------------------------------------- BC

TEST_CASE("BC loss gradient matches finite differences") {
  ActorCritic p = small_policy(8);
  BcBatch b;
  b.obs = Eigen::MatrixXd::Random(kObsDim, 10);
  b.deltas = Eigen::MatrixXd::Random(6, 10);
  b.cmds = {0, 1, 2, 0, 1, 2, 0, 0, 2, 1};
  PolicyGrads g;
  const double loss = bc_loss(p, b, 0.5, &g);
  CHECK(std::isfinite(loss));
  const Eigen::VectorXd numeric = oracle::fd_gradient(
      [&](const Eigen::VectorXd& x) { return bc_loss(with_params(p, x), b, 0.5); }, flat_params(p));
  CHECK(oracle::rel_error(flat_grads(g), numeric) < 1e-4);
  // the critic is untouched by BC
  CHECK(g.critic.squared_norm() == 0.0);

  // accumulation into existing gradients adds
  PolicyGrads twice = g;
  bc_loss(p, b, 0.5, &twice);
  CHECK((flat_grads(twice) - 2 * flat_grads(g)).norm() < 1e-12);
}

TEST_CASE("BC loss reaches the Gaussian floor when the mean matches") {
  Rng rng(9);
  ActorCritic p({4}, rng, -3.0);
  auto& out = p.actor().layers().back();
  out.weight.setZero();
  Eigen::VectorXd bias = Eigen::VectorXd::Zero(kActorOutputs);
  bias.head<6>() << 0.1, -0.2, 0.3, 0.0, 0.5, -0.4;
  bias[kMeanRows + 2] = 40.0;  // hold, with near certainty
  out.bias = bias;
  BcBatch b;
  b.obs = Eigen::MatrixXd::Random(kObsDim, 3);
  b.deltas = bias.head<6>().replicate(1, 3);
  b.cmds = {2, 2, 2};
  const double d = 6;
  const double floor = -(-p.log_std().sum() - d / 2 * std::log(2 * std::numbers::pi));
  CHECK(bc_loss(p, b, 1.0) == doctest::Approx(floor).epsilon(1e-9));
  CHECK(bc_loss(p, b, 0.5) == doctest::Approx(0.5 * floor).epsilon(1e-9));
  CHECK(bc_action_error(p, b) == doctest::Approx(0.0));
}

TEST_CASE("BC window is half-open") {
  BcConfig c;
  CHECK(bc_active(c, 0));
  CHECK(bc_active(c, 99999));
  CHECK_FALSE(bc_active(c, 100000));
  c.strength = 0;
  CHECK_FALSE(bc_active(c, 0));
}

TEST_CASE("at ratio one the clipped gradient is the plain policy gradient") {
  ActorCritic p = small_policy(12);
  Rng rng(13);
  PpoBatch b = random_batch(p, 12, rng);
  auto logprob = [&b](const ActorCritic& q, int j) {
    const Eigen::VectorXd out = q.forward(b.obs.col(j));
    return gaussian_logprob(out.head(kMeanRows), q.log_std(), b.raw.col(j)) +
           categorical_logprob(out.segment(kMeanRows, kLogitRows), b.cmds[static_cast<size_t>(j)]);
  };
  for (int j = 0; j < 12; ++j) b.old_logprobs[j] = logprob(p, j);
  PpoConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  PolicyGrads g;
  ppo_loss(p, b, cfg, &g);
  // -mean(A log pi): the REINFORCE estimator, differentiated numerically
  const Eigen::VectorXd pg = oracle::fd_gradient(
      [&](const Eigen::VectorXd& x) {
        const ActorCritic q = with_params(p, x);
        double s = 0.0;
        for (int j = 0; j < 12; ++j) s += b.advantages[j] * logprob(q, j);
        return -s / 12.0;
      },
      flat_params(p));
  CHECK(oracle::rel_error(flat_grads(g), pg) < 1e-6);
}

TEST_CASE("discriminator updates need balanced batches") {
  Rng rng(14);
  Discriminator d({6}, rng);
  Adam adam = make_disc_optimizer(d, AdamConfig{});
  const Discriminator before = d;
  try {
    disc_update(d, adam, Eigen::MatrixXd::Random(kDiscInputDim, 4), Eigen::MatrixXd::Random(kDiscInputDim, 5));
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
  CHECK(d.net() == before.net());
  CHECK_THROWS_AS(disc_update(d, adam, Eigen::MatrixXd(kDiscInputDim, 0), Eigen::MatrixXd(kDiscInputDim, 0)), Error);
  CHECK_NOTHROW(disc_update(d, adam, Eigen::MatrixXd::Random(kDiscInputDim, 5), Eigen::MatrixXd::Random(kDiscInputDim, 5)));
}

TEST_CASE("surrogate reward falls as D rises and stays bounded") {
  Rng rng(15);
  Discriminator d({6}, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(kDiscInputDim, 1);
  double last_p = 0.0, last_r = 1e9;
  for (double bias = -40; bias <= 40; bias += 0.5) {
    d.net().layers().back().bias.setConstant(bias);
    const double p = d.probabilities(x)[0], r = d.rewards(x)[0];
    CHECK(p >= last_p);
    CHECK(r <= last_r);
    CHECK(r >= 0.0);
    CHECK(r <= kDiscLogitClamp + 1e-6);
    last_p = p;
    last_r = r;
  }
  CHECK(last_r < 1e-8);  // D near 1: clearly agent-like
}

TEST_CASE("2000 BC steps halve the held-out action error") {
  const TransitionTable train = flatten(generate_expert_demos(SceneConfig::defaults(), 60, 1000));
  const TransitionTable held = flatten(generate_expert_demos(SceneConfig::defaults(), 10, 8000));
  std::vector<Eigen::Index> all(static_cast<size_t>(held.size()));
  std::iota(all.begin(), all.end(), 0);
  const BcBatch test = bc_batch_from(held, all);

  Rng rng(16);
  ActorCritic p({256, 256, 256}, rng);
  Adam adam = make_policy_optimizer(p, AdamConfig{});
  const double before = bc_action_error(p, test);
  for (int i = 0; i < 2000; ++i) {
    PolicyGrads g;
    bc_loss(p, sample_bc_batch(train, 512, rng), 0.5, &g);
    adam.step(p.spans(), g.spans());
  }
  const double after = bc_action_error(p, test);
  MESSAGE("held-out action error " << before << " -> " << after);
  CHECK(after <= 0.5 * before);
}

TEST_CASE("PPO improves a dense-reward reach task within 100k steps") {
  // Pinned for seed 1: the untrained policy scores about -15.
  GroupConfig g;
  g.name = "reach";
  g.scene.dense_reach = true;
  g.scene.max_steps = 100;
  g.seed = 1;
  Trainer t(g, nullptr);
  const double start = evaluate(t.policy(), g.scene, 20, 77).mean_return;
  t.train(100000);
  const double end = evaluate(t.policy(), g.scene, 20, 77).mean_return;
  MESSAGE("reach return " << start << " -> " << end);
  CHECK(start < -12.0);
  CHECK(end > -9.0);
}
