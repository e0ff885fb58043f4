#include <benchmark/benchmark.h>

#include "lfd/gail.hpp"
#include "lfd/policy.hpp"
#include "lfd/ppo.hpp"

using namespace lfd;

namespace {

// Paper-sized networks: three hidden layers of 256.
const std::vector<int> kHidden{256, 256, 256};

void BM_PolicyForwardBatch(benchmark::State& state) {
  Rng rng(1);
  const ActorCritic p(kHidden, rng);
  const Eigen::MatrixXd obs = Eigen::MatrixXd::Random(kObsDim, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(p.forward(obs).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PolicyForwardBatch)->Arg(1)->Arg(512);

void BM_PpoMinibatchGrad(benchmark::State& state) {
  Rng rng(2);
  const ActorCritic p(kHidden, rng);
  const int n = 512;
  PpoBatch b;
  b.obs = Eigen::MatrixXd::Random(kObsDim, n);
  b.raw = Eigen::MatrixXd::Random(6, n);
  b.cmds.assign(n, 1);
  b.old_logprobs = Eigen::VectorXd::Constant(n, -5.0);
  b.advantages = Eigen::VectorXd::Random(n);
  b.returns = Eigen::VectorXd::Random(n);
  const PpoConfig cfg;
  for (auto _ : state) {
    PolicyGrads g;
    benchmark::DoNotOptimize(ppo_loss(p, b, cfg, &g).total);
  }
}
BENCHMARK(BM_PpoMinibatchGrad)->Unit(benchmark::kMillisecond);

void BM_DiscriminatorUpdate(benchmark::State& state) {
  Rng rng(3);
  Discriminator d(kHidden, rng);
  Adam adam = make_disc_optimizer(d, AdamConfig{});
  const Eigen::MatrixXd ex = Eigen::MatrixXd::Random(kDiscInputDim, 512);
  const Eigen::MatrixXd ag = Eigen::MatrixXd::Random(kDiscInputDim, 512);
  for (auto _ : state) benchmark::DoNotOptimize(disc_update(d, adam, ex, ag));
}
BENCHMARK(BM_DiscriminatorUpdate)->Unit(benchmark::kMillisecond);

}  // namespace
