#include <benchmark/benchmark.h>

#include <random>

#include "lfd/kinematics.hpp"
#include "lfd/tilesim.hpp"

using namespace lfd;

namespace {

Vec6 random_q(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-180, 180);
  Vec6 q;
  for (int i = 0; i < 6; ++i) q[i] = u(rng);
  return q;
}

void BM_ForwardKinematics(benchmark::State& state) {
  const DhTable dh = DhTable::ur3();
  std::mt19937_64 rng(1);
  const JointAngles q = wrap_angles(random_q(rng));
  for (auto _ : state) benchmark::DoNotOptimize(forward_kinematics(dh, q));
}
BENCHMARK(BM_ForwardKinematics);

void BM_Jacobian(benchmark::State& state) {
  const DhTable dh = DhTable::ur3();
  std::mt19937_64 rng(2);
  const JointAngles q = wrap_angles(random_q(rng));
  for (auto _ : state) benchmark::DoNotOptimize(jacobian(dh, q));
}
BENCHMARK(BM_Jacobian);

// Tracking-style solve: start 10 degrees per joint away from the answer.
void BM_SolveIk(benchmark::State& state) {
  const DhTable dh = DhTable::ur3();
  std::mt19937_64 rng(3);
  std::vector<std::pair<JointAngles, HomTransform>> cases;
  for (int i = 0; i < 64; ++i) {
    const Vec6 q = random_q(rng);
    cases.emplace_back(wrap_angles(q + Vec6::Constant(10.0)), forward_kinematics(dh, wrap_angles(q)));
  }
  size_t k = 0;
  for (auto _ : state) {
    const auto& [q0, target] = cases[k++ % cases.size()];
    try {
      benchmark::DoNotOptimize(solve_ik(dh, q0, target));
    } catch (...) {
    }
  }
}
BENCHMARK(BM_SolveIk);

void BM_EnvStep(benchmark::State& state) {
  TileEnv env;
  env.reset(1);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1, 1);
  std::uint64_t ep = 1;
  for (auto _ : state) {
    AgentAction a;
    for (int i = 0; i < 6; ++i) a.joint_deltas[i] = u(rng);
    const StepResult r = env.step(a);
    if (r.done) env.reset(++ep);
    benchmark::DoNotOptimize(r.observation.data());
  }
}
BENCHMARK(BM_EnvStep);

}  // namespace
