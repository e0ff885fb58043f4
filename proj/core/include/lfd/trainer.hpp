#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lfd/bc.hpp"
#include "lfd/demos.hpp"
#include "lfd/gail.hpp"
#include "lfd/policy.hpp"
#include "lfd/ppo.hpp"
#include "lfd/tilesim.hpp"

namespace lfd {

struct GroupConfig {
  std::string name = "group";
  double ppo_strength = 1.0;
  double gail_strength = 0.0;
  double bc_strength = 0.0;
  int demo_count = 0;
  long max_steps = 5000000;
  std::uint64_t seed = 1;
  int n_envs = 1;
  std::vector<int> hidden{256, 256, 256};
  double init_log_std = -0.5;
  int checkpoint_every = 10;  // updates; 0 disables periodic checkpoints
  double early_stop_return = 1.95;
  int early_stop_window = 100;
  std::filesystem::path demos_path;  // empty: generate scripted demonstrations
  std::uint64_t demo_seed = 1000;
  PpoConfig ppo;
  GailConfig gail;
  BcConfig bc;
  SceneConfig scene = SceneConfig::defaults();
  ExpertConfig expert;

  bool uses_demos() const { return gail_strength > 0 || bc_strength > 0; }
  void validate() const;

  // INI sections [group], [ppo], [gail], [bc], [scene] (scene.file loads a
  // scene config relative to the group file; other [scene] keys override it).
  static GroupConfig load(const std::filesystem::path& path);
};

// r_total = ppo_strength * r_ext + gail_strength * r_gail
double mix_rewards(double extrinsic, double gail_reward, const GroupConfig& group);
void mix_rewards(RolloutBuffer& buf, const GroupConfig& group);

struct EvalReport {
  double picked_rate = 0.0;
  double installed_rate = 0.0;
  double avg_episode_length = 0.0;
  double installed_avg_length = 0.0;  // over installed episodes only; 0 if none
  double mean_return = 0.0;
  int n_episodes = 0;
  bool operator==(const EvalReport& other) const = default;
};

EvalReport evaluate(const ActionSource& source, const SceneConfig& scene, int n, std::uint64_t seed);
// Deterministic policy: Gaussian mean and categorical argmax.
EvalReport evaluate(const ActorCritic& policy, const SceneConfig& scene, int n = 100, std::uint64_t seed = 0);

inline constexpr std::string_view kMetricsSchema = "METRICS1";

struct UpdateRecord {
  int update = 0;
  long step = 0;
  int episodes = 0;             // finished during this update's collection
  double mean_return = 0.0;     // of those episodes; NaN when none finished
  double window_return = 0.0;   // moving average over the early-stop window
  double picked_rate = 0.0;     // window
  double installed_rate = 0.0;  // window
  double mean_length = 0.0;     // window
  double mean_ext_reward = 0.0;
  double mean_gail_reward = 0.0;
  double mean_mixed_reward = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double bc_loss = 0.0;
  bool bc_applied = false;
  double disc_loss = 0.0;
  double disc_expert_prob = 0.0;
  double disc_agent_prob = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const UpdateRecord& r);

// One training run. Copyable: a copy continues bit-identically.
class Trainer {
 public:
  // `demos` may be null when the group uses neither GAIL nor BC.
  Trainer(GroupConfig group, std::shared_ptr<const DemoSet> demos);

  // collect -> GAIL -> mix -> GAE -> PPO (+ BC inside its window)
  UpdateRecord update();
  // Runs updates until `budget` env steps or early stop; rows go to `metrics`
  // when given, checkpoints to `out_dir` when non-empty.
  std::vector<UpdateRecord> train(long budget, std::ostream* metrics = nullptr,
                                  const std::filesystem::path& out_dir = {});

  bool converged() const;
  long step() const { return step_; }
  int updates() const { return updates_; }
  const ActorCritic& policy() const { return policy_; }
  const Discriminator& discriminator() const { return disc_; }
  const GroupConfig& config() const { return group_; }
  GroupConfig& config() { return group_; }

  void save_checkpoint(const std::filesystem::path& dir) const;

 private:
  GroupConfig group_;
  std::shared_ptr<const DemoSet> demos_;
  std::shared_ptr<const TransitionTable> table_;
  ActorCritic policy_;
  Adam adam_;
  Discriminator disc_;
  Adam disc_adam_;
  EnvPool pool_;
  Rng rollout_rng_;
  Rng update_rng_;
  Rng gail_rng_;
  Rng bc_rng_;
  long step_ = 0;
  int updates_ = 0;
  std::deque<EpisodeStats> window_;
};

// Scripted demonstrations for a group: demo_count episodes subsampled from a
// 60-episode scripted pool (or from demos_path).
std::shared_ptr<const DemoSet> demos_for(const GroupConfig& group);

// Loads the policy from a checkpoint directory's manifest (or a policy file).
ActorCritic load_policy(const std::filesystem::path& path);

struct SuiteRow {
  std::string group;
  EvalReport report;
  long steps = 0;
};

// Trains each group to `budget` steps and evaluates 100 episodes each.
std::vector<SuiteRow> run_group_suite(const std::vector<GroupConfig>& groups, long budget,
                                      const std::filesystem::path& out_dir = {}, int eval_episodes = 100,
                                      std::ostream* log = nullptr);
void write_suite_csv(std::ostream& out, const std::vector<SuiteRow>& rows);

}  // namespace lfd
