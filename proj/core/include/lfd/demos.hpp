#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lfd/tilesim.hpp"

namespace lfd {

inline constexpr int kDemoFormatVersion = 1;

struct Transition {
  ObsVec observation = ObsVec::Zero();  // observation the action was chosen from
  AgentAction action;
  double reward = 0.0;
  bool done = false;
  StepEvent event = StepEvent::kNone;
  bool operator==(const Transition& other) const = default;
};

enum class DemoSource : std::uint8_t { kScripted, kTeleop };
std::string_view to_string(DemoSource s);
DemoSource demo_source_from_string(std::string_view s);

struct Trajectory {
  DemoSource source = DemoSource::kScripted;
  std::uint64_t seed = 0;
  std::string schema{kObsSchema};
  StepEvent outcome = StepEvent::kNone;
  std::vector<Transition> steps;

  double total_reward() const;
  // Non-empty, done exactly on the last step, outcome matches that step.
  bool well_formed() const;
  bool operator==(const Trajectory& other) const = default;
};

struct DemoSet {
  std::vector<Trajectory> trajectories;

  size_t size() const { return trajectories.size(); }
  size_t num_transitions() const;
  bool operator==(const DemoSet& other) const = default;
};

// Waypoint heights and speeds for the scripted expert.
struct ExpertConfig {
  double hover_height = 0.07;      // above the tile centre before descending
  double grasp_height = 0.02;      // final descent height above the tile centre
  double align_tolerance = 0.01;   // xy error allowed before descending
  double suction_distance = 0.035; // issue suction inside this effector-tile distance
  double cartesian_step = 0.008;   // m per step along the straight-line path
  IkSettings ik{};
};

// Stateless waypoint controller: hover over the tile, descend, suction,
// carry the tile to the target. Orientation is held at the home pose.
// Throws ExpertStuck when IK fails from both the current and the home posture.
AgentAction scripted_expert(const EnvState& state, const SceneConfig& scene,
                            const ExpertConfig& expert = {});

using ActionSource = std::function<AgentAction(const TileEnv&)>;

// Runs one episode from reset(seed). Returns nullopt when the source throws
// ExpertStuck (the episode is discarded).
std::optional<Trajectory> record_episode(TileEnv& env, std::uint64_t seed, const ActionSource& source,
                                         DemoSource tag = DemoSource::kScripted);

// Scripted demonstrations on seeds base_seed, base_seed + 1, ... until `n`
// episodes were recorded (aborted seeds are skipped).
DemoSet generate_expert_demos(const SceneConfig& scene, size_t n, std::uint64_t base_seed,
                              const ExpertConfig& expert = {});

// JSONL: a header line, then per trajectory a metadata line, one line per
// transition and a blank separator line. Reals use 17 significant digits.
void write_demos(std::ostream& out, const DemoSet& set);
DemoSet read_demos(std::istream& in);
void save_demos(const std::filesystem::path& path, const DemoSet& set);
DemoSet load_demos(const std::filesystem::path& path);

// Column-packed view of every transition in a set, for BC and GAIL batches.
struct TransitionTable {
  Eigen::MatrixXd obs;      // kObsDim x n
  Eigen::MatrixXd deltas;   // 6 x n, clipped joint deltas
  Eigen::MatrixXd encoded;  // kActionDim x n, AgentAction::encode()
  std::vector<int> cmds;

  Eigen::Index size() const { return obs.cols(); }
};
TransitionTable flatten(const DemoSet& set);

// Seeded uniform subset without replacement; original order is kept.
DemoSet subsample(const DemoSet& set, size_t n, std::uint64_t seed);

}  // namespace lfd
