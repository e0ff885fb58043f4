#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <string_view>

#include "lfd/gesture.hpp"
#include "lfd/kinematics.hpp"
#include "lfd/netcore.hpp"

namespace lfd {

// Observation layout (schema "OBS1"): each of the 5 stacked slots holds an
// 18-value frame followed by the 7-value action that produced it.
inline constexpr int kFrameDim = 18;
inline constexpr int kActionDim = 7;
inline constexpr int kSlotDim = kFrameDim + kActionDim;
inline constexpr int kStackDepth = 5;
inline constexpr int kObsDim = kStackDepth * kSlotDim;  // 125
inline constexpr std::string_view kObsSchema = "OBS1";

using ObsVec = Eigen::Matrix<double, kObsDim, 1>;
using FrameVec = Eigen::Matrix<double, kFrameDim, 1>;
using ActionVec = Eigen::Matrix<double, kActionDim, 1>;

enum class EffectorCmd : std::uint8_t { kSuction = 0, kDrop = 1, kHold = 2 };
inline constexpr int kNumEffectorCmds = 3;

std::string_view to_string(EffectorCmd c);
EffectorCmd effector_cmd_from_string(std::string_view s);
// Gesture that drives the suction command machine for a command.
GestureLabel gesture_for(EffectorCmd c);

struct AgentAction {
  Vec6 joint_deltas = Vec6::Zero();  // clipped to [-1, 1]; scaled by max_delta_deg
  EffectorCmd cmd = EffectorCmd::kHold;

  // Clips the deltas in place and returns *this.
  AgentAction& clip();
  // 6 deltas followed by the command as +1 (suction), -1 (drop) or 0 (hold).
  ActionVec encode() const;
  bool operator==(const AgentAction& other) const = default;
};

enum class TileStatus : std::uint8_t { kResting, kAttached, kInstalled, kFallen };
enum class StepEvent : std::uint8_t { kNone, kPicked, kInstalled, kFell, kTruncated };

std::string_view to_string(TileStatus s);
std::string_view to_string(StepEvent e);
StepEvent step_event_from_string(std::string_view s);

struct SceneConfig {
  double suction_threshold = 0.04;  // m, effector to tile centre
  double install_threshold = 0.03;  // m, tile centre to target
  double tile_x_min = 0.0;
  double tile_x_max = 0.15;
  double tile_y = 0.30;
  double tile_rest_z = 0.01;  // tile centre height when resting on the table
  double table_top = 0.0;
  double table_x_min = -0.35;
  double table_x_max = 0.35;
  double table_y_min = 0.10;
  double table_y_max = 0.50;
  Vec3 target = Vec3(-0.15, 0.25, 0.20);
  double contact_knock_threshold = 0.015;
  double drop_fall_height = 0.05;  // drops higher than this above the table fall
  int max_steps = 750;
  double max_delta_deg = 2.0;
  double obs_position_scale = 10.0;  // positions enter observations in 1/scale m
  Vec6 home_deg = Vec6::Zero();
  DhTable dh = DhTable::ur3();
  // Sanity variant: reward is minus the effector-tile distance every step,
  // suction and contact do nothing, episodes only end by truncation.
  bool dense_reach = false;

  void validate() const;

  // Built-in defaults (identical to data/scene.cfg).
  static SceneConfig defaults();
  // INI file, [scene] section; dh_file is resolved relative to the config.
  static SceneConfig load(const std::filesystem::path& path);
};

struct EnvState {
  JointAngles q;
  EffectorState effector{EffectorMode::kSuctionOff, 0};
  EffectorCmd last_cmd = EffectorCmd::kHold;
  Vec3 effector_pos = Vec3::Zero();
  Vec3 tile_pos = Vec3::Zero();
  Vec3 tile_offset = Vec3::Zero();  // tile centre in the effector frame while attached
  TileStatus tile_status = TileStatus::kResting;
  bool ever_picked = false;
  int step_index = 0;
  bool done = false;
};

struct FrameRecord {
  FrameVec frame = FrameVec::Zero();
  ActionVec action = ActionVec::Zero();
};

// Last kStackDepth records, oldest first, zero-padded at the front.
ObsVec stack_observations(std::span<const FrameRecord> history);

struct StepResult {
  ObsVec observation;
  double reward = 0.0;
  bool done = false;
  StepEvent event = StepEvent::kNone;
};

// Kinematic suction tile-installation scene with sparse rewards:
// +1 first pick, +1 install, -0.5 fall.
class TileEnv {
 public:
  explicit TileEnv(SceneConfig config = SceneConfig::defaults());

  ObsVec reset(std::uint64_t episode_seed);
  StepResult step(const AgentAction& action);

  const EnvState& state() const { return state_; }
  const SceneConfig& config() const { return config_; }
  std::uint64_t episode_seed() const { return seed_; }
  ObsVec observation() const;
  HomTransform effector_pose() const { return forward_kinematics(config_.dh, state_.q); }
  FrameVec frame() const;

 private:
  SceneConfig config_;
  EnvState state_;
  std::deque<FrameRecord> history_;
  std::uint64_t seed_ = 0;
};

// Sum of step rewards.
double episode_return(std::span<const double> rewards);

}  // namespace lfd
