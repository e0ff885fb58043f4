#include "lfd/tilesim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "lfd/config.hpp"
#include "lfd/error.hpp"

namespace lfd {

std::string_view to_string(EffectorCmd c) {
  switch (c) {
    case EffectorCmd::kSuction: return "suction";
    case EffectorCmd::kDrop: return "drop";
    case EffectorCmd::kHold: return "hold";
  }
  return "?";
}

EffectorCmd effector_cmd_from_string(std::string_view s) {
  if (s == "suction") return EffectorCmd::kSuction;
  if (s == "drop") return EffectorCmd::kDrop;
  if (s == "hold") return EffectorCmd::kHold;
  throw Error(ErrorCode::kParseError, "unknown effector command '" + std::string(s) + "'");
}

GestureLabel gesture_for(EffectorCmd c) {
  switch (c) {
    case EffectorCmd::kSuction: return GestureLabel::kClosing;
    case EffectorCmd::kDrop: return GestureLabel::kOpening;
    case EffectorCmd::kHold: return GestureLabel::kFixed;
  }
  return GestureLabel::kFixed;
}

AgentAction& AgentAction::clip() {
  joint_deltas = joint_deltas.cwiseMax(-1.0).cwiseMin(1.0);
  return *this;
}

ActionVec AgentAction::encode() const {
  ActionVec v;
  v.head<6>() = joint_deltas.cwiseMax(-1.0).cwiseMin(1.0);
  v[6] = cmd == EffectorCmd::kSuction ? 1.0 : cmd == EffectorCmd::kDrop ? -1.0 : 0.0;
  return v;
}

std::string_view to_string(TileStatus s) {
  switch (s) {
    case TileStatus::kResting: return "resting";
    case TileStatus::kAttached: return "attached";
    case TileStatus::kInstalled: return "installed";
    case TileStatus::kFallen: return "fallen";
  }
  return "?";
}

std::string_view to_string(StepEvent e) {
  switch (e) {
    case StepEvent::kNone: return "none";
    case StepEvent::kPicked: return "picked";
    case StepEvent::kInstalled: return "installed";
    case StepEvent::kFell: return "fell";
    case StepEvent::kTruncated: return "truncated";
  }
  return "?";
}

StepEvent step_event_from_string(std::string_view s) {
  for (auto e : {StepEvent::kNone, StepEvent::kPicked, StepEvent::kInstalled, StepEvent::kFell,
                 StepEvent::kTruncated}) {
    if (to_string(e) == s) return e;
  }
  throw Error(ErrorCode::kParseError, "unknown step event '" + std::string(s) + "'");
}

void SceneConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::kConfigError, "scene: " + what); };
  if (!(suction_threshold > 0) || !(install_threshold > 0) || !(contact_knock_threshold > 0)) {
    bad("thresholds must be positive");
  }
  if (!(tile_x_min <= tile_x_max)) bad("tile x range is empty");
  if (tile_x_min < table_x_min || tile_x_max > table_x_max || tile_y < table_y_min ||
      tile_y > table_y_max) {
    bad("tile start lies outside the table");
  }
  if (max_steps <= 0) bad("max_steps must be positive");
  if (!(max_delta_deg > 0)) bad("max_delta_deg must be positive");
  if (!(obs_position_scale > 0)) bad("obs_position_scale must be positive");
  if (!(drop_fall_height >= 0)) bad("drop_fall_height must be non-negative");
}

SceneConfig SceneConfig::defaults() {
  SceneConfig c;
  // Elbow-up posture, suction cups pointing down about 0.15 m over the table.
  c.home_deg << -125.3, -76.2, 123.5, -137.3, -90.0, -35.3;
  return c;
}

SceneConfig SceneConfig::load(const std::filesystem::path& path) {
  const auto f = ConfigFile::load(path);
  SceneConfig c = defaults();
  c.suction_threshold = f.get_double("scene.suction_threshold", c.suction_threshold);
  c.install_threshold = f.get_double("scene.install_threshold", c.install_threshold);
  c.tile_x_min = f.get_double("scene.tile_x_min", c.tile_x_min);
  c.tile_x_max = f.get_double("scene.tile_x_max", c.tile_x_max);
  c.tile_y = f.get_double("scene.tile_y", c.tile_y);
  c.tile_rest_z = f.get_double("scene.tile_rest_z", c.tile_rest_z);
  c.table_top = f.get_double("scene.table_top", c.table_top);
  c.table_x_min = f.get_double("scene.table_x_min", c.table_x_min);
  c.table_x_max = f.get_double("scene.table_x_max", c.table_x_max);
  c.table_y_min = f.get_double("scene.table_y_min", c.table_y_min);
  c.table_y_max = f.get_double("scene.table_y_max", c.table_y_max);
  c.contact_knock_threshold = f.get_double("scene.contact_knock_threshold", c.contact_knock_threshold);
  c.drop_fall_height = f.get_double("scene.drop_fall_height", c.drop_fall_height);
  c.max_steps = static_cast<int>(f.get_int("scene.max_steps", c.max_steps));
  c.max_delta_deg = f.get_double("scene.max_delta_deg", c.max_delta_deg);
  c.obs_position_scale = f.get_double("scene.obs_position_scale", c.obs_position_scale);
  c.dense_reach = f.get_bool("scene.dense_reach", c.dense_reach);

  auto vec = [&](const std::string& key, auto& out) {
    if (!f.has(key)) return;
    const auto v = f.get_doubles(key, {});
    if (static_cast<Eigen::Index>(v.size()) != out.size()) {
      throw Error(ErrorCode::kConfigError, key + ": expected " + std::to_string(out.size()) + " values");
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = v[static_cast<size_t>(i)];
  };
  vec("scene.target", c.target);
  vec("scene.home_deg", c.home_deg);

  if (f.has("scene.dh_file")) {
    std::filesystem::path dh = f.get_string("scene.dh_file", "");
    if (dh.is_relative()) dh = path.parent_path() / dh;
    c.dh = DhTable::load(dh);
  }
  c.validate();
  return c;
}

ObsVec stack_observations(std::span<const FrameRecord> history) {
  ObsVec obs = ObsVec::Zero();
  const size_t n = std::min<size_t>(history.size(), kStackDepth);
  const size_t first_slot = kStackDepth - n;
  for (size_t i = 0; i < n; ++i) {
    const auto& rec = history[history.size() - n + i];
    const auto base = static_cast<Eigen::Index>((first_slot + i) * kSlotDim);
    obs.segment<kFrameDim>(base) = rec.frame;
    obs.segment<kActionDim>(base + kFrameDim) = rec.action;
  }
  return obs;
}

TileEnv::TileEnv(SceneConfig config) : config_(std::move(config)) {
  config_.validate();
  reset(0);
}

FrameVec TileEnv::frame() const {
  FrameVec f = FrameVec::Zero();
  const Vec6 deg = state_.q.degrees();
  f.head<6>() = deg / 180.0;
  f[6 + static_cast<int>(state_.last_cmd)] = 1.0;
  const double s = config_.obs_position_scale;
  f.segment<3>(9) = state_.effector_pos * s;
  f.segment<3>(12) = config_.target * s;
  f.segment<3>(15) = state_.tile_pos * s;
  return f;
}

ObsVec TileEnv::observation() const {
  std::vector<FrameRecord> h(history_.begin(), history_.end());
  return stack_observations(h);
}

ObsVec TileEnv::reset(std::uint64_t episode_seed) {
  seed_ = episode_seed;
  Rng rng(episode_seed);
  std::uniform_real_distribution<double> ux(config_.tile_x_min, config_.tile_x_max);

  state_ = EnvState{};
  state_.q = wrap_angles(config_.home_deg);
  state_.effector = EffectorState{EffectorMode::kSuctionOff, 0};
  state_.last_cmd = EffectorCmd::kHold;
  state_.effector_pos = forward_kinematics(config_.dh, state_.q).translation();
  state_.tile_pos = Vec3(ux(rng), config_.tile_y, config_.tile_rest_z);
  state_.tile_status = TileStatus::kResting;

  history_.clear();
  history_.push_back(FrameRecord{frame(), ActionVec::Zero()});
  return observation();
}

StepResult TileEnv::step(const AgentAction& raw) {
  if (state_.done) throw Error(ErrorCode::kSteppedAfterDone, "step() called on a finished episode");
  AgentAction action = raw;
  action.clip();

  EnvState& s = state_;
  StepResult out;

  // 1. joints
  const Vec6 deg = s.q.degrees() + action.joint_deltas * config_.max_delta_deg;
  s.q = wrap_angles(deg);
  const HomTransform eff = forward_kinematics(config_.dh, s.q);
  s.effector_pos = eff.translation();
  s.effector = apply_gesture(s.effector, gesture_for(action.cmd), GestureTask::kSuction);
  s.last_cmd = action.cmd;

  const bool was_attached = s.tile_status == TileStatus::kAttached;
  if (was_attached) s.tile_pos = eff.apply(s.tile_offset);

  auto finish = [&](StepEvent e, double reward) {
    out.event = e;
    out.reward += reward;
    s.done = true;
  };

  if (config_.dense_reach) {
    out.reward = -(s.effector_pos - s.tile_pos).norm();
  } else if (s.tile_status == TileStatus::kResting) {
    const double dist = (s.effector_pos - s.tile_pos).norm();
    if (action.cmd == EffectorCmd::kSuction && dist < config_.suction_threshold) {
      // 2. pick; only the first pick of an episode is rewarded
      s.tile_status = TileStatus::kAttached;
      s.tile_offset = eff.inverse().apply(s.tile_pos);
      s.tile_pos = eff.apply(s.tile_offset);
      out.event = StepEvent::kPicked;
      if (!s.ever_picked) out.reward += 1.0;
      s.ever_picked = true;
    } else if (action.cmd != EffectorCmd::kSuction && dist < config_.contact_knock_threshold) {
      s.tile_status = TileStatus::kFallen;
      finish(StepEvent::kFell, -0.5);
    }
  } else if (was_attached) {
    const double to_target = (s.tile_pos - config_.target).norm();
    if (to_target < config_.install_threshold) {
      // 3. install, whether or not the agent releases here
      s.tile_status = TileStatus::kInstalled;
      finish(StepEvent::kInstalled, 1.0);
    } else if (action.cmd == EffectorCmd::kDrop) {
      // 4. release away from the target
      const bool off_table = s.tile_pos.x() < config_.table_x_min || s.tile_pos.x() > config_.table_x_max ||
                             s.tile_pos.y() < config_.table_y_min || s.tile_pos.y() > config_.table_y_max;
      const bool too_high = s.tile_pos.z() - config_.table_top > config_.drop_fall_height;
      if (off_table || too_high) {
        s.tile_status = TileStatus::kFallen;
        finish(StepEvent::kFell, -0.5);
      } else {
        s.tile_status = TileStatus::kResting;
        s.tile_pos.z() = config_.tile_rest_z;
      }
    }
  }

  ++s.step_index;
  if (!s.done && s.step_index >= config_.max_steps) {
    // A pick on the very last step keeps its reward; the event reports truncation.
    finish(StepEvent::kTruncated, 0.0);
  }

  history_.push_back(FrameRecord{frame(), action.encode()});
  while (history_.size() > static_cast<size_t>(kStackDepth)) history_.pop_front();
  out.observation = observation();
  out.done = s.done;
  return out;
}

double episode_return(std::span<const double> rewards) {
  double total = 0.0;
  for (double r : rewards) total += r;
  return total;
}

}  // namespace lfd
