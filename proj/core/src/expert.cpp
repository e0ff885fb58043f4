#include <algorithm>
#include <cmath>

#include "lfd/demos.hpp"
#include "lfd/error.hpp"

namespace lfd {
namespace {

Vec6 wrapped_diff(const Vec6& to, const Vec6& from) {
  Vec6 d;
  for (int i = 0; i < 6; ++i) d[i] = wrap_degrees(to[i] - from[i]);
  return d;
}

}  // namespace

AgentAction scripted_expert(const EnvState& state, const SceneConfig& scene, const ExpertConfig& expert) {
  AgentAction act;
  if (state.done) return act;

  const JointAngles home = wrap_angles(scene.home_deg);
  const HomTransform home_pose = forward_kinematics(scene.dh, home);
  const Vec3 eff = state.effector_pos;

  Vec3 goal;
  if (state.tile_status == TileStatus::kAttached) {
    // carry so that the tile centre lands on the target
    goal = scene.target + (eff - state.tile_pos);
  } else {
    const Vec3 hover = state.tile_pos + Vec3(0, 0, expert.hover_height);
    const Vec3 grasp = state.tile_pos + Vec3(0, 0, expert.grasp_height);
    const double xy_err = (eff.head<2>() - state.tile_pos.head<2>()).norm();
    goal = xy_err > expert.align_tolerance ? hover : grasp;
    if ((eff - state.tile_pos).norm() < expert.suction_distance) act.cmd = EffectorCmd::kSuction;
  }

  // one bounded Cartesian step towards the goal, orientation held
  const Vec3 to_goal = goal - eff;
  const double len = to_goal.norm();
  const Vec3 waypoint = len > expert.cartesian_step ? Vec3(eff + to_goal * (expert.cartesian_step / len)) : goal;
  const HomTransform target(home_pose.rotation(), waypoint);

  JointAngles q_goal;
  try {
    q_goal = solve_ik(scene.dh, state.q, target, expert.ik).q;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNotConverged) throw;
    try {
      q_goal = solve_ik(scene.dh, home, target, expert.ik).q;
    } catch (const Error& e2) {
      if (e2.code() != ErrorCode::kNotConverged) throw;
      throw Error(ErrorCode::kExpertStuck, "expert IK failed for waypoint");
    }
  }

  const Vec6 diff = wrapped_diff(q_goal.degrees(), state.q.degrees()) / scene.max_delta_deg;
  const double peak = diff.cwiseAbs().maxCoeff();
  act.joint_deltas = peak > 1.0 ? Vec6(diff / peak) : diff;
  return act;
}

}  // namespace lfd
