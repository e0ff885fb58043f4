#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lfd/demos.hpp"
#include "lfd/kinematics.hpp"
#include "lfd/svm.hpp"
#include "lfd/tilesim.hpp"

namespace lfd {

inline constexpr std::string_view kTeleopSchema = "TELEOP1";

struct BridgeConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8765;  // 0 picks a free port
  double tick_hz = 20.0;
  // true: one env step per received cmd (scripted clients, tests);
  // false: fixed-rate ticks with commands coalesced in between.
  bool step_per_command = false;
  std::filesystem::path static_dir;   // served at "/"
  std::filesystem::path record_path;  // recorded demos (JSONL); empty disables saving
  std::filesystem::path gesture_model;  // GSVM1 model for skeleton mode
  std::uint64_t seed = 0;
  SceneConfig scene = SceneConfig::defaults();
  IkSettings ik{};
};

// Simulation side of a teleop session, independent of the transport. Every
// method is called from one thread, in message arrival order.
struct TeleopCommand {
  Vec3 target_delta = Vec3::Zero();  // m, base frame
  Vec3 rot_delta = Vec3::Zero();     // degrees about the base axes
  EffectorCmd cmd = EffectorCmd::kHold;
};

class TeleopSession {
 public:
  explicit TeleopSession(const BridgeConfig& config);

  struct Reply {
    std::vector<std::string> to_sender;  // e.g. error frames, acks
    bool broadcast_state = false;        // a tick happened; send state to all
  };

  // Parses and applies one client message. `driver` is false for view-only
  // clients, whose commands are refused.
  Reply handle(std::string_view text, bool driver);
  // Fixed-rate tick: applies the coalesced command (if any) and steps the
  // env. Returns messages for the driver (tracking errors, saves); `stepped`
  // tells whether state changed.
  std::vector<std::string> tick(bool& stepped);

  std::string state_message(bool driver) const;
  std::string hello_message(bool driver) const;
  static std::string error_message(std::string_view code, std::string_view message);

  const TileEnv& env() const { return env_; }
  const HomTransform& target_pose() const { return target_; }
  bool recording() const { return recording_; }
  // Recording applies to the current episode (armed at its first step).
  bool recording_live() const { return recording_live_; }
  const DemoSet& recorded() const { return recorded_; }

 private:
  void reset(std::uint64_t seed);
  // Integrates the command into the target pose, tracks it with IK and
  // steps the env once. Returns an error frame on tracking loss.
  std::optional<std::string> step_with(const TeleopCommand& cmd, std::vector<std::string>& notes);
  std::string finish_recording();

  BridgeConfig config_;
  TileEnv env_;
  HomTransform target_;
  std::optional<TeleopCommand> pending_;
  std::optional<SvmModel> gesture_model_;
  std::optional<Vec3> skeleton_anchor_;
  Vec3 target_anchor_ = Vec3::Zero();
  bool recording_ = false;
  bool recording_live_ = false;
  Trajectory current_;
  DemoSet recorded_;
  StepResult last_;
};

// Websocket endpoint at /ws plus static files at /, over Boost.Beast. The
// first connected client drives; later ones are view-only.
class TeleopServer {
 public:
  explicit TeleopServer(BridgeConfig config);
  ~TeleopServer();
  TeleopServer(const TeleopServer&) = delete;
  TeleopServer& operator=(const TeleopServer&) = delete;

  // Binds and starts the I/O thread. Throws PortInUse.
  void start();
  void stop();
  // Blocks until stop() is called from another thread or a signal arrives.
  void wait();
  std::uint16_t port() const;

  struct Impl;  // opaque; public only so the connection classes can reach it

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace lfd
