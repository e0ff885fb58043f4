#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "lfd/handmap.hpp"
#include "lfd/svm.hpp"

namespace lfd {

// The grip/suction alphabet is {closing, opening, fixed}. Screwing uses
// (grip gesture, screw gesture) tuples; only the five listed ones exist.
enum class GestureLabel : std::uint8_t {
  kClosing = 0,
  kOpening = 1,
  kFixed = 2,
  kCloseTighten = 3,  // (closing, tightening)
  kCloseLoosen = 4,   // (closing, loosening)
  kCloseFixed = 5,    // (closing, fixed)
  kOpenStopped = 6,   // (opening, stopped)
  kFixedStopped = 7,  // (fixed, stopped)
};

enum class GestureTask : std::uint8_t { kGrip, kSuction, kScrew };

inline constexpr std::array<GestureLabel, 3> kGripLabels = {
    GestureLabel::kClosing, GestureLabel::kOpening, GestureLabel::kFixed};
inline constexpr std::array<GestureLabel, 5> kScrewLabels = {
    GestureLabel::kCloseTighten, GestureLabel::kCloseLoosen, GestureLabel::kCloseFixed,
    GestureLabel::kOpenStopped, GestureLabel::kFixedStopped};

bool is_grip_label(GestureLabel l);
bool is_screw_label(GestureLabel l);
bool label_matches_task(GestureLabel l, GestureTask task);
std::span<const GestureLabel> labels_for(GestureTask task);

std::string_view to_string(GestureLabel l);
std::string_view to_string(GestureTask t);
GestureLabel gesture_label_from_string(std::string_view s);
GestureTask gesture_task_from_string(std::string_view s);

enum class EffectorMode : std::uint8_t { kOpen, kClosed, kFixedPose, kSuctionOn, kSuctionOff };
inline constexpr std::array<EffectorMode, 5> kAllEffectorModes = {
    EffectorMode::kOpen, EffectorMode::kClosed, EffectorMode::kFixedPose, EffectorMode::kSuctionOn,
    EffectorMode::kSuctionOff};

std::string_view to_string(EffectorMode m);

struct EffectorState {
  EffectorMode mode = EffectorMode::kOpen;
  int screw_rate = 0;  // +1 tighten, -1 loosen, 0 still

  // screw_rate != 0 only while closed.
  bool valid() const;
  bool operator==(const EffectorState&) const = default;
};

enum class TransitionPolicy : std::uint8_t {
  kStrict,     // invalid commands throw InvalidTransition
  kStreaming,  // invalid commands are ignored and the state is held
};

// Gesture command machines for gripping, suction and screwing.
EffectorState apply_gesture(const EffectorState& state, GestureLabel label, GestureTask task,
                            TransitionPolicy policy = TransitionPolicy::kStrict);

struct GestureSample {
  Eigen::VectorXd features;
  GestureLabel label = GestureLabel::kClosing;
};

// Flattens the landmarks in schema order, relative to the wrist.
Eigen::VectorXd featurize(const HandSkeleton& skel,
                          const HandSchema& schema = HandSchema::default21());

// Stratified split. The total test count is round-half-up(n * test_fraction);
// per-class quotas are distributed by largest remainder.
std::pair<std::vector<GestureSample>, std::vector<GestureSample>> stratified_split(
    std::span<const GestureSample> data, double test_fraction, std::uint64_t seed);

// Convenience packing for the SVM layer: features as columns, labels as ints.
Eigen::MatrixXd sample_matrix(std::span<const GestureSample> data);
std::vector<int> sample_labels(std::span<const GestureSample> data);

SvmModel gesture_svm_train(std::span<const GestureSample> data, const SvmParams& params);
GestureLabel gesture_svm_predict(const SvmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x);

// Validates the preconditions (>= 2 classes, >= 5 samples per class) and
// delegates to the generic grid search.
CvResult gesture_cross_validate(std::span<const GestureSample> data,
                                std::span<const GridPoint> grid, int k, std::uint64_t seed);

// RBF grid used by the CLI and the accuracy checks. Features are wrist-relative
// metres, so useful gammas are large.
std::vector<GridPoint> default_gesture_grid();

// JSONL, one sample per line: {"label": "...", "features": [...]}.
void save_gesture_jsonl(const std::filesystem::path& path, std::span<const GestureSample> data);
std::vector<GestureSample> load_gesture_jsonl(const std::filesystem::path& path);

// Parametric hand-pose generator standing in for headset-captured skeletons.
struct SynthSpec {
  GestureTask task = GestureTask::kGrip;
  std::vector<std::pair<GestureLabel, int>> counts;
  double landmark_noise = 0.003;  // m, per-coordinate Gaussian jitter
  double curl_noise = 0.06;       // per-finger curl jitter (curl in [0, 1])
  double max_tilt_deg = 15.0;     // random wrist roll/pitch
  double max_yaw_deg = 20.0;

  // 827 samples: 290 closing, 274 opening, 263 fixed.
  static SynthSpec grip();
  // 6925 samples over the five screwing tuples.
  static SynthSpec screw();
};

HandSkeleton synth_hand(GestureLabel label, std::uint64_t seed, const SynthSpec& spec);
std::vector<GestureSample> synth_hand_dataset(const SynthSpec& spec, std::uint64_t seed);

}  // namespace lfd
