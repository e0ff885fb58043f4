#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "lfd/error.hpp"
#include "lfd/gesture.hpp"

namespace lfd {
namespace {

// Finger order: thumb, index, middle, ring, pinky.
using Curls = std::array<double, 5>;

Curls nominal_curls(GestureLabel label) {
  switch (label) {
    case GestureLabel::kClosing: return {0.85, 0.9, 0.9, 0.9, 0.9};
    case GestureLabel::kOpening: return {0.05, 0.05, 0.05, 0.05, 0.05};
    case GestureLabel::kFixed: return {0.45, 0.45, 0.45, 0.45, 0.45};
    case GestureLabel::kCloseTighten: return {0.0, 0.9, 0.9, 0.9, 0.9};
    case GestureLabel::kCloseLoosen: return {0.9, 0.9, 0.9, 0.9, 0.05};
    case GestureLabel::kCloseFixed: return {0.85, 0.9, 0.9, 0.9, 0.9};
    case GestureLabel::kOpenStopped: return {0.05, 0.05, 0.05, 0.05, 0.05};
    case GestureLabel::kFixedStopped: return {0.45, 0.45, 0.45, 0.45, 0.45};
  }
  return {};
}

struct FingerGeometry {
  const char* name;
  Vec3 base;                    // proximal joint in the hand frame
  std::array<double, 3> links;  // proximal->intermediate->distal->tip
};

// Hand frame: palm in the xy plane, fingers along +y, back of the hand +z.
constexpr double kFlexion[3] = {85.0, 100.0, 70.0};

const std::array<FingerGeometry, 4>& fingers() {
  static const std::array<FingerGeometry, 4> f = {{
      {"index", Vec3(0.030, 0.090, 0.0), {0.045, 0.028, 0.022}},
      {"middle", Vec3(0.008, 0.095, 0.0), {0.050, 0.030, 0.023}},
      {"ring", Vec3(-0.013, 0.090, 0.0), {0.047, 0.028, 0.022}},
      {"pinky", Vec3(-0.032, 0.080, 0.0), {0.037, 0.022, 0.020}},
  }};
  return f;
}

}  // namespace

SynthSpec SynthSpec::grip() {
  SynthSpec s;
  s.task = GestureTask::kGrip;
  s.counts = {{GestureLabel::kClosing, 290}, {GestureLabel::kOpening, 274}, {GestureLabel::kFixed, 263}};
  return s;
}

SynthSpec SynthSpec::screw() {
  SynthSpec s;
  s.task = GestureTask::kScrew;
  s.counts = {{GestureLabel::kCloseTighten, 1475},
              {GestureLabel::kCloseLoosen, 1289},
              {GestureLabel::kCloseFixed, 1494},
              {GestureLabel::kOpenStopped, 1209},
              {GestureLabel::kFixedStopped, 1458}};
  return s;
}

HandSkeleton synth_hand(GestureLabel label, std::uint64_t seed, const SynthSpec& spec) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  Curls curls = nominal_curls(label);
  for (double& c : curls) c = std::clamp(c + spec.curl_noise * unit(rng), 0.0, 1.0);
  const double scale = 1.0 + 0.05 * unit(rng);

  std::vector<std::pair<std::string, Vec3>> local;
  local.emplace_back("wrist", Vec3::Zero());

  // Thumb: sweeps from pointing out-and-forward toward across the palm.
  {
    const Vec3 open_dir = Vec3(0.5, 0.8, -0.2).normalized();
    const Vec3 curled_dir = Vec3(-0.7, 0.3, -0.6).normalized();
    const std::array<double, 3> links = {0.040, 0.032, 0.028};
    const std::array<double, 3> weight = {0.5, 0.8, 1.0};
    Vec3 p(0.025, 0.025, -0.010);
    local.emplace_back("thumb_cmc", p);
    const char* names[3] = {"thumb_mcp", "thumb_ip", "thumb_tip"};
    for (int s = 0; s < 3; ++s) {
      const double w = curls[0] * weight[static_cast<size_t>(s)];
      const Vec3 dir = ((1.0 - w) * open_dir + w * curled_dir).normalized();
      p += links[static_cast<size_t>(s)] * dir;
      local.emplace_back(names[s], p);
    }
  }
  for (size_t k = 0; k < fingers().size(); ++k) {
    const auto& f = fingers()[k];
    const double curl = curls[k + 1];
    Vec3 p = f.base;
    local.emplace_back(std::string(f.name) + "_proximal", p);
    const char* joints[3] = {"_intermediate", "_distal", "_tip"};
    double phi = 0.0;
    for (int s = 0; s < 3; ++s) {
      phi += curl * kFlexion[s] * std::numbers::pi / 180.0;
      p += f.links[static_cast<size_t>(s)] * Vec3(0.0, std::cos(phi), -std::sin(phi));
      local.emplace_back(std::string(f.name) + joints[s], p);
    }
  }

  const double yaw = spec.max_yaw_deg * uni(rng) * std::numbers::pi / 180.0;
  const double pitch = spec.max_tilt_deg * uni(rng) * std::numbers::pi / 180.0;
  const double roll = spec.max_tilt_deg * uni(rng) * std::numbers::pi / 180.0;
  const Mat3 rot = (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) * Eigen::AngleAxisd(pitch, Vec3::UnitX()) *
                    Eigen::AngleAxisd(roll, Vec3::UnitY()))
                       .toRotationMatrix();
  const Vec3 wrist(0.2 * uni(rng), 0.25 + 0.15 * uni(rng), 0.25 + 0.15 * uni(rng));

  HandSkeleton skel;
  for (const auto& [name, p] : local) {
    Vec3 world = wrist + rot * (scale * p);
    if (name != "wrist") {
      world += spec.landmark_noise * Vec3(unit(rng), unit(rng), unit(rng));
    }
    skel.landmarks[name] = world;
  }
  return skel;
}

std::vector<GestureSample> synth_hand_dataset(const SynthSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GestureSample> data;
  for (const auto& [label, count] : spec.counts) {
    if (!label_matches_task(label, spec.task)) {
      throw Error(ErrorCode::kConfigError, "synth spec label '" + std::string(to_string(label)) +
                                               "' does not belong to task " +
                                               std::string(to_string(spec.task)));
    }
    for (int i = 0; i < count; ++i) {
      data.push_back({featurize(synth_hand(label, rng(), spec)), label});
    }
  }
  std::shuffle(data.begin(), data.end(), rng);
  return data;
}

}  // namespace lfd
