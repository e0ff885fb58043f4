#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "lfd/kinematics.hpp"

namespace lfd {

namespace landmark {
inline constexpr std::string_view kWrist = "wrist";
inline constexpr std::string_view kIndexProximal = "index_proximal";
inline constexpr std::string_view kMiddleProximal = "middle_proximal";
}  // namespace landmark

// Ordered landmark names. Must contain the three frame-defining landmarks;
// everything else is only used as classifier features.
class HandSchema {
 public:
  explicit HandSchema(std::vector<std::string> names);

  // wrist + 4 thumb joints + 4 joints per finger (proximal, intermediate,
  // distal, tip) for index, middle, ring and pinky.
  static const HandSchema& default21();

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }
  size_t feature_dim() const { return 3 * names_.size(); }
  // -1 when the name is not part of the schema.
  int index_of(std::string_view name) const;

  bool operator==(const HandSchema& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
};

// Landmark coordinates in meters, keyed by name.
struct HandSkeleton {
  std::map<std::string, Vec3, std::less<>> landmarks;

  const Vec3& at(std::string_view name) const;
  bool has(std::string_view name) const { return landmarks.find(name) != landmarks.end(); }
};

struct HandFrame {
  Vec3 origin = Vec3::Zero();
  Vec3 x = Vec3::UnitX();
  Vec3 y = Vec3::UnitY();
  Vec3 z = Vec3::UnitZ();
};

// y = wrist->middle_proximal, x' = index_proximal->middle_proximal,
// z = normalize(x' cross y'), x = y cross z. Throws DegenerateHand when
// |x' cross y'| < 1e-9.
HandFrame hand_frame(const HandSkeleton& skel);

HomTransform hand_to_target_pose(const HandFrame& frame);

// JSON object {name: [x, y, z], ...}.
std::string skeleton_to_json(const HandSkeleton& skel);
HandSkeleton skeleton_from_json(std::string_view text);

}  // namespace lfd
