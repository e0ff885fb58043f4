#include "lfd/handmap.hpp"

#include <algorithm>

#include "json.hpp"
#include "lfd/error.hpp"

namespace lfd {

HandSchema::HandSchema(std::vector<std::string> names) : names_(std::move(names)) {
  for (auto required : {landmark::kWrist, landmark::kIndexProximal, landmark::kMiddleProximal}) {
    if (index_of(required) < 0) {
      throw Error(ErrorCode::kSchemaMismatch,
                  "hand schema lacks required landmark '" + std::string(required) + "'");
    }
  }
  auto sorted = names_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw Error(ErrorCode::kSchemaMismatch, "hand schema has duplicate landmark names");
  }
}

const HandSchema& HandSchema::default21() {
  static const HandSchema schema = [] {
    std::vector<std::string> names = {"wrist", "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip"};
    for (const char* finger : {"index", "middle", "ring", "pinky"}) {
      for (const char* joint : {"proximal", "intermediate", "distal", "tip"}) {
        names.push_back(std::string(finger) + "_" + joint);
      }
    }
    return HandSchema(std::move(names));
  }();
  return schema;
}

int HandSchema::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  return it == names_.end() ? -1 : static_cast<int>(it - names_.begin());
}

const Vec3& HandSkeleton::at(std::string_view name) const {
  auto it = landmarks.find(name);
  if (it == landmarks.end()) {
    throw Error(ErrorCode::kSchemaMismatch, "skeleton lacks landmark '" + std::string(name) + "'");
  }
  return it->second;
}

HandFrame hand_frame(const HandSkeleton& skel) {
  const Vec3& wrist = skel.at(landmark::kWrist);
  const Vec3& index = skel.at(landmark::kIndexProximal);
  const Vec3& middle = skel.at(landmark::kMiddleProximal);
  if (!wrist.allFinite() || !index.allFinite() || !middle.allFinite()) {
    throw Error(ErrorCode::kDegenerateHand, "non-finite landmark coordinates");
  }
  const Vec3 x_raw = middle - index;
  const Vec3 y_raw = middle - wrist;
  const Vec3 z_raw = x_raw.cross(y_raw);
  const double zn = z_raw.norm();
  if (zn < 1e-9) {
    throw Error(ErrorCode::kDegenerateHand,
                "wrist, index and middle proximal landmarks are (nearly) collinear");
  }
  HandFrame f;
  f.origin = wrist;
  f.z = z_raw / zn;
  f.y = y_raw.normalized();
  f.x = f.y.cross(f.z);
  return f;
}

HomTransform hand_to_target_pose(const HandFrame& frame) {
  return pose_to_transform(frame.origin, frame.x, frame.y, frame.z);
}

std::string skeleton_to_json(const HandSkeleton& skel) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, p] : skel.landmarks) j[name] = {p.x(), p.y(), p.z()};
  return j.dump();
}

HandSkeleton skeleton_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("skeleton JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "skeleton JSON must be an object");
  HandSkeleton skel;
  for (const auto& [name, value] : j.items()) {
    if (!value.is_array() || value.size() != 3) {
      throw Error(ErrorCode::kParseError, "landmark '" + name + "' must be [x, y, z]");
    }
    for (const auto& c : value) {
      if (!c.is_number()) {
        throw Error(ErrorCode::kParseError, "landmark '" + name + "' has a non-numeric coordinate");
      }
    }
    skel.landmarks[name] = Vec3(value[0].get<double>(), value[1].get<double>(),
                                value[2].get<double>());
  }
  return skel;
}

}  // namespace lfd
