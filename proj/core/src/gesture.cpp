#include "lfd/gesture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>

#include "json.hpp"
#include "lfd/error.hpp"

namespace lfd {

bool is_grip_label(GestureLabel l) { return static_cast<int>(l) <= 2; }
bool is_screw_label(GestureLabel l) { return static_cast<int>(l) >= 3 && static_cast<int>(l) <= 7; }

bool label_matches_task(GestureLabel l, GestureTask task) {
  return task == GestureTask::kScrew ? is_screw_label(l) : is_grip_label(l);
}

std::span<const GestureLabel> labels_for(GestureTask task) {
  if (task == GestureTask::kScrew) return kScrewLabels;
  return kGripLabels;
}

std::string_view to_string(GestureLabel l) {
  switch (l) {
    case GestureLabel::kClosing: return "closing";
    case GestureLabel::kOpening: return "opening";
    case GestureLabel::kFixed: return "fixed";
    case GestureLabel::kCloseTighten: return "closing+tightening";
    case GestureLabel::kCloseLoosen: return "closing+loosening";
    case GestureLabel::kCloseFixed: return "closing+fixed";
    case GestureLabel::kOpenStopped: return "opening+stopped";
    case GestureLabel::kFixedStopped: return "fixed+stopped";
  }
  return "?";
}

std::string_view to_string(GestureTask t) {
  switch (t) {
    case GestureTask::kGrip: return "grip";
    case GestureTask::kSuction: return "suction";
    case GestureTask::kScrew: return "screw";
  }
  return "?";
}

std::string_view to_string(EffectorMode m) {
  switch (m) {
    case EffectorMode::kOpen: return "open";
    case EffectorMode::kClosed: return "closed";
    case EffectorMode::kFixedPose: return "fixed_pose";
    case EffectorMode::kSuctionOn: return "suction_on";
    case EffectorMode::kSuctionOff: return "suction_off";
  }
  return "?";
}

GestureLabel gesture_label_from_string(std::string_view s) {
  for (int i = 0; i <= 7; ++i) {
    const auto l = static_cast<GestureLabel>(i);
    if (to_string(l) == s) return l;
  }
  throw Error(ErrorCode::kParseError, "unknown gesture label '" + std::string(s) + "'");
}

GestureTask gesture_task_from_string(std::string_view s) {
  for (auto t : {GestureTask::kGrip, GestureTask::kSuction, GestureTask::kScrew}) {
    if (to_string(t) == s) return t;
  }
  throw Error(ErrorCode::kParseError, "unknown gesture task '" + std::string(s) + "'");
}

bool EffectorState::valid() const {
  if (screw_rate < -1 || screw_rate > 1) return false;
  return screw_rate == 0 || mode == EffectorMode::kClosed;
}

EffectorState apply_gesture(const EffectorState& state, GestureLabel label, GestureTask task,
                            TransitionPolicy policy) {
  auto reject = [&](const std::string& why) -> EffectorState {
    if (policy == TransitionPolicy::kStreaming) return state;
    throw Error(ErrorCode::kInvalidTransition, why);
  };
  if (!state.valid()) return reject("effector state violates the closed-before-screw invariant");
  if (!label_matches_task(label, task)) {
    return reject("gesture '" + std::string(to_string(label)) + "' is not part of the " +
                  std::string(to_string(task)) + " command set");
  }

  EffectorState next = state;
  next.screw_rate = 0;
  switch (label) {
    case GestureLabel::kClosing:
      next.mode = task == GestureTask::kSuction ? EffectorMode::kSuctionOn : EffectorMode::kClosed;
      break;
    case GestureLabel::kOpening:
      next.mode = task == GestureTask::kSuction ? EffectorMode::kSuctionOff : EffectorMode::kOpen;
      break;
    case GestureLabel::kFixed:
    case GestureLabel::kFixedStopped:
      break;
    case GestureLabel::kCloseTighten:
    case GestureLabel::kCloseLoosen:
      // Spinning is only possible once the object is gripped.
      if (state.mode != EffectorMode::kClosed) {
        return reject("screw command while the gripper is " + std::string(to_string(state.mode)));
      }
      next.screw_rate = label == GestureLabel::kCloseTighten ? +1 : -1;
      break;
    case GestureLabel::kCloseFixed:
      next.mode = EffectorMode::kClosed;
      break;
    case GestureLabel::kOpenStopped:
      next.mode = EffectorMode::kOpen;
      break;
  }
  return next;
}

Eigen::VectorXd featurize(const HandSkeleton& skel, const HandSchema& schema) {
  if (skel.landmarks.size() != schema.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "skeleton has " + std::to_string(skel.landmarks.size()) +
                                                " landmarks, schema expects " +
                                                std::to_string(schema.size()));
  }
  const Vec3 wrist = skel.at(landmark::kWrist);
  Eigen::VectorXd f(static_cast<Eigen::Index>(schema.feature_dim()));
  for (size_t i = 0; i < schema.size(); ++i) {
    const auto it = skel.landmarks.find(schema.names()[i]);
    if (it == skel.landmarks.end()) {
      throw Error(ErrorCode::kSchemaMismatch, "skeleton lacks landmark '" + schema.names()[i] + "'");
    }
    f.segment<3>(static_cast<Eigen::Index>(3 * i)) = it->second - wrist;
  }
  return f;
}

std::pair<std::vector<GestureSample>, std::vector<GestureSample>> stratified_split(
    std::span<const GestureSample> data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw Error(ErrorCode::kConfigError, "test fraction must lie in (0, 1)");
  }
  std::map<GestureLabel, std::vector<size_t>> by_class;
  for (size_t i = 0; i < data.size(); ++i) by_class[data[i].label].push_back(i);

  const auto total_test =
      static_cast<size_t>(std::floor(static_cast<double>(data.size()) * test_fraction + 0.5));
  struct Quota {
    GestureLabel label;
    size_t take;
    double remainder;
  };
  std::vector<Quota> quotas;
  size_t assigned = 0;
  for (const auto& [label, idx] : by_class) {
    const double exact = static_cast<double>(idx.size()) * test_fraction;
    const auto floor_take = static_cast<size_t>(std::floor(exact));
    quotas.push_back({label, floor_take, exact - static_cast<double>(floor_take)});
    assigned += floor_take;
  }
  std::vector<size_t> order(quotas.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return quotas[a].remainder > quotas[b].remainder; });
  for (size_t k = 0; assigned < total_test && k < order.size(); ++k, ++assigned) {
    ++quotas[order[k]].take;
  }

  std::mt19937_64 rng(seed);
  std::vector<GestureSample> train, test;
  for (const auto& q : quotas) {
    auto idx = by_class[q.label];
    std::shuffle(idx.begin(), idx.end(), rng);
    for (size_t k = 0; k < idx.size(); ++k) {
      (k < q.take ? test : train).push_back(data[idx[k]]);
    }
  }
  return {std::move(train), std::move(test)};
}

Eigen::MatrixXd sample_matrix(std::span<const GestureSample> data) {
  if (data.empty()) return {};
  const Eigen::Index dim = data.front().features.size();
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(data.size()));
  for (size_t i = 0; i < data.size(); ++i) {
    if (data[i].features.size() != dim) {
      throw Error(ErrorCode::kDimensionMismatch, "gesture samples have inconsistent feature length");
    }
    x.col(static_cast<Eigen::Index>(i)) = data[i].features;
  }
  return x;
}

std::vector<int> sample_labels(std::span<const GestureSample> data) {
  std::vector<int> y;
  y.reserve(data.size());
  for (const auto& s : data) y.push_back(static_cast<int>(s.label));
  return y;
}

namespace {

void check_dataset(std::span<const GestureSample> data) {
  std::map<GestureLabel, int> counts;
  for (const auto& s : data) ++counts[s.label];
  if (counts.size() < 2) throw Error(ErrorCode::kDegenerateDataset, "need at least two classes");
  for (const auto& [label, n] : counts) {
    if (n < 5) {
      throw Error(ErrorCode::kDegenerateDataset,
                  "class '" + std::string(to_string(label)) + "' has fewer than 5 samples");
    }
  }
}

}  // namespace

SvmModel gesture_svm_train(std::span<const GestureSample> data, const SvmParams& params) {
  check_dataset(data);
  const auto y = sample_labels(data);
  return svm_train(sample_matrix(data), y, params);
}

GestureLabel gesture_svm_predict(const SvmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return static_cast<GestureLabel>(model.predict(x));
}

CvResult gesture_cross_validate(std::span<const GestureSample> data,
                                std::span<const GridPoint> grid, int k, std::uint64_t seed) {
  check_dataset(data);
  const auto y = sample_labels(data);
  return cross_validate(sample_matrix(data), y, grid, k, seed);
}

void save_gesture_jsonl(const std::filesystem::path& path, std::span<const GestureSample> data) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& s : data) {
    nlohmann::json j;
    j["label"] = std::string(to_string(s.label));
    j["features"] = std::vector<double>(s.features.data(), s.features.data() + s.features.size());
    out << j.dump() << '\n';
  }
}

std::vector<GestureSample> load_gesture_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::vector<GestureSample> data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      GestureSample s;
      s.label = gesture_label_from_string(j.at("label").get<std::string>());
      const auto f = j.at("features").get<std::vector<double>>();
      s.features = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
      data.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw Error(ErrorCode::kParseError,
                  path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return data;
}

std::vector<GridPoint> default_gesture_grid() {
  std::vector<GridPoint> grid;
  for (double gamma : {10.0, 100.0}) {
    for (double c : {1.0, 10.0, 100.0}) {
      GridPoint g;
      g.c = c;
      g.kernel.type = KernelType::kRbf;
      g.kernel.gamma = gamma;
      grid.push_back(g);
    }
  }
  return grid;
}

}  // namespace lfd
