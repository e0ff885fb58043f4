#include <doctest.h>

#include <Eigen/Geometry>

#include <filesystem>
#include <map>
#include <random>
#include <set>

#include "lfd/error.hpp"
#include "lfd/gesture.hpp"
#include "lfd/handmap.hpp"
#include "lfd/svm.hpp"

using namespace lfd;

namespace {

HandSkeleton three_point_hand(const Vec3& wrist, const Vec3& index, const Vec3& middle) {
  HandSkeleton s;
  s.landmarks["wrist"] = wrist;
  s.landmarks["index_proximal"] = index;
  s.landmarks["middle_proximal"] = middle;
  return s;
}

}  // namespace

TEST_CASE("hand frame of an axis-aligned hand") {
  // wrist at origin, middle knuckle straight up y, index knuckle towards -x
  const HandFrame f = hand_frame(three_point_hand(Vec3(0.1, 0.2, 0.3), Vec3(0.08, 0.29, 0.3), Vec3(0.1, 0.29, 0.3)));
  // x' = middle - index = +x; y' = +y; z = x' cross y' = +z
  CHECK((f.origin - Vec3(0.1, 0.2, 0.3)).norm() < 1e-15);
  CHECK((f.y - Vec3::UnitY()).norm() < 1e-12);
  CHECK((f.z - Vec3::UnitZ()).norm() < 1e-12);
  CHECK((f.x - Vec3::UnitX()).norm() < 1e-12);
}

TEST_CASE("hand frame is orthonormal and right-handed for random hands") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int i = 0; i < 500; ++i) {
    const HandSkeleton s =
        three_point_hand(Vec3(g(rng), g(rng), g(rng)), Vec3(g(rng), g(rng), g(rng)), Vec3(g(rng), g(rng), g(rng)));
    HandFrame f;
    try {
      f = hand_frame(s);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kDegenerateHand);
      continue;
    }
    Mat3 r;
    r << f.x, f.y, f.z;
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0));
    // y points from the wrist to the middle knuckle
    CHECK(f.y.dot(s.at("middle_proximal") - s.at("wrist")) > 0);
    const HomTransform t = hand_to_target_pose(f);
    CHECK((t.translation() - f.origin).norm() == 0.0);
  }
}

TEST_CASE("collinear knuckles are degenerate") {
  try {
    hand_frame(three_point_hand(Vec3(0, 0, 0), Vec3(0, 0.05, 0), Vec3(0, 0.1, 0)));
    FAIL("expected DegenerateHand");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateHand);
  }
  HandSkeleton missing;
  missing.landmarks["wrist"] = Vec3::Zero();
  CHECK_THROWS_AS(hand_frame(missing), Error);
}

TEST_CASE("skeleton JSON round trip and errors") {
  const HandSkeleton s = synth_hand(GestureLabel::kOpening, 3, SynthSpec::grip());
  const HandSkeleton back = skeleton_from_json(skeleton_to_json(s));
  CHECK(back.landmarks.size() == s.landmarks.size());
  for (const auto& [name, p] : s.landmarks) CHECK((back.at(name) - p).norm() == 0.0);
  CHECK_THROWS_AS(skeleton_from_json("[1,2,3]"), Error);
  CHECK_THROWS_AS(skeleton_from_json("{\"wrist\": [1, 2]}"), Error);
  CHECK_THROWS_AS(skeleton_from_json("{\"wrist\": [1, \"a\", 2]}"), Error);
  CHECK_THROWS_AS(skeleton_from_json("{"), Error);
}

TEST_CASE("gesture machine: exhaustive state x label enumeration keeps closed-before-screw") {
  const GestureTask tasks[] = {GestureTask::kGrip, GestureTask::kSuction, GestureTask::kScrew};
  int visited = 0;
  for (GestureTask task : tasks) {
    for (EffectorMode mode : kAllEffectorModes) {
      for (int rate = -1; rate <= 1; ++rate) {
        const EffectorState s{mode, rate};
        for (int l = 0; l <= 7; ++l) {
          const auto label = static_cast<GestureLabel>(l);
          ++visited;
          const EffectorState streamed = apply_gesture(s, label, task, TransitionPolicy::kStreaming);
          if (s.valid()) CHECK(streamed.valid());
          // the spin command only ever comes out of a closed gripper
          if (streamed.screw_rate != 0 && streamed != s) CHECK(s.mode == EffectorMode::kClosed);
          try {
            const EffectorState next = apply_gesture(s, label, task);
            CHECK(next.valid());
            CHECK(s.valid());
            CHECK(label_matches_task(label, task));
          } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::kInvalidTransition);
            CHECK(streamed == s);
          }
        }
      }
    }
  }
  CHECK(visited == 3 * 5 * 3 * 8);
}

TEST_CASE("gesture machine transitions") {
  const EffectorState open{EffectorMode::kOpen, 0};
  CHECK(apply_gesture(open, GestureLabel::kClosing, GestureTask::kGrip).mode == EffectorMode::kClosed);
  CHECK(apply_gesture(open, GestureLabel::kFixed, GestureTask::kGrip) == open);
  CHECK(apply_gesture(open, GestureLabel::kClosing, GestureTask::kSuction).mode == EffectorMode::kSuctionOn);
  CHECK(apply_gesture(open, GestureLabel::kOpening, GestureTask::kSuction).mode == EffectorMode::kSuctionOff);
  CHECK_THROWS_AS(apply_gesture(open, GestureLabel::kCloseTighten, GestureTask::kScrew), Error);
  const EffectorState closed = apply_gesture(open, GestureLabel::kCloseFixed, GestureTask::kScrew);
  CHECK(closed.mode == EffectorMode::kClosed);
  const EffectorState spinning = apply_gesture(closed, GestureLabel::kCloseTighten, GestureTask::kScrew);
  CHECK(spinning.screw_rate == 1);
  CHECK(apply_gesture(spinning, GestureLabel::kCloseLoosen, GestureTask::kScrew).screw_rate == -1);
  const EffectorState stopped = apply_gesture(spinning, GestureLabel::kFixedStopped, GestureTask::kScrew);
  CHECK(stopped.screw_rate == 0);
  CHECK(stopped.mode == EffectorMode::kClosed);
  CHECK(apply_gesture(spinning, GestureLabel::kOpenStopped, GestureTask::kScrew) == EffectorState{EffectorMode::kOpen, 0});
  // labels from the other alphabet
  CHECK_THROWS_AS(apply_gesture(open, GestureLabel::kClosing, GestureTask::kScrew), Error);
  CHECK_THROWS_AS(apply_gesture(open, GestureLabel::kCloseFixed, GestureTask::kGrip), Error);
}

TEST_CASE("synthetic datasets have the documented class counts") {
  const auto grip = synth_hand_dataset(SynthSpec::grip(), 1);
  CHECK(grip.size() == 827);
  std::map<GestureLabel, int> counts;
  for (const auto& s : grip) counts[s.label]++;
  CHECK(counts[GestureLabel::kClosing] == 290);
  CHECK(counts[GestureLabel::kOpening] == 274);
  CHECK(counts[GestureLabel::kFixed] == 263);
  CHECK(synth_hand_dataset(SynthSpec::screw(), 1).size() == 6925);
  // deterministic under seed
  const auto again = synth_hand_dataset(SynthSpec::grip(), 1);
  CHECK(again[100].features == grip[100].features);
  CHECK(grip[0].features.size() == static_cast<Eigen::Index>(HandSchema::default21().feature_dim()));
}

TEST_CASE("stratified split honours the ratio and keeps class proportions") {
  const auto data = synth_hand_dataset(SynthSpec::grip(), 2);
  const auto [train, test] = stratified_split(data, 0.2, 5);
  CHECK(train.size() + test.size() == data.size());
  CHECK(test.size() == 165);  // round-half-up(827 * 0.2) = round(165.4)
  std::map<GestureLabel, int> tc;
  for (const auto& s : test) tc[s.label]++;
  CHECK(std::abs(tc[GestureLabel::kClosing] - 290 * 0.2) <= 1.0);
  CHECK(std::abs(tc[GestureLabel::kOpening] - 274 * 0.2) <= 1.0);
  CHECK(std::abs(tc[GestureLabel::kFixed] - 263 * 0.2) <= 1.0);
}

TEST_CASE("featurize is wrist-relative") {
  HandSkeleton s = synth_hand(GestureLabel::kClosing, 9, SynthSpec::grip());
  const Eigen::VectorXd f = featurize(s);
  for (auto& [name, p] : s.landmarks) p += Vec3(1.0, -2.0, 0.5);
  CHECK((featurize(s) - f).norm() < 1e-12);
  CHECK(f.head<3>().norm() == 0.0);  // the wrist itself
}

TEST_CASE("SMO recovers a hard-margin linear separator") {
  // two points per side of x = 0: the max-margin plane is x = 0 with w = 1
  Eigen::MatrixXd x(1, 4);
  x << -2, -1, 1, 2;
  const std::vector<int> y{-1, -1, 1, 1};
  KernelSpec lin;
  lin.type = KernelType::kLinear;
  const BinaryDual d = smo_solve(kernel_matrix(lin, x), y, 1e6, 1e-8, 100000);
  // closed form: only x = +-1 are support vectors with alpha = 0.5, bias 0
  CHECK(d.alpha[0] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(d.alpha[1] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(d.alpha[2] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(d.bias == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("one-vs-rest SVM separates Gaussian blobs and round-trips to disk") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.3);
  Eigen::MatrixXd x(2, 150);
  std::vector<int> labels(150);
  const Vec3 centres[3] = {Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(0, 3, 0)};
  for (int i = 0; i < 150; ++i) {
    labels[i] = i % 3;
    x(0, i) = centres[i % 3].x() + g(rng);
    x(1, i) = centres[i % 3].y() + g(rng);
  }
  SvmParams p;
  p.kernel.type = KernelType::kRbf;
  p.kernel.gamma = 0.5;
  p.c = 10;
  const SvmModel m = svm_train(x, labels, p);
  CHECK(svm_accuracy(m, x, labels) > 0.99);
  const auto path = std::filesystem::temp_directory_path() / "lfd_test_model.svm";
  m.save(path);
  const SvmModel back = SvmModel::load(path);
  CHECK(back == m);
  std::filesystem::remove(path);
}

TEST_CASE("stratified folds are balanced and the grid search is reproducible") {
  std::vector<int> labels;
  for (int i = 0; i < 50; ++i) labels.push_back(i % 2);
  const auto folds = stratified_folds(labels, 5, 3);
  std::map<std::pair<int, int>, int> per;
  for (size_t i = 0; i < labels.size(); ++i) per[{folds[i], labels[i]}]++;
  for (const auto& [k, v] : per) CHECK(v == 5);

  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd x(2, 50);
  for (int i = 0; i < 50; ++i) {
    x(0, i) = g(rng) + 2.0 * labels[i];
    x(1, i) = g(rng);
  }
  std::vector<GridPoint> grid;
  for (double c : {1.0, 10.0}) {
    for (double gamma : {0.1, 1.0}) {
      GridPoint gp;
      gp.c = c;
      gp.kernel.gamma = gamma;
      grid.push_back(gp);
    }
  }
  const CvResult a = cross_validate(x, labels, grid, 5, 1);
  const CvResult b = cross_validate(x, labels, grid, 5, 1);
  CHECK(a.best.c == b.best.c);
  CHECK(a.best.kernel.gamma == b.best.kernel.gamma);
  CHECK(a.grid_accuracy == b.grid_accuracy);
  CHECK(a.grid_accuracy.size() == grid.size());
}

TEST_CASE("gesture CV rejects degenerate datasets") {
  auto data = synth_hand_dataset(SynthSpec::grip(), 1);
  std::vector<GestureSample> one_class;
  for (const auto& s : data) {
    if (s.label == GestureLabel::kClosing) one_class.push_back(s);
  }
  const auto grid = default_gesture_grid();
  try {
    gesture_cross_validate(one_class, grid, 5, 1);
    FAIL("expected DegenerateDataset");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDegenerateDataset);
  }
}

TEST_CASE("gesture JSONL round trip") {
  const auto data = synth_hand_dataset(SynthSpec::grip(), 4);
  const std::vector<GestureSample> few(data.begin(), data.begin() + 20);
  const auto path = std::filesystem::temp_directory_path() / "lfd_test_gestures.jsonl";
  save_gesture_jsonl(path, few);
  const auto back = load_gesture_jsonl(path);
  REQUIRE(back.size() == few.size());
  for (size_t i = 0; i < few.size(); ++i) {
    CHECK(back[i].label == few[i].label);
    CHECK(back[i].features == few[i].features);
  }
  std::filesystem::remove(path);
}

TEST_CASE("hand frame follows rigid motions and ignores scale about the wrist") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const HandSkeleton s = synth_hand(GestureLabel::kFixed, static_cast<std::uint64_t>(i), SynthSpec::grip());
    const HandFrame f = hand_frame(s);
    const Mat3 r = Eigen::Quaterniond(g(rng), g(rng), g(rng), g(rng)).normalized().toRotationMatrix();
    const Vec3 t(g(rng), g(rng), g(rng));
    HandSkeleton moved = s;
    for (auto& [name, p] : moved.landmarks) p = r * p + t;
    const HandFrame m = hand_frame(moved);
    worst = std::max({worst, (m.origin - (r * f.origin + t)).norm(), (m.x - r * f.x).norm(), (m.y - r * f.y).norm(),
                      (m.z - r * f.z).norm()});

    HandSkeleton scaled = s;
    const Vec3 w = s.at("wrist");
    for (auto& [name, p] : scaled.landmarks) p = w + 2.5 * (p - w);
    const HandFrame sc = hand_frame(scaled);
    CHECK((sc.origin - f.origin).norm() == 0.0);
    CHECK((sc.x - f.x).norm() < 1e-12);
    CHECK((sc.y - f.y).norm() < 1e-12);
    CHECK((sc.z - f.z).norm() < 1e-12);
  }
  CHECK(worst < 1e-7);
}

TEST_CASE("screw split is 70/30 and gesture training is deterministic") {
  const auto data = synth_hand_dataset(SynthSpec::screw(), 3);
  const auto [train, test] = stratified_split(data, 0.3, 4);
  CHECK(test.size() == 2078);  // round-half-up(6925 * 0.3) = round(2077.5)
  CHECK(train.size() == 6925 - 2078);
  const auto [train2, test2] = stratified_split(data, 0.3, 4);
  CHECK(sample_matrix(test2) == sample_matrix(test));

  const auto grip = synth_hand_dataset(SynthSpec::grip(), 3);
  SvmParams p;
  p.kernel.type = KernelType::kRbf;
  p.kernel.gamma = 10;
  p.c = 10;
  const SvmModel a = gesture_svm_train(grip, p), b = gesture_svm_train(grip, p);
  CHECK(a == b);
  for (const auto& s : grip) CHECK(gesture_svm_predict(a, s.features) == gesture_svm_predict(b, s.features));
}
