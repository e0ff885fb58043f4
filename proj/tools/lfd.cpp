// lfd: command line front end for training, evaluation, demos, gestures and IK.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "lfd/bridge.hpp"
#include "lfd/error.hpp"
#include "lfd/gesture.hpp"
#include "lfd/kinematics.hpp"
#include "lfd/trainer.hpp"

namespace fs = std::filesystem;
using namespace lfd;

namespace {

SceneConfig scene_from(const std::string& path) {
  return path.empty() ? SceneConfig::defaults() : SceneConfig::load(path);
}

void print_report(const EvalReport& r) {
  std::printf("episodes %d\npicked_rate %.4f\ninstalled_rate %.4f\navg_episode_length %.2f\n"
              "installed_avg_length %.2f\nmean_return %.4f\n",
              r.n_episodes, r.picked_rate, r.installed_rate, r.avg_episode_length, r.installed_avg_length,
              r.mean_return);
}

std::vector<GroupConfig> load_groups(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".cfg") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GroupConfig> groups;
  for (const auto& f : files) groups.push_back(GroupConfig::load(f));
  return groups;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"learning-from-demonstration toolkit: tile installation with PPO, GAIL and BC"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train one group");
  std::string group_file, out_dir = "runs/train", metrics_file;
  long budget = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  train->add_option("--group", group_file, "group config (.cfg)")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "training seed (overrides the config)")->each([&](const std::string&) {
    seed_set = true;
  });
  train->add_option("--budget", budget, "env steps (default: the group's max_steps)");
  train->add_option("--out", out_dir, "checkpoint directory");
  train->add_option("--metrics", metrics_file, "metrics CSV (default: <out>/metrics.csv)");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint deterministically");
  std::string checkpoint, scene_file;
  int episodes = 100;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", checkpoint, "checkpoint dir, manifest or policy file")->required();
  eval->add_option("-n", episodes, "episodes")->check(CLI::PositiveNumber);
  eval->add_option("--seed", eval_seed, "evaluation seed");
  eval->add_option("--scene", scene_file, "scene config")->check(CLI::ExistingFile);

  // suite
  auto* suite = app.add_subcommand("suite", "train and evaluate every group in a directory");
  std::string groups_dir, suite_out = "runs/suite", suite_csv;
  long suite_budget = 1000000;
  suite->add_option("--groups", groups_dir, "directory of group configs")->required()->check(CLI::ExistingDirectory);
  suite->add_option("--budget", suite_budget, "env steps per group");
  suite->add_option("--out", suite_out, "output directory");
  suite->add_option("--csv", suite_csv, "comparison table (default: <out>/suite.csv)");

  // demo expert | demo record
  auto* demo = app.add_subcommand("demo", "demonstration tools");
  demo->require_subcommand(1);
  auto* demo_expert = demo->add_subcommand("expert", "record scripted-expert demonstrations");
  int n_demos = 60;
  std::string demos_out = "demos.jsonl", demo_scene;
  std::uint64_t demo_seed = 1000;
  demo_expert->add_option("-n", n_demos, "episodes")->check(CLI::PositiveNumber);
  demo_expert->add_option("--out", demos_out, "output JSONL");
  demo_expert->add_option("--seed", demo_seed, "first episode seed");
  demo_expert->add_option("--scene", demo_scene, "scene config")->check(CLI::ExistingFile);

  auto* demo_record = demo->add_subcommand("record", "teleoperation bridge for human demonstrations");
  BridgeConfig bridge;
  bool serve = false;
  std::string record_scene, static_dir, gesture_model, record_out = "teleop_demos.jsonl";
  demo_record->add_flag("--serve", serve, "start the websocket bridge")->required();
  demo_record->add_option("--address", bridge.address, "bind address");
  demo_record->add_option("--port", bridge.port, "port (0 picks one)");
  demo_record->add_option("--tick-hz", bridge.tick_hz, "simulation tick rate")->check(CLI::PositiveNumber);
  demo_record->add_flag("--step-per-command", bridge.step_per_command, "one env step per command");
  demo_record->add_option("--static", static_dir, "directory served at /");
  demo_record->add_option("--out", record_out, "recorded demonstrations (JSONL)");
  demo_record->add_option("--gesture-model", gesture_model, "SVM model for skeleton messages");
  demo_record->add_option("--seed", bridge.seed, "first episode seed");
  demo_record->add_option("--scene", record_scene, "scene config")->check(CLI::ExistingFile);

  // gesture train
  auto* gesture = app.add_subcommand("gesture", "gesture classifier");
  gesture->require_subcommand(1);
  auto* gesture_train = gesture->add_subcommand("train", "grid-search and train an SVM gesture model");
  std::string task_name = "grip", gesture_data, gesture_out = "gesture.svm";
  int folds = 5;
  std::uint64_t gesture_seed = 7;
  gesture_train->add_option("--task", task_name, "grip | suction | screw");
  gesture_train->add_option("--data", gesture_data, "labelled JSONL (default: synthetic hands)");
  gesture_train->add_option("--out", gesture_out, "model file");
  gesture_train->add_option("--folds", folds, "CV folds")->check(CLI::Range(2, 20));
  gesture_train->add_option("--seed", gesture_seed, "split/fold seed");

  // ik solve
  auto* ik = app.add_subcommand("ik", "inverse kinematics");
  ik->require_subcommand(1);
  auto* ik_solve = ik->add_subcommand("solve", "solve IK for a pose");
  std::vector<double> position, rpy{0, 0, 0}, q0;
  std::string dh_file;
  ik_solve->add_option("--position", position, "x y z (m)")->required()->expected(3);
  ik_solve->add_option("--rpy", rpy, "roll pitch yaw (deg); default keeps the home orientation")->expected(3);
  ik_solve->add_option("--q0", q0, "initial joints (deg)")->expected(6);
  ik_solve->add_option("--dh", dh_file, "DH table file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      GroupConfig g = GroupConfig::load(group_file);
      if (seed_set) g.seed = seed;
      const long steps = budget >= 0 ? budget : g.max_steps;
      fs::create_directories(out_dir);
      const fs::path mpath = metrics_file.empty() ? fs::path(out_dir) / "metrics.csv" : fs::path(metrics_file);
      std::ofstream metrics(mpath);
      if (!metrics) throw Error(ErrorCode::kIoError, "cannot write " + mpath.string());
      Trainer t(g, demos_for(g));
      const auto rows = t.train(steps, &metrics, out_dir);
      std::printf("group %s: %d updates, %ld steps%s\n", g.name.c_str(), t.updates(), t.step(),
                  t.converged() ? " (converged)" : "");
      print_report(evaluate(t.policy(), g.scene, 100, 0));
    } else if (eval->parsed()) {
      print_report(evaluate(load_policy(checkpoint), scene_from(scene_file), episodes, eval_seed));
    } else if (suite->parsed()) {
      const auto rows = run_group_suite(load_groups(groups_dir), suite_budget, suite_out, 100, &std::cerr);
      const fs::path csv = suite_csv.empty() ? fs::path(suite_out) / "suite.csv" : fs::path(suite_csv);
      fs::create_directories(csv.parent_path().empty() ? "." : csv.parent_path());
      std::ofstream out(csv);
      write_suite_csv(out, rows);
      write_suite_csv(std::cout, rows);
    } else if (demo_expert->parsed()) {
      const SceneConfig sc = scene_from(demo_scene);
      const DemoSet set = generate_expert_demos(sc, static_cast<size_t>(n_demos), demo_seed, ExpertConfig{});
      save_demos(demos_out, set);
      const EvalReport r = evaluate(
          [&](const TileEnv& env) { return scripted_expert(env.state(), env.config(), ExpertConfig{}); }, sc,
          n_demos, demo_seed);
      std::printf("wrote %zu trajectories (%zu transitions) to %s; expert installed_rate %.3f\n", set.size(),
                  set.num_transitions(), demos_out.c_str(), r.installed_rate);
    } else if (demo_record->parsed()) {
      (void)serve;
      bridge.scene = scene_from(record_scene);
      bridge.static_dir = static_dir;
      bridge.record_path = record_out;
      bridge.gesture_model = gesture_model;
      TeleopServer server(bridge);
      server.start();
      std::printf("bridge on ws://%s:%u/ws, recording to %s (Ctrl-C stops)\n", bridge.address.c_str(),
                  static_cast<unsigned>(server.port()), record_out.c_str());
      std::fflush(stdout);
      server.wait();
      server.stop();
    } else if (gesture_train->parsed()) {
      const GestureTask task = gesture_task_from_string(task_name);
      const bool screw = task == GestureTask::kScrew;
      const auto data = gesture_data.empty()
                            ? synth_hand_dataset(screw ? SynthSpec::screw() : SynthSpec::grip(), gesture_seed)
                            : load_gesture_jsonl(gesture_data);
      const auto [train_set, test_set] = stratified_split(data, screw ? 0.3 : 0.2, gesture_seed);
      const auto grid = default_gesture_grid();
      const CvResult cv = gesture_cross_validate(train_set, grid, folds, gesture_seed);
      SvmParams params;
      params.c = cv.best.c;
      params.kernel = cv.best.kernel;
      const SvmModel model = gesture_svm_train(train_set, params);
      const double acc = svm_accuracy(model, sample_matrix(test_set), sample_labels(test_set));
      model.save(gesture_out);
      std::printf("task %s: %zu train / %zu test, best C %g gamma %g (cv %.4f), held-out accuracy %.4f -> %s\n",
                  std::string(to_string(task)).c_str(), train_set.size(), test_set.size(), cv.best.c,
                  cv.best.kernel.gamma, cv.best_accuracy, acc, gesture_out.c_str());
    } else if (ik_solve->parsed()) {
      const DhTable dh = dh_file.empty() ? DhTable::ur3() : DhTable::load(dh_file);
      const SceneConfig sc = SceneConfig::defaults();
      const JointAngles home = wrap_angles(sc.home_deg);
      Mat3 rot = forward_kinematics(dh, home).rotation();
      if (rpy[0] != 0 || rpy[1] != 0 || rpy[2] != 0) {
        rot = (Eigen::AngleAxisd(deg_to_rad(rpy[2]), Vec3::UnitZ()) *
               Eigen::AngleAxisd(deg_to_rad(rpy[1]), Vec3::UnitY()) *
               Eigen::AngleAxisd(deg_to_rad(rpy[0]), Vec3::UnitX()))
                  .toRotationMatrix();
      }
      const JointAngles start = q0.empty() ? home : wrap_angles(Vec6(Eigen::Map<const Vec6>(q0.data())));
      const IkSolution sol = solve_ik(dh, start, HomTransform(rot, Vec3(position[0], position[1], position[2])));
      std::printf("q_deg");
      for (int i = 0; i < 6; ++i) std::printf(" %.6f", sol.q[i]);
      std::printf("\niterations %d\nerror %.3e\n", sol.iterations, sol.error);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", std::string(to_string(e.code())).c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
