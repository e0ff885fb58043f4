#include "lfd/demos.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "lfd/error.hpp"

namespace lfd {
namespace {

using nlohmann::json;

void put_real(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

template <typename Vec>
void put_array(std::ostream& out, const Vec& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    put_real(out, v[i]);
  }
  out << ']';
}

[[noreturn]] void parse_fail(size_t line, const std::string& what) {
  throw Error(ErrorCode::kParseError, "demos line " + std::to_string(line) + ": " + what);
}

template <typename Vec>
Vec get_array(const json& j, const char* key, size_t line) {
  Vec v;
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != static_cast<size_t>(v.size())) {
    parse_fail(line, std::string("field '") + key + "' must be an array of " + std::to_string(v.size()));
  }
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto& e = j[key][static_cast<size_t>(i)];
    if (!e.is_number()) parse_fail(line, std::string("non-numeric entry in '") + key + "'");
    v[i] = e.get<double>();
  }
  return v;
}

}  // namespace

std::string_view to_string(DemoSource s) { return s == DemoSource::kTeleop ? "teleop" : "scripted"; }

DemoSource demo_source_from_string(std::string_view s) {
  if (s == "scripted") return DemoSource::kScripted;
  if (s == "teleop") return DemoSource::kTeleop;
  throw Error(ErrorCode::kParseError, "unknown demo source '" + std::string(s) + "'");
}

double Trajectory::total_reward() const {
  double r = 0.0;
  for (const auto& t : steps) r += t.reward;
  return r;
}

bool Trajectory::well_formed() const {
  if (steps.empty()) return false;
  for (size_t i = 0; i + 1 < steps.size(); ++i) {
    if (steps[i].done) return false;
  }
  return steps.back().done && steps.back().event == outcome;
}

size_t DemoSet::num_transitions() const {
  size_t n = 0;
  for (const auto& t : trajectories) n += t.steps.size();
  return n;
}

std::optional<Trajectory> record_episode(TileEnv& env, std::uint64_t seed, const ActionSource& source,
                                         DemoSource tag) {
  Trajectory traj;
  traj.source = tag;
  traj.seed = seed;
  ObsVec obs = env.reset(seed);
  while (!env.state().done) {
    AgentAction a;
    try {
      a = source(env);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kExpertStuck) return std::nullopt;
      throw;
    }
    a.clip();
    const StepResult r = env.step(a);
    traj.steps.push_back(Transition{obs, a, r.reward, r.done, r.event});
    obs = r.observation;
  }
  traj.outcome = traj.steps.back().event;
  return traj;
}

DemoSet generate_expert_demos(const SceneConfig& scene, size_t n, std::uint64_t base_seed,
                              const ExpertConfig& expert) {
  DemoSet set;
  TileEnv env(scene);
  const ActionSource src = [&](const TileEnv& e) { return scripted_expert(e.state(), e.config(), expert); };
  // A bounded number of attempts so a broken scene cannot spin forever.
  for (std::uint64_t s = base_seed; set.size() < n && s < base_seed + 4 * n + 16; ++s) {
    if (auto t = record_episode(env, s, src)) set.trajectories.push_back(std::move(*t));
  }
  if (set.size() < n) throw Error(ErrorCode::kExpertStuck, "expert aborted too many episodes");
  return set;
}

void write_demos(std::ostream& out, const DemoSet& set) {
  out << R"({"format":"lfd-demos","version":)" << kDemoFormatVersion << R"(,"obs_schema":")" << kObsSchema
      << R"(","obs_dim":)" << kObsDim << R"(,"action_dim":)" << kActionDim << R"(,"trajectories":)"
      << set.size() << "}\n";
  for (const auto& t : set.trajectories) {
    out << R"({"source":")" << to_string(t.source) << R"(","seed":)" << t.seed << R"(,"schema":")" << t.schema
        << R"(","outcome":")" << to_string(t.outcome) << R"(","length":)" << t.steps.size() << "}\n";
    for (const auto& s : t.steps) {
      out << R"({"obs":)";
      put_array(out, s.observation);
      out << R"(,"act":)";
      put_array(out, s.action.joint_deltas);
      out << R"(,"cmd":")" << to_string(s.action.cmd) << R"(","r":)";
      put_real(out, s.reward);
      out << R"(,"done":)" << (s.done ? "true" : "false") << R"(,"event":")" << to_string(s.event) << "\"}\n";
    }
    out << '\n';
  }
}

DemoSet read_demos(std::istream& in) {
  std::string line;
  size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  auto parse = [&]() -> json {
    try {
      return json::parse(line);
    } catch (const json::exception& e) {
      parse_fail(lineno, e.what());
    }
  };

  if (!next()) parse_fail(1, "missing header");
  const json header = parse();
  if (header.value("format", "") != "lfd-demos") parse_fail(lineno, "not a demos file");
  if (header.value("version", -1) != kDemoFormatVersion || header.value("obs_schema", "") != kObsSchema ||
      header.value("obs_dim", -1) != kObsDim || header.value("action_dim", -1) != kActionDim) {
    throw Error(ErrorCode::kSchemaVersionMismatch, "demos header does not match schema " +
                                                       std::string(kObsSchema) + " v" +
                                                       std::to_string(kDemoFormatVersion));
  }
  const size_t declared = header.value("trajectories", size_t{0});

  DemoSet set;
  while (set.size() < declared) {
    if (!next()) parse_fail(lineno + 1, "unexpected end of file, expected trajectory metadata");
    if (line.empty()) continue;
    const json meta = parse();
    Trajectory t;
    try {
      t.source = demo_source_from_string(meta.at("source").get<std::string>());
      t.seed = meta.at("seed").get<std::uint64_t>();
      t.schema = meta.at("schema").get<std::string>();
      t.outcome = step_event_from_string(meta.at("outcome").get<std::string>());
    } catch (const json::exception& e) {
      parse_fail(lineno, e.what());
    } catch (const Error& e) {
      parse_fail(lineno, e.what());
    }
    if (t.schema != kObsSchema) {
      throw Error(ErrorCode::kSchemaVersionMismatch, "trajectory schema " + t.schema);
    }
    const size_t length = meta.value("length", size_t{0});
    t.steps.reserve(length);
    for (size_t i = 0; i < length; ++i) {
      if (!next()) parse_fail(lineno + 1, "unexpected end of file inside a trajectory");
      if (line.empty()) parse_fail(lineno, "trajectory ended early");
      const json j = parse();
      Transition s;
      s.observation = get_array<ObsVec>(j, "obs", lineno);
      s.action.joint_deltas = get_array<Vec6>(j, "act", lineno);
      try {
        s.action.cmd = effector_cmd_from_string(j.at("cmd").get<std::string>());
        s.reward = j.at("r").get<double>();
        s.done = j.at("done").get<bool>();
        s.event = step_event_from_string(j.at("event").get<std::string>());
      } catch (const json::exception& e) {
        parse_fail(lineno, e.what());
      } catch (const Error& e) {
        parse_fail(lineno, e.what());
      }
      t.steps.push_back(std::move(s));
    }
    if (!t.well_formed()) parse_fail(lineno, "trajectory is not terminated by its outcome");
    set.trajectories.push_back(std::move(t));
  }
  return set;
}

void save_demos(const std::filesystem::path& path, const DemoSet& set) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  write_demos(out, set);
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

DemoSet load_demos(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  return read_demos(in);
}

TransitionTable flatten(const DemoSet& set) {
  const auto n = static_cast<Eigen::Index>(set.num_transitions());
  TransitionTable t;
  t.obs.resize(kObsDim, n);
  t.deltas.resize(6, n);
  t.encoded.resize(kActionDim, n);
  t.cmds.reserve(static_cast<size_t>(n));
  Eigen::Index c = 0;
  for (const auto& traj : set.trajectories) {
    for (const auto& s : traj.steps) {
      t.obs.col(c) = s.observation;
      t.deltas.col(c) = s.action.joint_deltas;
      t.encoded.col(c) = s.action.encode();
      t.cmds.push_back(static_cast<int>(s.action.cmd));
      ++c;
    }
  }
  return t;
}

DemoSet subsample(const DemoSet& set, size_t n, std::uint64_t seed) {
  if (n > set.size()) {
    throw Error(ErrorCode::kTooFew, "requested " + std::to_string(n) + " demonstrations from a set of " +
                                        std::to_string(set.size()));
  }
  std::vector<size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  DemoSet out;
  for (size_t i : idx) out.trajectories.push_back(set.trajectories[i]);
  return out;
}

}  // namespace lfd
