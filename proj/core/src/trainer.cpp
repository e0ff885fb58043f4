#include "lfd/trainer.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "lfd/checkpoint.hpp"
#include "lfd/config.hpp"
#include "lfd/error.hpp"

namespace lfd {
namespace {

std::vector<int> parse_hidden(const ConfigFile& f, const std::string& key, std::vector<int> fallback) {
  if (!f.has(key)) return fallback;
  std::vector<int> out;
  for (double v : f.get_doubles(key, {})) out.push_back(static_cast<int>(v));
  return out;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

void GroupConfig::validate() const {
  auto bad = [this](const std::string& what) {
    throw Error(ErrorCode::kConfigError, "group '" + name + "': " + what);
  };
  if (ppo_strength < 0 || gail_strength < 0 || bc_strength < 0) bad("strengths must be non-negative");
  if (uses_demos() && demo_count <= 0) bad("GAIL/BC need demo_count > 0");
  if (max_steps < 0) bad("max_steps must be non-negative");
  if (n_envs <= 0) bad("n_envs must be positive");
  if (hidden.empty()) bad("need at least one hidden layer");
  if (early_stop_window <= 0) bad("early_stop_window must be positive");
  ppo.validate();
  gail.validate();
  bc.validate();
  scene.validate();
}

GroupConfig GroupConfig::load(const std::filesystem::path& path) {
  const auto f = ConfigFile::load(path);
  GroupConfig g;
  g.name = f.get_string("group.name", path.stem().string());
  g.ppo_strength = f.get_double("group.ppo_strength", g.ppo_strength);
  g.gail_strength = f.get_double("group.gail_strength", g.gail_strength);
  g.bc_strength = f.get_double("group.bc_strength", g.bc_strength);
  g.demo_count = static_cast<int>(f.get_int("group.demo_count", g.demo_count));
  g.max_steps = f.get_int("group.max_steps", g.max_steps);
  g.seed = static_cast<std::uint64_t>(f.get_int("group.seed", static_cast<long long>(g.seed)));
  g.n_envs = static_cast<int>(f.get_int("group.n_envs", g.n_envs));
  g.hidden = parse_hidden(f, "group.hidden", g.hidden);
  g.init_log_std = f.get_double("group.init_log_std", g.init_log_std);
  g.checkpoint_every = static_cast<int>(f.get_int("group.checkpoint_every", g.checkpoint_every));
  g.early_stop_return = f.get_double("group.early_stop_return", g.early_stop_return);
  g.early_stop_window = static_cast<int>(f.get_int("group.early_stop_window", g.early_stop_window));
  g.demo_seed = static_cast<std::uint64_t>(f.get_int("group.demo_seed", static_cast<long long>(g.demo_seed)));
  if (f.has("group.demos")) {
    std::filesystem::path p = f.get_string("group.demos", "");
    g.demos_path = p.is_relative() ? path.parent_path() / p : p;
  }

  auto& p = g.ppo;
  p.clip = f.get_double("ppo.clip", p.clip);
  p.value_coef = f.get_double("ppo.value_coef", p.value_coef);
  p.entropy_coef = f.get_double("ppo.entropy_coef", p.entropy_coef);
  p.batch_size = static_cast<int>(f.get_int("ppo.batch_size", p.batch_size));
  p.buffer_size = static_cast<int>(f.get_int("ppo.buffer_size", p.buffer_size));
  p.horizon = static_cast<int>(f.get_int("ppo.horizon", p.horizon));
  p.epochs = static_cast<int>(f.get_int("ppo.epochs", p.epochs));
  p.gamma = f.get_double("ppo.gamma", p.gamma);
  p.lambda = f.get_double("ppo.lambda", p.lambda);
  p.max_grad_norm = f.get_double("ppo.max_grad_norm", p.max_grad_norm);
  p.adam.learning_rate = f.get_double("ppo.learning_rate", p.adam.learning_rate);

  auto& gl = g.gail;
  gl.gamma = f.get_double("gail.gamma", gl.gamma);
  gl.hidden = parse_hidden(f, "gail.hidden", gl.hidden);
  gl.batch_size = static_cast<int>(f.get_int("gail.batch_size", gl.batch_size));
  gl.passes = static_cast<int>(f.get_int("gail.passes", gl.passes));
  gl.adam.learning_rate = f.get_double("gail.learning_rate", gl.adam.learning_rate);

  g.bc.strength = g.bc_strength;
  g.bc.active_steps = f.get_int("bc.active_steps", g.bc.active_steps);
  g.bc.batch_size = static_cast<int>(f.get_int("bc.batch_size", g.bc.batch_size));

  if (f.has("scene.file")) {
    std::filesystem::path s = f.get_string("scene.file", "");
    g.scene = SceneConfig::load(s.is_relative() ? path.parent_path() / s : s);
  }
  g.scene.max_steps = static_cast<int>(f.get_int("scene.max_steps", g.scene.max_steps));
  g.validate();
  return g;
}

double mix_rewards(double extrinsic, double gail_reward, const GroupConfig& group) {
  return group.ppo_strength * extrinsic + group.gail_strength * gail_reward;
}

void mix_rewards(RolloutBuffer& buf, const GroupConfig& group) {
  buf.rewards = group.ppo_strength * buf.rewards_ext + group.gail_strength * buf.rewards_gail;
}

EvalReport evaluate(const ActionSource& source, const SceneConfig& scene, int n, std::uint64_t seed) {
  EvalReport rep;
  TileEnv env(scene);
  long total_len = 0, installed_len = 0;
  int picked = 0, installed = 0;
  double ret = 0.0;
  for (int i = 0; i < n; ++i) {
    env.reset(derive_seed(seed, static_cast<std::uint64_t>(i)));
    bool was_picked = false, was_installed = false;
    while (!env.state().done) {
      const StepResult r = env.step(source(env));
      ret += r.reward;
      was_picked = was_picked || r.event == StepEvent::kPicked;
      was_installed = was_installed || r.event == StepEvent::kInstalled;
    }
    total_len += env.state().step_index;
    picked += was_picked;
    installed += was_installed;
    if (was_installed) installed_len += env.state().step_index;
  }
  rep.n_episodes = n;
  if (n > 0) {
    rep.picked_rate = static_cast<double>(picked) / n;
    rep.installed_rate = static_cast<double>(installed) / n;
    rep.avg_episode_length = static_cast<double>(total_len) / n;
    rep.mean_return = ret / n;
  }
  if (installed > 0) rep.installed_avg_length = static_cast<double>(installed_len) / installed;
  return rep;
}

EvalReport evaluate(const ActorCritic& policy, const SceneConfig& scene, int n, std::uint64_t seed) {
  return evaluate([&policy](const TileEnv& env) { return policy.act_deterministic(env.observation()); }, scene,
                  n, seed);
}

void write_metrics_header(std::ostream& out) {
  out << "# schema=" << kMetricsSchema << "\n"
      << "update,step,episodes,mean_return,window_return,picked_rate,installed_rate,mean_length,"
         "mean_ext_reward,mean_gail_reward,mean_mixed_reward,policy_loss,value_loss,entropy,approx_kl,"
         "clip_fraction,bc_loss,bc_applied,disc_loss,disc_expert_prob,disc_agent_prob\n";
}

void write_metrics_row(std::ostream& out, const UpdateRecord& r) {
  out << r.update << ',' << r.step << ',' << r.episodes << ',' << fmt(r.mean_return) << ','
      << fmt(r.window_return) << ',' << fmt(r.picked_rate) << ',' << fmt(r.installed_rate) << ','
      << fmt(r.mean_length) << ',' << fmt(r.mean_ext_reward) << ',' << fmt(r.mean_gail_reward) << ','
      << fmt(r.mean_mixed_reward) << ',' << fmt(r.policy_loss) << ',' << fmt(r.value_loss) << ','
      << fmt(r.entropy) << ',' << fmt(r.approx_kl) << ',' << fmt(r.clip_fraction) << ',' << fmt(r.bc_loss)
      << ',' << (r.bc_applied ? 1 : 0) << ',' << fmt(r.disc_loss) << ',' << fmt(r.disc_expert_prob) << ','
      << fmt(r.disc_agent_prob) << '\n';
}

Trainer::Trainer(GroupConfig group, std::shared_ptr<const DemoSet> demos)
    : group_(std::move(group)), demos_(std::move(demos)) {
  group_.bc.strength = group_.bc_strength;
  group_.validate();
  if (group_.uses_demos()) {
    if (!demos_ || demos_->size() == 0) {
      throw Error(ErrorCode::kConfigError, "group '" + group_.name + "' needs demonstrations");
    }
    table_ = std::make_shared<const TransitionTable>(flatten(*demos_));
  }
  Rng init_rng(derive_seed(group_.seed, 0));
  policy_ = ActorCritic(group_.hidden, init_rng, group_.init_log_std);
  adam_ = make_policy_optimizer(policy_, group_.ppo.adam);
  disc_ = Discriminator(group_.gail.hidden, init_rng);
  disc_adam_ = make_disc_optimizer(disc_, group_.gail.adam);
  pool_ = EnvPool(group_.scene, group_.n_envs, derive_seed(group_.seed, 1));
  rollout_rng_.seed(derive_seed(group_.seed, 2));
  update_rng_.seed(derive_seed(group_.seed, 3));
  gail_rng_.seed(derive_seed(group_.seed, 4));
  bc_rng_.seed(derive_seed(group_.seed, 5));
}

bool Trainer::converged() const {
  if (static_cast<int>(window_.size()) < group_.early_stop_window) return false;
  double s = 0.0;
  for (const auto& e : window_) s += e.ext_return;
  return s / static_cast<double>(window_.size()) >= group_.early_stop_return;
}

UpdateRecord Trainer::update() {
  UpdateRecord rec;
  RolloutBuffer buf = collect_rollouts(pool_, policy_, group_.ppo, rollout_rng_);
  step_ += buf.size();

  const auto finished = pool_.take_finished();
  rec.episodes = static_cast<int>(finished.size());
  rec.mean_return = std::numeric_limits<double>::quiet_NaN();
  if (!finished.empty()) {
    double s = 0.0;
    for (const auto& e : finished) s += e.ext_return;
    rec.mean_return = s / static_cast<double>(finished.size());
  }
  for (const auto& e : finished) {
    window_.push_back(e);
    while (static_cast<int>(window_.size()) > group_.early_stop_window) window_.pop_front();
  }
  if (!window_.empty()) {
    double ret = 0, picked = 0, installed = 0, len = 0;
    for (const auto& e : window_) {
      ret += e.ext_return;
      picked += e.picked;
      installed += e.installed;
      len += e.length;
    }
    const double n = static_cast<double>(window_.size());
    rec.window_return = ret / n;
    rec.picked_rate = picked / n;
    rec.installed_rate = installed / n;
    rec.mean_length = len / n;
  }

  if (group_.gail_strength > 0) {
    const GailStats gs = gail_iteration(disc_, disc_adam_, buf, *table_, group_.gail, gail_rng_);
    rec.disc_loss = gs.disc_loss;
    rec.disc_expert_prob = gs.expert_prob;
    rec.disc_agent_prob = gs.agent_prob;
  }
  mix_rewards(buf, group_);
  rec.mean_ext_reward = buf.rewards_ext.mean();
  rec.mean_gail_reward = buf.rewards_gail.mean();
  rec.mean_mixed_reward = buf.rewards.mean();

  compute_gae(buf, group_.ppo.gamma, group_.ppo.lambda);
  normalize_advantages(buf);

  // The window is judged on the env steps completed before this update.
  const long trainer_step = step_ - buf.size();
  rec.bc_applied = table_ && bc_active(group_.bc, trainer_step);
  AuxLoss aux;
  if (rec.bc_applied) aux = make_bc_aux(*table_, group_.bc, bc_rng_);
  const PpoUpdateStats st = ppo_update(policy_, adam_, buf, group_.ppo, update_rng_, aux);

  ++updates_;
  rec.update = updates_;
  rec.step = step_;
  rec.policy_loss = st.policy_loss;
  rec.value_loss = st.value_loss;
  rec.entropy = st.entropy;
  rec.approx_kl = st.approx_kl;
  rec.clip_fraction = st.clip_fraction;
  rec.bc_loss = st.aux_loss;
  return rec;
}

std::vector<UpdateRecord> Trainer::train(long budget, std::ostream* metrics, const std::filesystem::path& out_dir) {
  std::vector<UpdateRecord> rows;
  if (metrics && updates_ == 0) write_metrics_header(*metrics);
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  while (step_ + group_.ppo.buffer_size <= budget && !converged()) {
    UpdateRecord r;
    try {
      r = update();
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kNonFiniteLoss && !out_dir.empty()) save_checkpoint(out_dir);
      throw;
    }
    rows.push_back(r);
    if (metrics) {
      write_metrics_row(*metrics, r);
      metrics->flush();
    }
    if (!out_dir.empty() && group_.checkpoint_every > 0 && updates_ % group_.checkpoint_every == 0) {
      save_checkpoint(out_dir);
    }
  }
  if (!out_dir.empty()) save_checkpoint(out_dir);
  return rows;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  char name[64];
  std::snprintf(name, sizeof name, "policy_%06d.mlp", updates_);
  const std::string policy_file = name;
  save_mlp(dir / policy_file, policy_.actor(), "policy", policy_.log_std_param());
  std::snprintf(name, sizeof name, "value_%06d.mlp", updates_);
  const std::string value_file = name;
  save_mlp(dir / value_file, policy_.critic(), "value");
  std::string disc_file;
  if (group_.gail_strength > 0) {
    std::snprintf(name, sizeof name, "disc_%06d.mlp", updates_);
    disc_file = name;
    save_mlp(dir / disc_file, disc_.net(), "discriminator");
  }

  const auto manifest_path = dir / "manifest.json";
  nlohmann::json m;
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      m = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      m = nlohmann::json::object();
    }
  }
  m["format"] = "lfd-manifest";
  m["version"] = 1;
  m["group"] = group_.name;
  m["seed"] = group_.seed;
  m["obs_schema"] = std::string(kObsSchema);
  nlohmann::json entry{{"update", updates_}, {"step", step_}, {"policy", policy_file}, {"value", value_file}};
  if (!disc_file.empty()) entry["discriminator"] = disc_file;
  if (!m.contains("checkpoints")) m["checkpoints"] = nlohmann::json::array();
  m["checkpoints"].push_back(entry);
  m["latest"] = entry;
  std::ofstream out(manifest_path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + manifest_path.string());
  out << m.dump(2) << '\n';
}

ActorCritic load_policy(const std::filesystem::path& path) {
  std::filesystem::path file = path;
  std::filesystem::path value_file;
  if (std::filesystem::is_directory(path) || path.filename() == "manifest.json") {
    const auto manifest = std::filesystem::is_directory(path) ? path / "manifest.json" : path;
    std::ifstream in(manifest);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + manifest.string());
    nlohmann::json m;
    try {
      m = nlohmann::json::parse(in);
      const auto& latest = m.at("latest");
      file = manifest.parent_path() / latest.at("policy").get<std::string>();
      if (latest.contains("value")) value_file = manifest.parent_path() / latest.at("value").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, std::string("bad manifest: ") + e.what());
    }
  }
  MlpCheckpoint ck = load_mlp(file);
  if (ck.role != "policy") throw Error(ErrorCode::kSchemaVersionMismatch, "checkpoint role is '" + ck.role + "'");
  if (ck.net.input_dim() != kObsDim || ck.net.output_dim() != kActorOutputs || ck.extra.size() != kMeanRows) {
    throw Error(ErrorCode::kSchemaVersionMismatch, "policy checkpoint does not match " + std::string(kObsSchema));
  }
  ActorCritic p;
  p.actor() = std::move(ck.net);
  p.log_std_param() = ck.extra;
  // a bare policy file evaluates fine without its critic
  if (!value_file.empty()) {
    MlpCheckpoint v = load_mlp(value_file);
    if (v.role != "value" || v.net.input_dim() != kObsDim || v.net.output_dim() != 1) {
      throw Error(ErrorCode::kSchemaVersionMismatch, "value checkpoint does not match " + std::string(kObsSchema));
    }
    p.critic() = std::move(v.net);
  }
  return p;
}

std::shared_ptr<const DemoSet> demos_for(const GroupConfig& group) {
  if (!group.uses_demos()) return nullptr;
  DemoSet pool = group.demos_path.empty()
                     ? generate_expert_demos(group.scene, std::max<size_t>(60, static_cast<size_t>(group.demo_count)),
                                             group.demo_seed, group.expert)
                     : load_demos(group.demos_path);
  return std::make_shared<const DemoSet>(
      subsample(pool, static_cast<size_t>(group.demo_count), derive_seed(group.demo_seed, 7)));
}

std::vector<SuiteRow> run_group_suite(const std::vector<GroupConfig>& groups, long budget,
                                      const std::filesystem::path& out_dir, int eval_episodes, std::ostream* log) {
  std::vector<SuiteRow> rows;
  for (const auto& g : groups) {
    Trainer trainer(g, demos_for(g));
    const auto dir = out_dir.empty() ? out_dir : out_dir / g.name;
    std::ofstream metrics;
    if (!dir.empty()) {
      std::filesystem::create_directories(dir);
      metrics.open(dir / "metrics.csv");
    }
    trainer.train(std::min(budget, g.max_steps), dir.empty() ? nullptr : &metrics, dir);
    SuiteRow row{g.name, evaluate(trainer.policy(), g.scene, eval_episodes, derive_seed(g.seed, 99)),
                 trainer.step()};
    if (log) {
      *log << g.name << ": steps " << row.steps << " picked " << row.report.picked_rate << " installed "
           << row.report.installed_rate << " length " << row.report.avg_episode_length << std::endl;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_suite_csv(std::ostream& out, const std::vector<SuiteRow>& rows) {
  out << "group,steps,picked_rate,installed_rate,avg_episode_length,installed_avg_length,mean_return\n";
  for (const auto& r : rows) {
    out << r.group << ',' << r.steps << ',' << fmt(r.report.picked_rate) << ',' << fmt(r.report.installed_rate)
        << ',' << fmt(r.report.avg_episode_length) << ',' << fmt(r.report.installed_avg_length) << ','
        << fmt(r.report.mean_return) << '\n';
  }
}

}  // namespace lfd
