#pragma once

// Command-line front end: synth-traces, train, eval, sweep, plot, oracle.
// Exit codes: 0 success, 1 usage/config error, 2 training aborted on a
// non-finite value, 3 checkpoint/config mismatch.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mecsim/agents.hpp"
#include "mecsim/config.hpp"
#include "mecsim/eval.hpp"
#include "mecsim/svg.hpp"
#include "mecsim/traces.hpp"

namespace mecsim::cli {

namespace fs = std::filesystem;

inline constexpr const char* kConfigEnv = "MECSIM_CONFIG";

enum Exit { kOk = 0, kUsage = 1, kAborted = 2, kMismatch = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config;
  std::string out = "runs";
  std::string run_name;
  std::optional<std::uint64_t> seed;
  std::string agent;
  std::string checkpoint;
  int episodes = -1;
  bool force = false;
  int jobs = 1;
  bool quiet = false;

  // sweep
  std::string variable = "num_users";
  std::vector<double> values;
  std::vector<std::string> agents;
  std::vector<std::uint64_t> seeds;
  int train_episodes = 2000;
  bool train_once = false;

  // eval
  int qoe_bins = 10;
  bool no_records = false;

  // plot
  std::string input;
};

inline SystemConfig resolve_config(const Options& o) {
  std::string path = o.config;
  if (path.empty())
    if (const char* env = std::getenv(kConfigEnv)) path = env;
  if (path.empty()) return default_config();
  return load_config(path);
}

inline std::uint64_t run_seed(const Options& o, const SystemConfig& cfg) {
  return o.seed ? *o.seed : cfg.seed;
}

inline std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

inline fs::path make_run_dir(const Options& o, const std::string& stem) {
  const fs::path dir =
      fs::path(o.out) / (o.run_name.empty() ? stem + "-" + timestamp() : o.run_name);
  if (fs::exists(dir)) {
    if (!o.force)
      throw UsageError("run directory " + dir.string() + " exists (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

inline nlohmann::json provenance(const SystemConfig& cfg, const std::string& command,
                                 std::uint64_t seed) {
  return {{"version", std::string(kVersion)},
          {"command", command},
          {"config_hash", config_hash(cfg)},
          {"seed", seed},
          {"created_utc", timestamp()}};
}

inline void write_config_snapshot(const fs::path& dir, const SystemConfig& cfg) {
  write_file(dir / "config.json", serialize(cfg) + "\n");
}

inline void require_agent(const std::string& name, bool allow_baselines) {
  if (is_agent_name(name) || (allow_baselines && is_baseline(name))) return;
  std::string list;
  for (const auto& n : agent_names()) list += (list.empty() ? "" : ", ") + n;
  if (allow_baselines)
    for (const auto& n : baseline_names()) list += ", " + n;
  throw UsageError("unknown agent '" + name + "'; valid agents: " + list);
}

inline int cmd_synth_traces(const Options& o) {
  const SystemConfig cfg = resolve_config(o);
  const auto dir = make_run_dir(o, "traces");
  const auto set = build_traces(cfg);
  fs::create_directories(dir / "traces");
  nlohmann::json files = nlohmann::json::array();
  for (const auto* group : {&set->uplink, &set->downlink})
    for (const auto& t : *group) {
      const std::string name = "traces/" + t.id() + ".csv";
      write_trace(dir / name, t);
      files.push_back(name);
    }
  write_config_snapshot(dir, cfg);
  auto manifest = provenance(cfg, "synth-traces", cfg.seed);
  manifest["files"] = files;
  write_file(dir / "run.json", manifest.dump(2) + "\n");
  std::cout << dir.string() << '\n';
  return kOk;
}

inline int cmd_train(const Options& o) {
  require_agent(o.agent, false);
  const SystemConfig cfg = resolve_config(o);
  const std::uint64_t seed = run_seed(o, cfg);
  const int episodes = o.episodes < 0 ? 2000 : o.episodes;
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  const auto dir = make_run_dir(o, "train-" + o.agent + "-s" + std::to_string(seed));
  write_config_snapshot(dir, cfg);
  auto manifest = provenance(cfg, "train", seed);
  manifest["agent"] = o.agent;
  manifest["episodes"] = episodes;

  Agent agent = Agent::create(o.agent, cfg, seed);
  OffloadEnv env(cfg);
  std::ofstream log(dir / "train_log.csv");
  log << kTrainLogHeader << '\n';
  auto on_episode = [&](const EpisodeStats& s) {
    write_train_row(log, s);
    if (!o.quiet && ((s.episode + 1) % 100 == 0 || s.episode + 1 == episodes))
      std::cerr << "episode " << s.episode + 1 << "/" << episodes
                << " mean_reward=" << fmt_double(s.mean_reward) << '\n';
  };
  try {
    agent.train(env, episodes, seed, on_episode);
  } catch (const TrainingAborted& e) {
    log.flush();
    nlohmann::json d = e.diagnostics();
    d["error"] = e.what();
    write_file(dir / "diagnostics.json", d.dump(2) + "\n");
    manifest["status"] = "aborted";
    write_file(dir / "run.json", manifest.dump(2) + "\n");
    std::cerr << "training aborted: " << e.what() << " (see " << (dir / "diagnostics.json").string()
              << ")\n";
    return kAborted;
  } catch (const nn::NonFiniteError& e) {
    log.flush();
    write_file(dir / "diagnostics.json", nlohmann::json{{"error", e.what()}}.dump(2) + "\n");
    manifest["status"] = "aborted";
    write_file(dir / "run.json", manifest.dump(2) + "\n");
    std::cerr << "training aborted: " << e.what() << '\n';
    return kAborted;
  }
  manifest["status"] = "ok";
  manifest["checkpoint_hash"] = agent.save(dir / "checkpoint");
  write_file(dir / "run.json", manifest.dump(2) + "\n");
  std::cout << dir.string() << '\n';
  return kOk;
}

inline int cmd_eval(const Options& o) {
  const SystemConfig cfg = resolve_config(o);
  const std::uint64_t seed = run_seed(o, cfg);
  const int episodes = o.episodes < 0 ? 1000 : o.episodes;
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  std::shared_ptr<Agent> agent;
  std::string name = o.agent;
  std::string ck_hash;
  if (!o.checkpoint.empty()) {
    if (!fs::exists(o.checkpoint)) throw UsageError("missing checkpoint " + o.checkpoint);
    agent = std::make_shared<Agent>(Agent::load(o.checkpoint, cfg));
    if (!name.empty() && name != agent->name())
      throw UsageError("--agent " + name + " does not match checkpoint agent " + agent->name());
    name = agent->name();
    ck_hash = agent->hash();
  } else {
    if (name.empty()) throw UsageError("eval needs --agent or --checkpoint");
    require_agent(name, true);
    if (!is_baseline(name)) throw UsageError("agent " + name + " needs --checkpoint");
  }
  const auto dir = make_run_dir(o, "eval-" + name + "-s" + std::to_string(seed));
  write_config_snapshot(dir, cfg);

  std::vector<StepRecord> records;
  std::ofstream rec;
  if (!o.no_records) {
    rec.open(dir / "records.csv");
    rec << kRecordHeader << '\n';
  }
  OffloadEnv env(cfg);
  const PolicyFn policy = agent ? agent_policy(agent) : make_baseline(name, seed);
  const MetricSummary m = evaluate_policy(env, policy, episodes, seed, [&](const StepRecord& r) {
    if (!o.no_records) write_record(rec, r);
    records.push_back(r);
  });
  const QoeSummary q = qoe_summary(records, cfg.task_gen.layer_psnr_db, o.qoe_bins);

  nlohmann::json metrics = to_json(m);
  metrics["agent"] = name;
  metrics["episodes"] = episodes;
  metrics["qoe"] = {{"psnr_hist", q.psnr_hist},
                    {"psnr_db", q.psnr_db},
                    {"size_edges_bits", q.size_edges},
                    {"size_count", q.size_count},
                    {"violation_prob", nlohmann::json::array()},
                    {"psnr_monotone", q.psnr_monotone},
                    {"violation_monotone", q.violation_monotone}};
  for (double p : q.violation_prob)
    metrics["qoe"]["violation_prob"].push_back(std::isnan(p) ? nlohmann::json() : nlohmann::json(p));
  write_file(dir / "metrics.json", metrics.dump(2) + "\n");
  auto manifest = provenance(cfg, "eval", seed);
  manifest["agent"] = name;
  manifest["episodes"] = episodes;
  if (!ck_hash.empty()) {
    manifest["checkpoint"] = o.checkpoint;
    manifest["checkpoint_hash"] = ck_hash;
  }
  write_file(dir / "run.json", manifest.dump(2) + "\n");
  std::cout << dir.string() << '\n';
  return kOk;
}

inline int cmd_sweep(const Options& o) {
  const SystemConfig cfg = resolve_config(o);
  ExperimentSpec spec;
  spec.variable = sweep_var_from_string(o.variable);
  spec.values = o.values;
  spec.agents = o.agents;
  for (const auto& a : spec.agents) require_agent(a, true);
  spec.seeds = o.seeds.empty() ? std::vector<std::uint64_t>{run_seed(o, cfg)} : o.seeds;
  spec.train_episodes = o.train_episodes;
  spec.eval_episodes = o.episodes < 0 ? 1000 : o.episodes;
  spec.train_per_point = !o.train_once;
  spec.jobs = o.jobs;
  if (spec.values.empty()) throw UsageError("sweep needs --values");
  if (spec.agents.empty()) throw UsageError("sweep needs --agents");
  if (spec.train_episodes < 1) throw UsageError("--train-episodes must be >= 1");
  for (double v : spec.values) apply_sweep(cfg, spec.variable, v);

  const auto dir = make_run_dir(o, "sweep-" + o.variable);
  write_config_snapshot(dir, cfg);
  const auto rows = run_experiment(cfg, spec, [&](const std::string& msg) {
    if (!o.quiet) std::cerr << msg << '\n';
  });
  {
    std::ofstream out(dir / "results.csv");
    write_results_csv(out, rows);
  }
  {
    std::ofstream out(dir / "summary.csv");
    write_summary_csv(out, rows);
  }
  auto manifest = provenance(cfg, "sweep", spec.seeds.front());
  manifest["variable"] = o.variable;
  manifest["values"] = spec.values;
  manifest["agents"] = spec.agents;
  manifest["seeds"] = spec.seeds;
  manifest["train_episodes"] = spec.train_episodes;
  manifest["eval_episodes"] = spec.eval_episodes;
  manifest["train_per_point"] = spec.train_per_point;
  nlohmann::json hashes = nlohmann::json::array();
  for (const auto& r : rows)
    if (!r.checkpoint_hash.empty())
      hashes.push_back({{"value", r.value}, {"agent", r.agent}, {"seed", r.seed},
                        {"checkpoint_hash", r.checkpoint_hash}});
  manifest["checkpoint_hashes"] = hashes;
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << dir.string() << '\n';
  return kOk;
}

inline int cmd_plot(const Options& o) {
  if (o.input.empty()) throw UsageError("plot needs --input <summary.csv>");
  std::ifstream in(o.input);
  if (!in) throw UsageError("cannot open " + o.input);
  const svg::Table t = svg::read_table(in);
  const auto plots = svg::summary_plots(t);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  for (const auto& [name, text] : plots) {
    if (fs::exists(dir / name) && !o.force)
      throw UsageError((dir / name).string() + " exists (use --force to overwrite)");
  }
  for (const auto& [name, text] : plots) {
    write_file(dir / name, text);
    std::cout << (dir / name).string() << '\n';
  }
  return kOk;
}

inline int cmd_oracle(const Options& o) {
  const SystemConfig cfg = resolve_config(o);
  const std::uint64_t seed = run_seed(o, cfg);
  const int episodes = o.episodes < 0 ? 10 : o.episodes;
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  OffloadEnv env(cfg);
  const OracleResult r = brute_force_oracle(env, episodes, seed);
  const auto dir = make_run_dir(o, "oracle-s" + std::to_string(seed));
  write_config_snapshot(dir, cfg);
  nlohmann::json out = provenance(cfg, "oracle", seed);
  out["episodes"] = episodes;
  out["mean_reward"] = r.mean_reward;
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& j : r.best_actions) {
    std::vector<int> v;
    for (const auto& a : j) v.push_back(a.choice);
    acts.push_back(v);
  }
  out["best_actions"] = acts;
  write_file(dir / "oracle.json", out.dump(2) + "\n");
  std::cout << dir.string() << '\n' << "mean_reward " << fmt_double(r.mean_reward) << '\n';
  return kOk;
}

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Trace-driven multi-user edge offloading simulator and learning agents"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config,
                  std::string("config file (default: $") + kConfigEnv + " or built-in defaults)");
    c->add_option("--out", o.out, "output root directory")->capture_default_str();
    c->add_option("--run-name", o.run_name, "run directory name (default: timestamped)");
    c->add_option("--seed", o.seed, "seed override (default: config seed)");
    c->add_flag("--force", o.force, "overwrite an existing run directory");
    c->add_flag("--quiet", o.quiet, "no progress output");
  };

  auto* synth = app.add_subcommand("synth-traces", "write the configured synthetic traces as CSV");
  common(synth);
  auto* train = app.add_subcommand("train", "train an agent");
  common(train);
  train->add_option("--agent", o.agent, "cppg, ippg, lin-ucb, lin-ts, nn-eps, nn-ucb, nn-ts")
      ->required();
  train->add_option("--episodes", o.episodes, "training episodes (default 2000)");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or baseline greedily");
  common(eval);
  eval->add_option("--agent", o.agent, "baseline name or agent kind");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint directory or checkpoint.json");
  eval->add_option("--episodes", o.episodes, "evaluation episodes (default 1000)");
  eval->add_option("--qoe-bins", o.qoe_bins, "task-size bins of the QoE summary")
      ->capture_default_str();
  eval->add_flag("--no-records", o.no_records, "skip records.csv");
  auto* sweep = app.add_subcommand("sweep", "train and evaluate agents over a sweep variable");
  common(sweep);
  sweep->add_option("--var", o.variable, "num_users, task_size_scale, user_speed, mec_speed")
      ->capture_default_str();
  sweep->add_option("--values", o.values, "sweep values")->delimiter(',');
  sweep->add_option("--agents", o.agents, "agents and baselines")->delimiter(',');
  sweep->add_option("--seeds", o.seeds, "seeds")->delimiter(',');
  sweep->add_option("--train-episodes", o.train_episodes, "training episodes per run")
      ->capture_default_str();
  sweep->add_option("--episodes", o.episodes, "evaluation episodes (default 1000)");
  sweep->add_flag("--train-once", o.train_once,
                  "train on the base config and evaluate at every sweep value");
  sweep->add_option("--jobs", o.jobs, "parallel workers")->capture_default_str();
  auto* plot = app.add_subcommand("plot", "render SVG charts from a sweep summary.csv");
  plot->add_option("--input", o.input, "summary.csv")->required();
  plot->add_option("--out", o.out, "output directory")->capture_default_str();
  plot->add_flag("--force", o.force, "overwrite existing charts");
  auto* oracle = app.add_subcommand("oracle", "exhaustive joint-action optimum (small configs)");
  common(oracle);
  oracle->add_option("--episodes", o.episodes, "episodes (default 10)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth_traces(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*sweep) return cmd_sweep(o);
    if (*plot) return cmd_plot(o);
    if (*oracle) return cmd_oracle(o);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kMismatch;
  } catch (const TrainingAborted& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kAborted;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace mecsim::cli
