#pragma once

// Baseline policies, metric summaries, the exhaustive joint-action oracle,
// QoE breakdowns, sign/trend tests and experiment sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mecsim/agents.hpp"
#include "mecsim/config.hpp"
#include "mecsim/env.hpp"
#include "mecsim/util.hpp"

namespace mecsim {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using PolicyFn = std::function<JointAction(const OffloadEnv&, const std::vector<Observation>&)>;

inline const std::vector<std::string>& baseline_names() {
  static const std::vector<std::string> n{"always_local", "always_offload_best_rate",
                                          "uniform_random"};
  return n;
}

inline bool is_baseline(const std::string& name) {
  const auto& b = baseline_names();
  return std::find(b.begin(), b.end(), name) != b.end();
}

inline PolicyFn make_baseline(const std::string& name, std::uint64_t seed) {
  if (name == "always_local") {
    return [](const OffloadEnv& env, const std::vector<Observation>&) {
      return JointAction(env.num_users(), Action{0});
    };
  }
  if (name == "always_offload_best_rate") {
    return [](const OffloadEnv& env, const std::vector<Observation>&) {
      JointAction j(env.num_users());
      for (int u = 0; u < env.num_users(); ++u) {
        int best = 1;
        double best_rate = -1;
        for (int c = 1; c <= env.config().num_channels; ++c) {
          const double r = env.recent_rate(u, c);
          if (r > best_rate) {
            best_rate = r;
            best = c;
          }
        }
        j[u] = Action{best};
      }
      return j;
    };
  }
  if (name == "uniform_random") {
    auto rng = std::make_shared<Rng>(make_rng(seed, 31));
    return [rng](const OffloadEnv& env, const std::vector<Observation>&) {
      std::uniform_int_distribution<int> pick(0, env.num_actions() - 1);
      JointAction j(env.num_users());
      for (auto& a : j) a = Action{pick(*rng)};
      return j;
    };
  }
  throw EvalError("unknown baseline " + name);
}

struct MetricSummary {
  long decisions = 0;
  double mean_response_s = 0, std_response_s = 0;
  double mean_energy_j = 0, std_energy_j = 0;
  double mean_efficiency = 0;
  double violation_rate = 0;
  double mean_reward = 0;
  double psnr_mean_db = 0;
  double local_fraction = 0;
  double mean_mec_share_bps = 0;
  std::vector<double> action_freq;
};

inline MetricSummary summarize(std::span<const StepRecord> records, int num_actions,
                               std::span<const double> psnr_db) {
  if (records.empty()) throw EvalError("no records");
  MetricSummary m;
  m.decisions = static_cast<long>(records.size());
  m.action_freq.assign(num_actions, 0.0);
  const double n = static_cast<double>(records.size());
  double t2 = 0, e2 = 0;
  for (const auto& r : records) {
    m.mean_response_s += r.response_time_s;
    t2 += r.response_time_s * r.response_time_s;
    m.mean_energy_j += r.energy_j;
    e2 += r.energy_j * r.energy_j;
    m.mean_efficiency += r.efficiency;
    m.violation_rate += r.violated() ? 1 : 0;
    m.mean_reward += r.reward;
    m.psnr_mean_db += psnr_db[r.task.quality_layer - 1];
    m.mean_mec_share_bps += r.mec_share_bps;
    m.action_freq.at(r.action.choice) += 1;
  }
  m.mean_response_s /= n;
  m.mean_energy_j /= n;
  m.mean_efficiency /= n;
  m.violation_rate /= n;
  m.mean_reward /= n;
  m.psnr_mean_db /= n;
  m.mean_mec_share_bps /= n;
  m.std_response_s = std::sqrt(std::max(0.0, t2 / n - m.mean_response_s * m.mean_response_s));
  m.std_energy_j = std::sqrt(std::max(0.0, e2 / n - m.mean_energy_j * m.mean_energy_j));
  for (double& f : m.action_freq) f /= n;
  m.local_fraction = m.action_freq[0];
  return m;
}

inline nlohmann::json to_json(const MetricSummary& m) {
  return {{"decisions", m.decisions},
          {"mean_response_s", m.mean_response_s},
          {"std_response_s", m.std_response_s},
          {"mean_energy_j", m.mean_energy_j},
          {"std_energy_j", m.std_energy_j},
          {"mean_efficiency", m.mean_efficiency},
          {"violation_rate", m.violation_rate},
          {"mean_reward", m.mean_reward},
          {"psnr_mean_db", m.psnr_mean_db},
          {"local_fraction", m.local_fraction},
          {"mean_mec_share_bps", m.mean_mec_share_bps},
          {"action_freq", m.action_freq}};
}

// Calls fn(0..n-1) on up to `workers` threads; fn must not share mutable state.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t next = 0;
  std::vector<std::future<void>> running;
  while (next < n || !running.empty()) {
    while (next < n && static_cast<int>(running.size()) < workers)
      running.push_back(std::async(std::launch::async, fn, next++));
    running.front().get();
    running.erase(running.begin());
  }
}

inline std::uint64_t eval_episode_seed(std::uint64_t seed, int episode) {
  return mix_seed(seed, 0x6576616cULL + static_cast<std::uint64_t>(episode));
}

using RecordSink = std::function<void(const StepRecord&)>;

// Runs `policy` on fresh evaluation episodes. Rewards use the coefficients
// currently set on the environment.
inline MetricSummary evaluate_policy(OffloadEnv& env, const PolicyFn& policy, int episodes,
                                     std::uint64_t seed, const RecordSink& sink = {}) {
  if (episodes < 1) throw EvalError("episodes must be >= 1");
  std::vector<StepRecord> all;
  all.reserve(static_cast<std::size_t>(episodes) * env.config().episode_len * env.num_users());
  for (int ep = 0; ep < episodes; ++ep) {
    auto obs = env.reset(eval_episode_seed(seed, ep), ep);
    while (!env.done()) {
      const JointAction a = policy(env, obs);
      StepResult r = env.step(a);
      for (const auto& rec : r.records) {
        if (sink) sink(rec);
        all.push_back(rec);
      }
      obs = std::move(r.observations);
    }
  }
  return summarize(all, env.num_actions(), env.config().task_gen.layer_psnr_db);
}

inline PolicyFn agent_policy(std::shared_ptr<const Agent> agent) {
  return [agent](const OffloadEnv& env, const std::vector<Observation>& obs) {
    return agent->act(env, obs);
  };
}

// Enumerates every joint action of the current step.
inline std::vector<JointAction> all_joint_actions(int users, int actions) {
  double count = std::pow(static_cast<double>(actions), users);
  if (count > 4096) throw EvalError("joint action space too large for exhaustive search");
  std::vector<JointAction> out;
  JointAction cur(users, Action{0});
  const auto n = static_cast<long>(count);
  for (long i = 0; i < n; ++i) {
    long x = i;
    for (int u = 0; u < users; ++u) {
      cur[u] = Action{static_cast<int>(x % actions)};
      x /= actions;
    }
    out.push_back(cur);
  }
  return out;
}

struct OracleResult {
  double mean_reward = 0;                // per decision
  std::vector<JointAction> best_actions;  // one per step, episode-major
  std::vector<double> step_reward;        // summed over users
};

// Per-step exhaustive maximization of the summed reward. Rewards do not
// depend on earlier actions, so the per-step optimum is the episode optimum.
inline OracleResult brute_force_oracle(OffloadEnv& env, int episodes, std::uint64_t seed) {
  const auto joint = all_joint_actions(env.num_users(), env.num_actions());
  OracleResult out;
  double total = 0, n = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    env.reset(eval_episode_seed(seed, ep), ep);
    while (!env.done()) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < joint.size(); ++i) {
        const auto recs = env.evaluate(joint[i]);
        double s = 0;
        for (const auto& r : recs) s += r.reward;
        if (s > best) {
          best = s;
          best_i = i;
        }
      }
      env.step(joint[best_i]);
      out.best_actions.push_back(joint[best_i]);
      out.step_reward.push_back(best);
      total += best;
      n += env.num_users();
    }
  }
  out.mean_reward = total / n;
  return out;
}

struct QoeSummary {
  std::vector<long> psnr_hist;          // decisions per quality layer
  std::vector<double> psnr_db;          // layer lookup
  std::vector<double> size_edges;       // bins+1 edges, bits
  std::vector<long> size_count;
  std::vector<double> violation_prob;   // NaN for empty bins
  bool psnr_monotone = true;            // lookup nondecreasing in layer
  bool violation_monotone = true;       // nondecreasing over nonempty bins
};

inline QoeSummary qoe_summary(std::span<const StepRecord> records, std::span<const double> psnr_db,
                              int bins = 10) {
  if (records.empty()) throw EvalError("no records");
  if (bins < 1) throw EvalError("bins must be >= 1");
  QoeSummary q;
  q.psnr_db.assign(psnr_db.begin(), psnr_db.end());
  q.psnr_hist.assign(psnr_db.size(), 0);
  double lo = records[0].task.size_bits, hi = lo;
  for (const auto& r : records) {
    q.psnr_hist.at(r.task.quality_layer - 1) += 1;
    lo = std::min(lo, r.task.size_bits);
    hi = std::max(hi, r.task.size_bits);
  }
  if (hi <= lo) hi = lo * (1 + 1e-12) + 1e-12;
  const double w = (hi - lo) / bins;
  for (int b = 0; b <= bins; ++b) q.size_edges.push_back(lo + w * b);
  q.size_count.assign(bins, 0);
  std::vector<long> viol(bins, 0);
  for (const auto& r : records) {
    int b = static_cast<int>((r.task.size_bits - lo) / w);
    b = std::clamp(b, 0, bins - 1);
    q.size_count[b] += 1;
    if (r.violated()) viol[b] += 1;
  }
  double prev = -1;
  for (int b = 0; b < bins; ++b) {
    if (q.size_count[b] == 0) {
      q.violation_prob.push_back(std::nan(""));
      continue;
    }
    const double p = static_cast<double>(viol[b]) / static_cast<double>(q.size_count[b]);
    q.violation_prob.push_back(p);
    if (p < prev) q.violation_monotone = false;
    prev = p;
  }
  for (std::size_t l = 1; l < psnr_db.size(); ++l)
    if (psnr_db[l] < psnr_db[l - 1]) q.psnr_monotone = false;
  return q;
}

// One-sided sign test: P(X >= successes) for X ~ Binomial(n, 1/2).
inline double sign_test_p(int successes, int n) {
  if (n < 1 || successes < 0 || successes > n) throw EvalError("invalid sign test counts");
  double p = 0;
  for (int k = successes; k <= n; ++k) {
    double c = 1;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    p += c * std::pow(0.5, n);
  }
  return p;
}

struct TrendResult {
  int successes = 0;
  int seeds = 0;
  double p_value = 1.0;
  bool pass = false;
  std::vector<double> slopes;
};

// Least-squares slope of `y` against `x`.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0 ? sxy / sxx : 0.0;
}

// Per-seed slope sign against the expected direction (+1 increasing, -1
// decreasing); ties count against. One-sided sign test at `alpha`.
inline TrendResult trend_test(std::span<const double> x,
                              const std::vector<std::vector<double>>& per_seed, int direction,
                              double alpha = 0.05) {
  TrendResult t;
  t.seeds = static_cast<int>(per_seed.size());
  if (t.seeds == 0) throw EvalError("trend test needs at least one seed");
  for (const auto& y : per_seed) {
    if (y.size() != x.size()) throw EvalError("trend test: series length mismatch");
    const double s = ols_slope(x, y);
    t.slopes.push_back(s);
    if (s * direction > 0) ++t.successes;
  }
  t.p_value = sign_test_p(t.successes, t.seeds);
  t.pass = t.p_value < alpha;
  return t;
}

// ---------------------------------------------------------------------------
// Experiment sweeps.

enum class SweepVar { NumUsers, TaskSizeScale, UserSpeed, MecSpeed };

inline const char* to_string(SweepVar v) {
  switch (v) {
    case SweepVar::NumUsers: return "num_users";
    case SweepVar::TaskSizeScale: return "task_size_scale";
    case SweepVar::UserSpeed: return "user_speed";
    case SweepVar::MecSpeed: return "mec_speed";
  }
  return "";
}

inline SweepVar sweep_var_from_string(const std::string& s) {
  for (auto v : {SweepVar::NumUsers, SweepVar::TaskSizeScale, SweepVar::UserSpeed,
                 SweepVar::MecSpeed})
    if (s == to_string(v)) return v;
  throw EvalError("unknown sweep variable " + s +
                  " (expected num_users, task_size_scale, user_speed or mec_speed)");
}

inline SystemConfig apply_sweep(SystemConfig cfg, SweepVar var, double value) {
  switch (var) {
    case SweepVar::NumUsers: cfg.num_users = static_cast<int>(std::lround(value)); break;
    case SweepVar::TaskSizeScale: cfg.task_gen.size_scale = value; break;
    case SweepVar::UserSpeed: cfg.compute.user_speed_bps = value; break;
    case SweepVar::MecSpeed: cfg.compute.mec_total_speed_bps = value; break;
  }
  require_valid(cfg);
  return cfg;
}

struct ExperimentSpec {
  SweepVar variable = SweepVar::NumUsers;
  std::vector<double> values;
  std::vector<std::string> agents;
  std::vector<std::uint64_t> seeds;
  int train_episodes = 2000;
  int eval_episodes = 1000;
  // false: learners train once on the base config and are evaluated at
  // every sweep value (requires values that keep the agent dimensions).
  bool train_per_point = true;
  int jobs = 1;
};

struct ExperimentRow {
  std::string variable;
  double value = 0;
  std::string agent;
  std::uint64_t seed = 0;
  MetricSummary summary;
  std::string checkpoint_hash;
};

struct TrainedAgent {
  std::shared_ptr<Agent> agent;
  std::string checkpoint_hash;
  std::vector<EpisodeStats> log;
};

// Trains learner `name` on `cfg`. Deterministic in (cfg, seed).
inline TrainedAgent train_agent(const std::string& name, const SystemConfig& cfg,
                                std::uint64_t seed, int episodes) {
  TrainedAgent t;
  t.agent = std::make_shared<Agent>(Agent::create(name, cfg, seed));
  OffloadEnv env(cfg);
  t.log = t.agent->train(env, episodes, seed);
  t.checkpoint_hash = t.agent->hash();
  return t;
}

inline MetricSummary evaluate_named(const std::string& name, const std::shared_ptr<Agent>& agent,
                                    const SystemConfig& cfg, std::uint64_t seed, int episodes,
                                    const RecordSink& sink = {}) {
  OffloadEnv env(cfg);
  const PolicyFn policy = agent ? agent_policy(agent) : make_baseline(name, seed);
  return evaluate_policy(env, policy, episodes, seed, sink);
}

// Table keyed by (sweep value, agent, seed), in that order. `base` supplies
// everything but the swept variable.
inline std::vector<ExperimentRow> run_experiment(
    const SystemConfig& base, const ExperimentSpec& spec,
    const std::function<void(const std::string&)>& progress = {}) {
  if (spec.seeds.empty()) throw EvalError("experiment needs at least one seed");
  if (spec.values.empty()) throw EvalError("experiment needs at least one sweep value");
  if (spec.eval_episodes < 1) throw EvalError("eval episodes must be >= 1");
  for (const auto& a : spec.agents)
    if (!is_baseline(a) && !is_agent_name(a)) throw EvalError("unknown agent " + a);

  struct Job {
    std::size_t vi, ai, si;
  };
  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < spec.values.size(); ++vi)
    for (std::size_t ai = 0; ai < spec.agents.size(); ++ai)
      for (std::size_t si = 0; si < spec.seeds.size(); ++si) jobs.push_back({vi, ai, si});

  // Shared agents when learners are trained once on the base config.
  std::map<std::pair<std::size_t, std::size_t>, TrainedAgent> shared;
  std::mutex mu;
  auto trained_once = [&](std::size_t ai, std::size_t si) {
    {
      std::lock_guard<std::mutex> lock(mu);
      auto it = shared.find({ai, si});
      if (it != shared.end()) return it->second;
    }
    TrainedAgent t = train_agent(spec.agents[ai], base, spec.seeds[si], spec.train_episodes);
    std::lock_guard<std::mutex> lock(mu);
    return shared.emplace(std::make_pair(ai, si), std::move(t)).first->second;
  };
  if (!spec.train_per_point) {
    for (std::size_t ai = 0; ai < spec.agents.size(); ++ai)
      if (!is_baseline(spec.agents[ai]))
        for (std::size_t si = 0; si < spec.seeds.size(); ++si) trained_once(ai, si);
  }

  std::vector<ExperimentRow> rows(jobs.size());
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const std::string& name = spec.agents[job.ai];
    const std::uint64_t seed = spec.seeds[job.si];
    const double value = spec.values[job.vi];
    const SystemConfig cfg = apply_sweep(base, spec.variable, value);
    ExperimentRow row;
    row.variable = to_string(spec.variable);
    row.value = value;
    row.agent = name;
    row.seed = seed;
    std::shared_ptr<Agent> agent;
    if (!is_baseline(name)) {
      TrainedAgent t = spec.train_per_point
                           ? train_agent(name, cfg, seed, spec.train_episodes)
                           : trained_once(job.ai, job.si);
      agent = t.agent;
      row.checkpoint_hash = t.checkpoint_hash;
    }
    row.summary = evaluate_named(name, agent, cfg, seed, spec.eval_episodes);
    rows[j] = std::move(row);
    if (progress) {
      std::lock_guard<std::mutex> lock(mu);
      progress(std::string(to_string(spec.variable)) + "=" + fmt_double(value) + " agent=" +
               name + " seed=" + std::to_string(seed) + " done");
    }
  };

  parallel_for(jobs.size(), spec.jobs, run_job);
  return rows;
}

// Column names of the per-run result table.
inline std::string results_header(int num_actions) {
  std::string h =
      "variable,value,agent,seed,decisions,mean_response_s,std_response_s,mean_energy_j,"
      "std_energy_j,mean_efficiency,violation_rate,mean_reward,psnr_mean_db,local_fraction";
  for (int a = 0; a < num_actions; ++a) h += ",freq_" + std::to_string(a);
  return h + ",checkpoint_hash";
}

inline void write_results_csv(std::ostream& out, std::span<const ExperimentRow> rows) {
  const int a = rows.empty() ? 0 : static_cast<int>(rows[0].summary.action_freq.size());
  out << results_header(a) << '\n';
  for (const auto& r : rows) {
    const auto& m = r.summary;
    out << r.variable << ',' << fmt_double(r.value) << ',' << r.agent << ',' << r.seed << ','
        << m.decisions << ',' << fmt_double(m.mean_response_s) << ','
        << fmt_double(m.std_response_s) << ',' << fmt_double(m.mean_energy_j) << ','
        << fmt_double(m.std_energy_j) << ',' << fmt_double(m.mean_efficiency) << ','
        << fmt_double(m.violation_rate) << ',' << fmt_double(m.mean_reward) << ','
        << fmt_double(m.psnr_mean_db) << ',' << fmt_double(m.local_fraction);
    for (double f : m.action_freq) out << ',' << fmt_double(f);
    out << ',' << r.checkpoint_hash << '\n';
  }
}

// Mean and sample standard deviation over seeds for each (value, agent).
inline void write_summary_csv(std::ostream& out, std::span<const ExperimentRow> rows) {
  struct Metric {
    const char* name;
    double (*get)(const MetricSummary&);
  };
  static const Metric metrics[] = {
      {"mean_response_s", [](const MetricSummary& m) { return m.mean_response_s; }},
      {"mean_energy_j", [](const MetricSummary& m) { return m.mean_energy_j; }},
      {"mean_efficiency", [](const MetricSummary& m) { return m.mean_efficiency; }},
      {"violation_rate", [](const MetricSummary& m) { return m.violation_rate; }},
      {"mean_reward", [](const MetricSummary& m) { return m.mean_reward; }},
      {"psnr_mean_db", [](const MetricSummary& m) { return m.psnr_mean_db; }},
      {"local_fraction", [](const MetricSummary& m) { return m.local_fraction; }}};
  out << "variable,value,agent,seeds";
  for (const auto& m : metrics) out << ',' << m.name << ',' << m.name << "_std";
  out << '\n';
  std::vector<std::pair<double, std::string>> keys;
  for (const auto& r : rows) {
    const std::pair<double, std::string> k{r.value, r.agent};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  for (const auto& [value, agent] : keys) {
    std::vector<const MetricSummary*> group;
    std::string var;
    for (const auto& r : rows)
      if (r.value == value && r.agent == agent) {
        group.push_back(&r.summary);
        var = r.variable;
      }
    out << var << ',' << fmt_double(value) << ',' << agent << ',' << group.size();
    for (const auto& m : metrics) {
      double s = 0, s2 = 0;
      for (const auto* g : group) s += m.get(*g);
      const double mean = s / static_cast<double>(group.size());
      for (const auto* g : group) s2 += (m.get(*g) - mean) * (m.get(*g) - mean);
      const double sd =
          group.size() > 1 ? std::sqrt(s2 / static_cast<double>(group.size() - 1)) : 0.0;
      out << ',' << fmt_double(mean) << ',' << fmt_double(sd);
    }
    out << '\n';
  }
}

}  // namespace mecsim
