#pragma once

// Domain types and validated configuration shared by every module.
//
// Units are SI throughout: bits, seconds, Hz, Joules, Watts. Channel power
// coefficients are held in J/bit (W per bit/s); the config file may give
// them in mW/Mbps, which is converted on load.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mecsim/util.hpp"

namespace mecsim {

inline constexpr int kNumQualityLayers = 7;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Task {
  double size_bits = 0.0;
  double intensity_cpb = 0.0;
  double deadline_s = 0.0;
  double result_size_bits = 0.0;
  int quality_layer = 1;

  bool operator==(const Task&) const = default;
};

// u = 0 computes on the headset, u = c > 0 offloads over channel c.
struct Action {
  int choice = 0;

  constexpr bool local() const { return choice == 0; }
  constexpr int channel() const { return choice; }
  auto operator<=>(const Action&) const = default;
};

using JointAction = std::vector<Action>;

enum class Technology { FourG, FiveG, WiGig };
enum class Direction { Uplink, Downlink };
enum class TraceModel { IidLognormal, GaussMarkov };

NLOHMANN_JSON_SERIALIZE_ENUM(Technology, {{Technology::FourG, "4g"},
                                          {Technology::FiveG, "5g"},
                                          {Technology::WiGig, "wigig"}})
NLOHMANN_JSON_SERIALIZE_ENUM(TraceModel,
                             {{TraceModel::IidLognormal, "iid_lognormal"},
                              {TraceModel::GaussMarkov, "gauss_markov"}})

inline const char* to_string(Technology t) {
  switch (t) {
    case Technology::FourG: return "4G";
    case Technology::FiveG: return "5G";
    case Technology::WiGig: return "WiGig";
  }
  return "?";
}

struct SyntheticTraceSpec {
  double mean_bps = 1e8;
  double std_bps = 0.0;
  TraceModel model = TraceModel::GaussMarkov;
  double correlation = 0.9;
  double sample_period_s = 0.1;
  double duration_s = 600.0;

  bool operator==(const SyntheticTraceSpec&) const = default;
};

// Either a CSV file or a synthetic generator; exactly one is set.
struct TraceSource {
  std::string file;
  std::optional<SyntheticTraceSpec> synthetic;

  bool operator==(const TraceSource&) const = default;
};

struct ChannelSpec {
  int id = 1;
  Technology technology = Technology::FiveG;
  double tx_power_j_per_bit = 5.27e-9;
  double rx_power_j_per_bit = 5.27e-9;
  TraceSource uplink;
  TraceSource downlink;

  bool operator==(const ChannelSpec&) const = default;
};

struct ComputeSpec {
  double user_cpu_freq_hz = 2.4e9;
  double user_speed_bps = 1e8;
  double mec_total_speed_bps = 2.5e9;
  double cpu_capacitance = 1e-27;
  double reference_intensity_cpb = 1.0;

  bool operator==(const ComputeSpec&) const = default;
};

struct IntensityDist {
  double mean_cpb = 1.0;
  double std_cpb = 0.35;

  bool operator==(const IntensityDist&) const = default;
};

struct TaskGenConfig {
  std::array<double, kNumQualityLayers> layer_size_mean_bits{
      10e6, 18e6, 28e6, 40e6, 55e6, 75e6, 100e6};
  std::array<double, kNumQualityLayers> layer_size_std_bits{
      2e6, 3.6e6, 5.6e6, 8e6, 11e6, 15e6, 20e6};
  std::array<double, kNumQualityLayers> layer_psnr_db{31.2, 34.0, 36.4, 38.3,
                                                       39.8, 41.0, 41.9};
  std::array<double, kNumQualityLayers> layer_weights{0.08, 0.12, 0.16, 0.20,
                                                       0.18, 0.14, 0.12};
  IntensityDist intensity;
  double deadline_s = 1.0;
  double result_ratio = 0.2;
  // Multiplies every layer mean/std; the task-size sweep variable.
  double size_scale = 1.0;

  bool operator==(const TaskGenConfig&) const = default;
};

struct PPGHyper {
  double clip_eps = 0.2;
  double dual_clip = 3.0;
  double entropy_weight = 0.01;
  int n_policy = 80;
  int n_aux = 6;
  int n_lambda = 5;
  int n_update = 4;  // episodes per update round
  double gamma = 0.0;
  double lambda_lr = 0.05;
  double lr = 3e-4;
  int minibatch = 256;
  int hidden = 64;
  int conv_kernel = 1;
  bool normalize_advantages = true;
  double max_grad_norm = 0.5;

  bool operator==(const PPGHyper&) const = default;
};

struct BanditHyper {
  double mu = 1.0;
  double reg_weight = 1e-4;
  int window = 1024;
  int batch = 32;
  int fit_steps = 1;
  double lr = 1e-3;
  double eps0 = 0.2;
  double eps_tau = 500.0;  // eps_t = eps0 / (1 + t / tau)
  double exploration_scale = 1.0;
  int hidden = 64;

  bool operator==(const BanditHyper&) const = default;
};

struct SystemConfig {
  int num_users = 30;
  int num_channels = 3;
  int episode_len = 36;
  int history_window = 4;
  int observation_dim = 15;
  std::uint64_t seed = 0;
  double epoch_s = 1.0;
  double lambda_init = 16.0;
  // Divisor applied to the efficiency term of the reward.
  double reward_scale = 1e8;
  std::vector<ChannelSpec> channels;
  ComputeSpec compute;
  TaskGenConfig task_gen;
  PPGHyper ppg;
  BanditHyper bandit;

  int num_actions() const { return num_channels + 1; }
  bool operator==(const SystemConfig&) const = default;
};

inline SyntheticTraceSpec synthetic_mbps(double mean_mbps, double std_mbps) {
  SyntheticTraceSpec s;
  s.mean_bps = mean_mbps * 1e6;
  s.std_bps = std_mbps * 1e6;
  return s;
}

// Channel set used when the config file lists none: 4G, 5G and WiGig with
// the measured power coefficients (mW/Mbps) 57.99, 5.27 and 6.15.
inline std::vector<ChannelSpec> default_channels() {
  auto make = [](int id, Technology tech, double mw_per_mbps,
                 SyntheticTraceSpec up, SyntheticTraceSpec down) {
    ChannelSpec c;
    c.id = id;
    c.technology = tech;
    c.tx_power_j_per_bit = mw_per_mbps * 1e-9;
    c.rx_power_j_per_bit = c.tx_power_j_per_bit;
    c.uplink.synthetic = up;
    c.downlink.synthetic = down;
    return c;
  };
  return {make(1, Technology::FourG, 57.99, synthetic_mbps(40, 20),
               synthetic_mbps(60, 30)),
          make(2, Technology::FiveG, 5.27, synthetic_mbps(700, 400),
               synthetic_mbps(900, 450)),
          make(3, Technology::WiGig, 6.15, synthetic_mbps(500, 250),
               synthetic_mbps(700, 300))};
}

inline SystemConfig default_config() {
  SystemConfig c;
  c.channels = default_channels();
  return c;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  std::string field;
  std::string rule;

  std::string message() const { return field + ": " + rule; }
};

inline std::vector<Violation> validate(const SystemConfig& c) {
  std::vector<Violation> out;
  auto need = [&](bool ok, std::string field, std::string rule) {
    if (!ok) out.push_back({std::move(field), std::move(rule)});
  };
  need(c.num_users >= 1, "num_users", "num_users must be ≥ 1");
  need(c.num_channels >= 1, "num_channels", "num_channels must be ≥ 1");
  need(c.episode_len >= 1, "episode_len", "episode_len must be ≥ 1");
  need(c.history_window >= 1, "history_window", "history_window must be ≥ 1");
  {
    const int dim = 2 + 3 * c.history_window + 1;
    if (dim != c.observation_dim) {
      out.push_back({"history_window",
                     "observation dim " + std::to_string(dim) + " ≠ " +
                         std::to_string(c.observation_dim) +
                         "; set observation_dim accordingly or H=4"});
    }
  }
  need(c.epoch_s > 0, "epoch_s", "must be > 0");
  need(c.lambda_init >= 0, "lambda_init", "must be ≥ 0");
  need(c.reward_scale > 0, "reward_scale", "must be > 0");
  if (static_cast<int>(c.channels.size()) != c.num_channels) {
    out.push_back({"channels", "expected " + std::to_string(c.num_channels) +
                                   " channel specs, got " +
                                   std::to_string(c.channels.size())});
  }
  for (std::size_t i = 0; i < c.channels.size(); ++i) {
    const auto& ch = c.channels[i];
    const std::string p = "channels[" + std::to_string(i) + "].";
    need(ch.id == static_cast<int>(i) + 1, p + "id",
         "channel ids must be 1..C in order");
    need(ch.tx_power_j_per_bit > 0, p + "tx_power_coeff", "must be > 0");
    need(ch.rx_power_j_per_bit > 0, p + "rx_power_coeff", "must be > 0");
    for (const auto* src : {&ch.uplink, &ch.downlink}) {
      const std::string q = p + (src == &ch.uplink ? "uplink" : "downlink");
      need(src->file.empty() != !src->synthetic.has_value(), q,
           "exactly one of file / synthetic must be given");
      if (src->synthetic) {
        const auto& s = *src->synthetic;
        need(s.mean_bps > 0, q + ".mean_bps", "must be > 0");
        need(s.std_bps >= 0, q + ".std_bps", "must be ≥ 0");
        need(s.correlation >= 0 && s.correlation < 1, q + ".correlation",
             "must be in [0,1)");
        need(s.sample_period_s > 0, q + ".sample_period_s", "must be > 0");
        need(s.duration_s > 0, q + ".duration_s", "must be > 0");
      }
    }
  }
  const auto& m = c.compute;
  need(m.user_cpu_freq_hz > 0, "compute.user_cpu_freq_hz", "must be > 0");
  need(m.user_speed_bps > 0, "compute.user_speed_bps", "must be > 0");
  need(m.mec_total_speed_bps > 0, "compute.mec_total_speed_bps", "must be > 0");
  need(m.cpu_capacitance > 0, "compute.cpu_capacitance", "must be > 0");
  need(m.reference_intensity_cpb > 0, "compute.reference_intensity_cpb",
       "must be > 0");
  need(m.user_speed_bps < m.mec_total_speed_bps, "compute.user_speed_bps",
       "must be < compute.mec_total_speed_bps");

  const auto& g = c.task_gen;
  double wsum = 0;
  for (int l = 0; l < kNumQualityLayers; ++l) {
    const std::string p = "task_gen.layer[" + std::to_string(l + 1) + "]";
    need(g.layer_size_mean_bits[l] > 0, p + ".size_mean_bits", "must be > 0");
    need(g.layer_size_std_bits[l] >= 0, p + ".size_std_bits", "must be ≥ 0");
    need(g.layer_weights[l] >= 0, p + ".weight", "must be ≥ 0");
    wsum += g.layer_weights[l];
    if (l > 0) {
      need(g.layer_size_mean_bits[l] >= g.layer_size_mean_bits[l - 1],
           "task_gen.layer_size_mean_bits", "must be nondecreasing in layer");
      need(g.layer_psnr_db[l] >= g.layer_psnr_db[l - 1],
           "task_gen.layer_psnr_db", "must be nondecreasing in layer");
    }
  }
  need(wsum > 0, "task_gen.layer_weights", "must have positive total mass");
  need(g.intensity.mean_cpb > 0, "task_gen.intensity.mean_cpb", "must be > 0");
  need(g.intensity.std_cpb >= 0, "task_gen.intensity.std_cpb", "must be ≥ 0");
  need(g.deadline_s > 0, "task_gen.deadline_s", "must be > 0");
  need(g.result_ratio >= 0, "task_gen.result_ratio", "must be ≥ 0");
  need(g.size_scale > 0, "task_gen.size_scale", "must be > 0");

  const auto& h = c.ppg;
  need(h.clip_eps > 0 && h.clip_eps < 1, "ppg.clip_eps", "must be in (0,1)");
  need(h.dual_clip > 1, "ppg.dual_clip", "must be > 1");
  need(h.entropy_weight >= 0, "ppg.entropy_weight", "must be ≥ 0");
  need(h.n_policy >= 0 && h.n_aux >= 0 && h.n_lambda >= 0, "ppg.n_*",
       "phase epoch counts must be ≥ 0");
  need(h.n_update >= 1, "ppg.n_update", "must be ≥ 1");
  need(h.gamma == 0.0, "ppg.gamma", "only gamma = 0 is supported");
  need(h.lambda_lr >= 0, "ppg.lambda_lr", "must be ≥ 0");
  need(h.lr >= 0, "ppg.lr", "must be ≥ 0");
  need(h.minibatch >= 1, "ppg.minibatch", "must be ≥ 1");
  need(h.hidden >= 1, "ppg.hidden", "must be ≥ 1");
  need(h.conv_kernel >= 1 && h.conv_kernel % 2 == 1, "ppg.conv_kernel",
       "must be a positive odd integer");

  const auto& b = c.bandit;
  need(b.mu > 0, "bandit.mu", "must be > 0");
  need(b.reg_weight >= 0, "bandit.reg_weight", "must be ≥ 0");
  need(b.window >= 1 && b.batch >= 1 && b.fit_steps >= 0, "bandit.window",
       "window/batch must be ≥ 1");
  need(b.eps0 >= 0 && b.eps0 <= 1, "bandit.eps0", "must be in [0,1]");
  need(b.eps_tau > 0, "bandit.eps_tau", "must be > 0");
  need(b.exploration_scale >= 0, "bandit.exploration_scale", "must be ≥ 0");
  need(b.hidden >= 1, "bandit.hidden", "must be ≥ 1");
  return out;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& dst) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

inline TraceSource read_source(const nlohmann::json& j,
                               const std::filesystem::path& base) {
  TraceSource s;
  if (j.contains("file")) {
    std::filesystem::path p = j.at("file").get<std::string>();
    if (p.is_relative() && !base.empty()) p = base / p;
    s.file = p.string();
  }
  if (j.contains("synthetic")) {
    const auto& k = j.at("synthetic");
    SyntheticTraceSpec t;
    if (k.contains("mean_mbps")) t.mean_bps = k.at("mean_mbps").get<double>() * 1e6;
    if (k.contains("std_mbps")) t.std_bps = k.at("std_mbps").get<double>() * 1e6;
    read(k, "mean_bps", t.mean_bps);
    read(k, "std_bps", t.std_bps);
    read(k, "model", t.model);
    read(k, "correlation", t.correlation);
    read(k, "sample_period_s", t.sample_period_s);
    read(k, "duration_s", t.duration_s);
    s.synthetic = t;
  }
  return s;
}

inline nlohmann::json write_source(const TraceSource& s) {
  nlohmann::json j = nlohmann::json::object();
  if (!s.file.empty()) j["file"] = s.file;
  if (s.synthetic) {
    const auto& t = *s.synthetic;
    j["synthetic"] = {{"mean_bps", t.mean_bps},
                      {"std_bps", t.std_bps},
                      {"model", t.model},
                      {"correlation", t.correlation},
                      {"sample_period_s", t.sample_period_s},
                      {"duration_s", t.duration_s}};
  }
  return j;
}

}  // namespace detail

inline nlohmann::json to_json(const SystemConfig& c) {
  using nlohmann::json;
  json channels = json::array();
  for (const auto& ch : c.channels) {
    channels.push_back({{"id", ch.id},
                        {"technology", ch.technology},
                        {"tx_power_j_per_bit", ch.tx_power_j_per_bit},
                        {"rx_power_j_per_bit", ch.rx_power_j_per_bit},
                        {"uplink", detail::write_source(ch.uplink)},
                        {"downlink", detail::write_source(ch.downlink)}});
  }
  const auto& m = c.compute;
  const auto& g = c.task_gen;
  const auto& h = c.ppg;
  const auto& b = c.bandit;
  return {
      {"num_users", c.num_users},
      {"num_channels", c.num_channels},
      {"episode_len", c.episode_len},
      {"history_window", c.history_window},
      {"observation_dim", c.observation_dim},
      {"seed", c.seed},
      {"epoch_s", c.epoch_s},
      {"lambda_init", c.lambda_init},
      {"reward_scale", c.reward_scale},
      {"channels", channels},
      {"compute",
       {{"user_cpu_freq_hz", m.user_cpu_freq_hz},
        {"user_speed_bps", m.user_speed_bps},
        {"mec_total_speed_bps", m.mec_total_speed_bps},
        {"cpu_capacitance", m.cpu_capacitance},
        {"reference_intensity_cpb", m.reference_intensity_cpb}}},
      {"task_gen",
       {{"layer_size_mean_bits", g.layer_size_mean_bits},
        {"layer_size_std_bits", g.layer_size_std_bits},
        {"layer_psnr_db", g.layer_psnr_db},
        {"layer_weights", g.layer_weights},
        {"intensity", {{"mean_cpb", g.intensity.mean_cpb},
                       {"std_cpb", g.intensity.std_cpb}}},
        {"deadline_s", g.deadline_s},
        {"result_ratio", g.result_ratio},
        {"size_scale", g.size_scale}}},
      {"ppg",
       {{"clip_eps", h.clip_eps},
        {"dual_clip", h.dual_clip},
        {"entropy_weight", h.entropy_weight},
        {"n_policy", h.n_policy},
        {"n_aux", h.n_aux},
        {"n_lambda", h.n_lambda},
        {"n_update", h.n_update},
        {"gamma", h.gamma},
        {"lambda_lr", h.lambda_lr},
        {"lr", h.lr},
        {"minibatch", h.minibatch},
        {"hidden", h.hidden},
        {"conv_kernel", h.conv_kernel},
        {"normalize_advantages", h.normalize_advantages},
        {"max_grad_norm", h.max_grad_norm}}},
      {"bandit",
       {{"mu", b.mu},
        {"reg_weight", b.reg_weight},
        {"window", b.window},
        {"batch", b.batch},
        {"fit_steps", b.fit_steps},
        {"lr", b.lr},
        {"eps0", b.eps0},
        {"eps_tau", b.eps_tau},
        {"exploration_scale", b.exploration_scale},
        {"hidden", b.hidden}}},
  };
}

// Builds a config from JSON, filling defaults for every absent key. Relative
// trace file paths resolve against `base_dir`. Does not validate.
inline SystemConfig from_json(const nlohmann::json& j,
                              const std::filesystem::path& base_dir = {}) {
  using detail::read;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  SystemConfig c;
  read(j, "num_users", c.num_users);
  read(j, "num_channels", c.num_channels);
  read(j, "episode_len", c.episode_len);
  read(j, "history_window", c.history_window);
  read(j, "observation_dim", c.observation_dim);
  read(j, "seed", c.seed);
  read(j, "epoch_s", c.epoch_s);
  read(j, "lambda_init", c.lambda_init);
  read(j, "reward_scale", c.reward_scale);

  if (j.contains("channels")) {
    const auto defaults = default_channels();
    int idx = 0;
    for (const auto& k : j.at("channels")) {
      ChannelSpec ch = idx < static_cast<int>(defaults.size())
                           ? defaults[idx]
                           : ChannelSpec{};
      ch.id = idx + 1;
      read(k, "id", ch.id);
      read(k, "technology", ch.technology);
      if (k.contains("tx_power_mw_per_mbps")) {
        ch.tx_power_j_per_bit = k.at("tx_power_mw_per_mbps").get<double>() / 1e9;
        ch.rx_power_j_per_bit = ch.tx_power_j_per_bit;
      }
      read(k, "tx_power_j_per_bit", ch.tx_power_j_per_bit);
      if (k.contains("rx_power_mw_per_mbps")) {
        ch.rx_power_j_per_bit = k.at("rx_power_mw_per_mbps").get<double>() / 1e9;
      } else if (!k.contains("rx_power_j_per_bit") &&
                 (k.contains("tx_power_mw_per_mbps") ||
                  k.contains("tx_power_j_per_bit"))) {
        ch.rx_power_j_per_bit = ch.tx_power_j_per_bit;
      }
      read(k, "rx_power_j_per_bit", ch.rx_power_j_per_bit);
      if (k.contains("uplink")) ch.uplink = detail::read_source(k.at("uplink"), base_dir);
      if (k.contains("downlink"))
        ch.downlink = detail::read_source(k.at("downlink"), base_dir);
      c.channels.push_back(std::move(ch));
      ++idx;
    }
    if (!j.contains("num_channels")) c.num_channels = static_cast<int>(c.channels.size());
  } else {
    c.channels = default_channels();
    if (c.num_channels < static_cast<int>(c.channels.size()) && c.num_channels >= 1) {
      c.channels.resize(c.num_channels);
    }
  }

  if (j.contains("compute")) {
    const auto& k = j.at("compute");
    auto& m = c.compute;
    read(k, "user_cpu_freq_hz", m.user_cpu_freq_hz);
    read(k, "user_speed_bps", m.user_speed_bps);
    read(k, "mec_total_speed_bps", m.mec_total_speed_bps);
    read(k, "cpu_capacitance", m.cpu_capacitance);
    read(k, "reference_intensity_cpb", m.reference_intensity_cpb);
  }
  if (j.contains("task_gen")) {
    const auto& k = j.at("task_gen");
    auto& g = c.task_gen;
    read(k, "layer_size_mean_bits", g.layer_size_mean_bits);
    read(k, "layer_size_std_bits", g.layer_size_std_bits);
    read(k, "layer_psnr_db", g.layer_psnr_db);
    read(k, "layer_weights", g.layer_weights);
    if (k.contains("intensity")) {
      read(k.at("intensity"), "mean_cpb", g.intensity.mean_cpb);
      read(k.at("intensity"), "std_cpb", g.intensity.std_cpb);
    }
    read(k, "deadline_s", g.deadline_s);
    read(k, "result_ratio", g.result_ratio);
    read(k, "size_scale", g.size_scale);
  }
  if (j.contains("ppg")) {
    const auto& k = j.at("ppg");
    auto& h = c.ppg;
    read(k, "clip_eps", h.clip_eps);
    read(k, "dual_clip", h.dual_clip);
    read(k, "entropy_weight", h.entropy_weight);
    read(k, "n_policy", h.n_policy);
    read(k, "n_aux", h.n_aux);
    read(k, "n_lambda", h.n_lambda);
    read(k, "n_update", h.n_update);
    read(k, "gamma", h.gamma);
    read(k, "lambda_lr", h.lambda_lr);
    read(k, "lr", h.lr);
    read(k, "minibatch", h.minibatch);
    read(k, "hidden", h.hidden);
    read(k, "conv_kernel", h.conv_kernel);
    read(k, "normalize_advantages", h.normalize_advantages);
    read(k, "max_grad_norm", h.max_grad_norm);
  }
  if (j.contains("bandit")) {
    const auto& k = j.at("bandit");
    auto& b = c.bandit;
    read(k, "mu", b.mu);
    read(k, "reg_weight", b.reg_weight);
    read(k, "window", b.window);
    read(k, "batch", b.batch);
    read(k, "fit_steps", b.fit_steps);
    read(k, "lr", b.lr);
    read(k, "eps0", b.eps0);
    read(k, "eps_tau", b.eps_tau);
    read(k, "exploration_scale", b.exploration_scale);
    read(k, "hidden", b.hidden);
  }
  return c;
}

inline void require_valid(const SystemConfig& c) {
  const auto v = validate(c);
  if (v.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& x : v) msg += "\n  " + x.message();
  throw ConfigError(msg);
}

inline SystemConfig parse_config(std::string_view text,
                                 const std::filesystem::path& base_dir = {}) {
  nlohmann::json j;
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string_view::npos;
  if (blank) {
    j = nlohmann::json::object();
  } else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(std::string("parse error: ") + e.what());
    }
  }
  SystemConfig c = from_json(j, base_dir);
  require_valid(c);
  return c;
}

inline SystemConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

inline std::string serialize(const SystemConfig& c) { return to_json(c).dump(2); }

// Content hash of the canonical serialization.
inline std::string config_hash(const SystemConfig& c) {
  return hex64(fnv1a64(to_json(c).dump()));
}

}  // namespace mecsim
