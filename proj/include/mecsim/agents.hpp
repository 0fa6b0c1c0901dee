#pragma once

// Uniform handle over the learning agents: construction by name, training,
// greedy action selection and checkpoint files.

#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mecsim/bandit.hpp"
#include "mecsim/ppg.hpp"

namespace mecsim {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<std::string>& agent_names() {
  static const std::vector<std::string> n{"cppg",   "ippg",   "lin-ucb", "lin-ts",
                                          "nn-eps", "nn-ucb", "nn-ts"};
  return n;
}

inline bool is_agent_name(const std::string& n) {
  const auto& v = agent_names();
  return std::find(v.begin(), v.end(), n) != v.end();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + p.string());
  out << text;
}

class Agent {
 public:
  static Agent create(const std::string& name, const SystemConfig& cfg, std::uint64_t seed) {
    Agent a;
    a.name_ = name;
    if (name == "cppg" || name == "ippg") {
      a.ppg_ = std::make_shared<PpgAgent>(
          name == "cppg" ? PpgKind::Centralized : PpgKind::Independent, cfg, seed);
    } else if (is_agent_name(name)) {
      a.bandit_ = std::make_shared<DsmabAgent>(name, cfg, seed);
    } else {
      throw std::invalid_argument("unknown agent " + name);
    }
    return a;
  }

  const std::string& name() const { return name_; }
  bool is_ppg() const { return static_cast<bool>(ppg_); }
  PpgAgent& ppg() { return *ppg_; }
  DsmabAgent& bandit() { return *bandit_; }

  std::vector<EpisodeStats> train(OffloadEnv& env, int episodes, std::uint64_t seed,
                                  const std::function<void(const EpisodeStats&)>& cb = {}) {
    if (ppg_) return train_ppg(env, *ppg_, episodes, seed, cb);
    return train_bandit(env, *bandit_, episodes, seed, cb);
  }

  // Deterministic deployment policy.
  JointAction act(const OffloadEnv& env, const std::vector<Observation>& obs) const {
    if (ppg_) return ppg_->act(obs, nullptr).actions;
    return bandit_->act(env, false);
  }

  // File name -> contents of a checkpoint, `checkpoint.json` last.
  std::vector<std::pair<std::string, std::string>> checkpoint_files() const {
    std::vector<std::pair<std::string, std::string>> files;
    if (ppg_) {
      files.emplace_back("checkpoint.json", ppg_->checkpoint().dump());
      return files;
    }
    nlohmann::json head = bandit_->header();
    nlohmann::json names = nlohmann::json::array();
    for (int u = 0; u < bandit_->num_users(); ++u) {
      const std::string rel = "users/user_" + std::to_string(u) + ".json";
      files.emplace_back(rel, bandit_->user_json(u).dump());
      names.push_back(rel);
    }
    head["user_files"] = names;
    files.emplace_back("checkpoint.json", head.dump());
    return files;
  }

  std::string hash() const {
    std::uint64_t h = fnv1a64("");
    for (const auto& [name, text] : checkpoint_files()) h = fnv1a64(text, h);
    return hex64(h);
  }

  // Writes the checkpoint files into `dir` and returns their hash.
  std::string save(const std::filesystem::path& dir) const {
    std::uint64_t h = fnv1a64("");
    for (const auto& [name, text] : checkpoint_files()) {
      const auto p = dir / name;
      std::filesystem::create_directories(p.parent_path());
      write_file(p, text);
      h = fnv1a64(text, h);
    }
    return hex64(h);
  }

  // Loads a checkpoint directory (or its checkpoint.json) against `cfg`.
  static Agent load(const std::filesystem::path& path, const SystemConfig& cfg) {
    const auto dir = std::filesystem::is_directory(path) ? path : path.parent_path();
    const auto file = std::filesystem::is_directory(path) ? path / "checkpoint.json" : path;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(file));
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(file.string() + ": " + e.what());
    }
    if (j.value("format", "") != "mecsim-checkpoint")
      throw CheckpointError(file.string() + " is not a checkpoint");
    const int k = j.at("num_users").get<int>();
    const int a = j.at("num_actions").get<int>();
    if (k != cfg.num_users)
      throw CheckpointError("checkpoint has num_users=" + std::to_string(k) +
                            " but config has num_users=" + std::to_string(cfg.num_users));
    if (a != cfg.num_actions())
      throw CheckpointError("checkpoint has num_actions=" + std::to_string(a) +
                            " but config has num_actions=" + std::to_string(cfg.num_actions()));
    const std::string name = j.at("agent").get<std::string>();
    Agent out;
    out.name_ = name;
    if (name == "cppg" || name == "ippg") {
      out.ppg_ = std::make_shared<PpgAgent>(PpgAgent::from_checkpoint(j, cfg));
      return out;
    }
    out.bandit_ = std::make_shared<DsmabAgent>(name, cfg, 0);
    out.bandit_->set_scales(j.at("scales").get<std::vector<double>>());
    const auto files = j.at("user_files").get<std::vector<std::string>>();
    if (static_cast<int>(files.size()) != k) throw CheckpointError("missing per-user files");
    for (int u = 0; u < k; ++u)
      out.bandit_->load_user(u, nlohmann::json::parse(read_file(dir / files[u])));
    return out;
  }

 private:
  std::string name_;
  std::shared_ptr<PpgAgent> ppg_;
  std::shared_ptr<DsmabAgent> bandit_;
};

}  // namespace mecsim
