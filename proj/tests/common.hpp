#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "mecsim/config.hpp"

namespace mecsim::fixtures {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline ChannelSpec constant_channel(int id, Technology tech, double mw_per_mbps, double up_bps,
                                    double down_bps) {
  ChannelSpec c;
  c.id = id;
  c.technology = tech;
  c.tx_power_j_per_bit = mw_per_mbps * 1e-9;
  c.rx_power_j_per_bit = c.tx_power_j_per_bit;
  SyntheticTraceSpec up;
  up.mean_bps = up_bps;
  up.std_bps = 0;
  SyntheticTraceSpec down = up;
  down.mean_bps = down_bps;
  c.uplink.synthetic = up;
  c.downlink.synthetic = down;
  return c;
}

// Deterministic tasks of `size_bits`, unit intensity, layer 1.
inline void fixed_tasks(SystemConfig& c, double size_bits) {
  auto& g = c.task_gen;
  g.layer_weights = {1, 0, 0, 0, 0, 0, 0};
  for (int l = 0; l < kNumQualityLayers; ++l) {
    g.layer_size_mean_bits[l] = size_bits;
    g.layer_size_std_bits[l] = 0;
  }
  g.intensity.mean_cpb = 1.0;
  g.intensity.std_cpb = 0.0;
}

// Two users, a fast cheap 5G link and a slow expensive 4G link, constant
// rates and identical deterministic tasks.
inline SystemConfig micro_config() {
  SystemConfig c;
  c.num_users = 2;
  c.num_channels = 2;
  c.channels = {constant_channel(1, Technology::FiveG, 5.27, 400e6, 400e6),
                constant_channel(2, Technology::FourG, 57.99, 50e6, 50e6)};
  c.compute.user_speed_bps = 1e8;
  c.compute.mec_total_speed_bps = 2e8;
  fixed_tasks(c, 30e6);
  require_valid(c);
  return c;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("mecsim-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace mecsim::fixtures
