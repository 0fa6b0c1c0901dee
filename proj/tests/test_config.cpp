#include <gtest/gtest.h>

#include "common.hpp"
#include "mecsim/config.hpp"

using namespace mecsim;

namespace {

bool has_field(const std::vector<Violation>& v, const std::string& field) {
  for (const auto& x : v)
    if (x.field.find(field) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, EmptyFileGivesTableDefaults) {
  const SystemConfig c = parse_config("");
  EXPECT_EQ(c.num_users, 30);
  EXPECT_EQ(c.num_channels, 3);
  EXPECT_EQ(c.episode_len, 36);
  EXPECT_EQ(c.history_window, 4);
  EXPECT_DOUBLE_EQ(c.task_gen.deadline_s, 1.0);
  EXPECT_DOUBLE_EQ(c.compute.cpu_capacitance, 1e-27);
  EXPECT_DOUBLE_EQ(c.compute.user_cpu_freq_hz, 2.4e9);
  EXPECT_DOUBLE_EQ(c.compute.user_speed_bps, 100e6);
  EXPECT_DOUBLE_EQ(c.compute.mec_total_speed_bps, 2.5e9);
  EXPECT_DOUBLE_EQ(c.ppg.entropy_weight, 0.01);
  EXPECT_DOUBLE_EQ(c.lambda_init, 16.0);
  EXPECT_DOUBLE_EQ(c.ppg.clip_eps, 0.2);
  EXPECT_DOUBLE_EQ(c.ppg.dual_clip, 3.0);
  EXPECT_EQ(c.ppg.n_policy, 80);
  EXPECT_EQ(c.ppg.n_aux, 6);
  EXPECT_EQ(c.ppg.n_lambda, 5);
  EXPECT_EQ(c.ppg.n_update, 4);
  EXPECT_DOUBLE_EQ(c.ppg.gamma, 0.0);
}

TEST(Config, DefaultChannelCoefficients) {
  const SystemConfig c = default_config();
  ASSERT_EQ(c.channels.size(), 3u);
  EXPECT_EQ(c.channels[0].technology, Technology::FourG);
  EXPECT_DOUBLE_EQ(c.channels[0].tx_power_j_per_bit, 57.99e-9);
  EXPECT_DOUBLE_EQ(c.channels[1].tx_power_j_per_bit, 5.27e-9);
  EXPECT_DOUBLE_EQ(c.channels[2].tx_power_j_per_bit, 6.15e-9);
  for (const auto& ch : c.channels) EXPECT_EQ(ch.rx_power_j_per_bit, ch.tx_power_j_per_bit);
}

TEST(Config, ZeroUsersRejected) {
  try {
    parse_config(R"({"num_users": 0})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("num_users must be ≥ 1"), std::string::npos);
  }
}

TEST(Config, NegativePowerNamesField) {
  try {
    parse_config(R"({"channels": [{"tx_power_mw_per_mbps": -1}, {}, {}]})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("channels[0].tx_power_coeff"), std::string::npos)
        << e.what();
  }
}

TEST(Config, ParseErrorReported) {
  EXPECT_THROW(parse_config("{not json"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, ValidateDefaultIsEmpty) { EXPECT_TRUE(validate(default_config()).empty()); }

TEST(Config, HistoryWindowFiveReportsDimension) {
  SystemConfig c = default_config();
  c.history_window = 5;
  const auto v = validate(c);
  bool found = false;
  for (const auto& x : v)
    if (x.rule == "observation dim 18 ≠ 15; set observation_dim accordingly or H=4") found = true;
  EXPECT_TRUE(found);
  c.observation_dim = 18;
  EXPECT_TRUE(validate(c).empty());
}

TEST(Config, ChannelCountMismatch) {
  SystemConfig c = default_config();
  c.channels.pop_back();
  EXPECT_TRUE(has_field(validate(c), "channels"));
}

TEST(Config, ComputeOrdering) {
  SystemConfig c = default_config();
  c.compute.user_speed_bps = 3e9;
  EXPECT_TRUE(has_field(validate(c), "compute.user_speed_bps"));
  c = default_config();
  c.compute.cpu_capacitance = 0;
  EXPECT_TRUE(has_field(validate(c), "compute.cpu_capacitance"));
}

TEST(Config, MonotoneLayerTables) {
  SystemConfig c = default_config();
  c.task_gen.layer_psnr_db[3] = 10;
  EXPECT_TRUE(has_field(validate(c), "task_gen.layer_psnr_db"));
  c = default_config();
  c.task_gen.layer_size_mean_bits[6] = 1;
  EXPECT_TRUE(has_field(validate(c), "task_gen.layer_size_mean_bits"));
}

TEST(Config, RoundTrip) {
  SystemConfig c = default_config();
  c.num_users = 7;
  c.seed = 99;
  c.channels[1].uplink.synthetic->correlation = 0.5;
  c.task_gen.size_scale = 1.5;
  c.ppg.lr = 1e-3;
  c.bandit.mu = 0.25;
  const SystemConfig back = parse_config(serialize(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(parse_config(serialize(back)), back);
}

TEST(Config, MicroRoundTrip) {
  const SystemConfig c = fixtures::micro_config();
  EXPECT_EQ(parse_config(serialize(c)), c);
}

TEST(Config, HashChangesWithContent) {
  SystemConfig a = default_config(), b = default_config();
  b.lambda_init = 15;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnitConversionFromMilliwattsPerMegabit) {
  const SystemConfig c =
      parse_config(R"({"channels": [{"technology": "5g", "tx_power_mw_per_mbps": 5.27}],
                       "num_channels": 1})");
  EXPECT_DOUBLE_EQ(c.channels[0].tx_power_j_per_bit, 5.27e-9);
  EXPECT_DOUBLE_EQ(c.channels[0].rx_power_j_per_bit, 5.27e-9);
}

TEST(Config, ShippedExamplesLoadAndValidate) {
  for (const char* name : {"default", "micro", "equal-rates"}) {
    const auto path = std::filesystem::path(MECSIM_SOURCE_DIR) / "configs" / (std::string(name) + ".json");
    const auto cfg = load_config(path.string());
    EXPECT_TRUE(validate(cfg).empty()) << name;
  }
  EXPECT_EQ(load_config(std::string(MECSIM_SOURCE_DIR) + "/configs/default.json"), default_config());
}
