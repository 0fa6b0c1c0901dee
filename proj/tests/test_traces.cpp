#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "common.hpp"
#include "oracles.hpp"
#include "mecsim/traces.hpp"

using namespace mecsim;
using mecsim::fixtures::oracle_bits;
using mecsim::fixtures::rel_err;

namespace {

ThroughputTrace parse(const std::string& text) {
  std::istringstream in(text);
  return parse_trace(in, "t", Direction::Uplink);
}

}  // namespace

TEST(Traces, ParseConvertsMegabits) {
  const auto tr = parse("0,100\n1,200");
  ASSERT_EQ(tr.size(), 2u);
  EXPECT_EQ(tr.times()[0], 0.0);
  EXPECT_EQ(tr.times()[1], 1.0);
  EXPECT_EQ(tr.rates()[0], 1e8);
  EXPECT_EQ(tr.rates()[1], 2e8);
}

TEST(Traces, ParseOptionalHeader) {
  const auto tr = parse("t_seconds,rate_mbps\n0,100\n1,200\n");
  EXPECT_EQ(tr.size(), 2u);
}

TEST(Traces, NonMonotoneTimestampNamesLine) {
  try {
    parse("1,5\n0,5");
    FAIL();
  } catch (const TraceError& e) {
    EXPECT_NE(std::string(e.what()).find("non-monotone timestamp at line 2"), std::string::npos)
        << e.what();
  }
}

TEST(Traces, RejectsNegativeRateAndEmpty) {
  EXPECT_THROW(parse("0,5\n1,-1"), TraceError);
  EXPECT_THROW(parse(""), TraceError);
  EXPECT_THROW(parse("0,abc"), TraceError);
}

TEST(Traces, DurationIsCountTimesPeriod) {
  std::ostringstream s;
  for (int i = 0; i < 1000; ++i) s << i * 0.1 << ',' << 50 << '\n';
  const auto tr = parse(s.str());
  EXPECT_LT(rel_err(tr.times().back(), 999 * 0.1), 1e-12);
  EXPECT_LT(rel_err(tr.duration(), 1000 * 0.1), 1e-12);
}

TEST(Traces, WriteParseRoundTrip) {
  Rng rng = make_rng(3);
  const auto tr = synthesize_trace(synthetic_mbps(100, 40), 50, rng);
  std::stringstream ss;
  write_trace(ss, tr);
  const auto back = parse_trace(ss, "x", Direction::Uplink);
  EXPECT_EQ(back.times(), tr.times());
  ASSERT_EQ(back.size(), tr.size());
  for (std::size_t i = 0; i < tr.size(); ++i)
    EXPECT_LT(rel_err(back.rates()[i], tr.rates()[i]), 1e-15);
}

TEST(Traces, ConstantWhenStdZero) {
  Rng rng = make_rng(1);
  SyntheticTraceSpec s;
  s.mean_bps = 1e8;
  s.std_bps = 0;
  const auto tr = synthesize_trace(s, 100, rng);
  for (double r : tr.rates()) EXPECT_EQ(r, 1e8);
}

TEST(Traces, SynthesizedMomentsMatch) {
  for (auto model : {TraceModel::IidLognormal, TraceModel::GaussMarkov}) {
    Rng rng = make_rng(42);
    SyntheticTraceSpec s;
    s.mean_bps = 1e8;
    s.std_bps = 5e7;
    s.model = model;
    s.correlation = 0.5;
    s.sample_period_s = 1.0;
    const auto tr = synthesize_trace(s, 2e5, rng);
    const auto& r = tr.rates();
    const double n = static_cast<double>(r.size());
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
    double var = 0;
    for (double x : r) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / n);
    EXPECT_GE(mean, 0.98e8);
    EXPECT_LE(mean, 1.02e8);
    EXPECT_LT(rel_err(sd, 5e7), 0.05);
  }
}

TEST(Traces, CorrelationRaisesLagOneAutocorrelation) {
  auto lag1 = [](double rho) {
    Rng rng = make_rng(5);
    SyntheticTraceSpec s;
    s.mean_bps = 1e8;
    s.std_bps = 5e7;
    s.model = TraceModel::GaussMarkov;
    s.correlation = rho;
    s.sample_period_s = 1.0;
    const auto tr = synthesize_trace(s, 2e4, rng);
    std::vector<double> l;
    for (double x : tr.rates()) l.push_back(std::log(x));
    const double n = static_cast<double>(l.size());
    const double m = std::accumulate(l.begin(), l.end(), 0.0) / n;
    double num = 0, den = 0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      den += (l[i] - m) * (l[i] - m);
      if (i + 1 < l.size()) num += (l[i] - m) * (l[i + 1] - m);
    }
    return num / den;
  };
  const double a = lag1(0.9), b = lag1(0.0);
  EXPECT_GT(a, 0.85);
  EXPECT_LT(std::abs(b), 0.05);
  EXPECT_GT(a, b);
}

TEST(Traces, SynthesisIsReproducible) {
  Rng a = make_rng(9), b = make_rng(9);
  const auto x = synthesize_trace(synthetic_mbps(100, 50), 100, a);
  const auto y = synthesize_trace(synthetic_mbps(100, 50), 100, b);
  EXPECT_EQ(x.rates(), y.rates());
}

TEST(Traces, AvgRateConstant) {
  const auto tr = ThroughputTrace::constant("c", Direction::Uplink, 1e8, 3.0);
  EXPECT_DOUBLE_EQ(tr.avg_rate(0.3, 0.9), 1e8);
  EXPECT_DOUBLE_EQ(tr.avg_rate(2.5, 17.25), 1e8);
}

TEST(Traces, AvgRateStepFunction) {
  const auto tr = ThroughputTrace::uniform("s", Direction::Uplink, 1.0, {1e8, 3e8});
  EXPECT_DOUBLE_EQ(tr.avg_rate(0, 2), 2e8);
  // [1.5, 2.5): half of sample 2 then half of sample 1 after the wrap
  EXPECT_DOUBLE_EQ(tr.avg_rate(1.5, 2.5), 2e8);
  EXPECT_DOUBLE_EQ(tr.avg_rate(1.0, 1.5), 3e8);
  EXPECT_THROW(tr.avg_rate(1.0, 1.0), TraceError);
}

TEST(Traces, AvgRateShiftByPeriod) {
  Rng rng = make_rng(11);
  const auto tr = synthesize_trace(synthetic_mbps(100, 60), 20, rng);
  std::uniform_real_distribution<double> u(0, 40);
  for (int i = 0; i < 200; ++i) {
    const double a = u(rng), len = u(rng) / 4 + 1e-3;
    EXPECT_LT(rel_err(tr.avg_rate(a + tr.duration(), a + len + tr.duration()),
                      tr.avg_rate(a, a + len)),
              1e-9);
  }
}

TEST(Traces, SolveTxEndConstant) {
  const auto tr = ThroughputTrace::constant("c", Direction::Uplink, 1e8);
  EXPECT_NEAR(tr.solve_tx_end(0.25, 1e6), 0.26, 1e-12);
  EXPECT_EQ(tr.solve_tx_end(0.25, 0.0), 0.25);
}

TEST(Traces, SolveTxEndAcrossZeroSegment) {
  const auto tr = ThroughputTrace::uniform("s", Direction::Uplink, 1.0, {1e8, 0.0, 1e8});
  EXPECT_DOUBLE_EQ(tr.solve_tx_end(0.0, 1.5e8), 2.5);
}

TEST(Traces, SolveTxEndAllZeroIsUnbounded) {
  const auto tr = ThroughputTrace::uniform("z", Direction::Uplink, 1.0, {0.0, 0.0});
  EXPECT_THROW(tr.solve_tx_end(0.0, 1.0), TraceError);
}

TEST(Traces, SolveTxEndInvertsCumulativeBits) {
  Rng rng = make_rng(17);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 300; ++i) {
    const int n = 1 + static_cast<int>(u(rng) * 20);
    std::vector<double> rates(n);
    for (auto& r : rates) r = u(rng) < 0.2 ? 0.0 : u(rng) * 5e8;
    rates[0] = 1e8;
    const auto tr = ThroughputTrace::uniform("f", Direction::Uplink, 0.05 + u(rng), rates);
    const double start = u(rng) * 30, payload = u(rng) * 4e8;
    const double end = tr.solve_tx_end(start, payload);
    EXPECT_LT(rel_err(oracle_bits(tr, start, end), payload), 1e-9);
    EXPECT_LT(rel_err(tr.bits_between(start, end), payload), 1e-9);
  }
}

TEST(Traces, DegenerateTaskIsDeterministic) {
  TaskGenConfig g;
  g.layer_weights = {1, 0, 0, 0, 0, 0, 0};
  g.layer_size_std_bits[0] = 0;
  g.intensity.std_cpb = 0;
  Rng a = make_rng(1), b = make_rng(2);
  const Task x = sample_task(g, a), y = sample_task(g, b);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.quality_layer, 1);
  EXPECT_EQ(x.size_bits, g.layer_size_mean_bits[0]);
  EXPECT_EQ(x.intensity_cpb, g.intensity.mean_cpb);
  EXPECT_EQ(x.deadline_s, g.deadline_s);
  EXPECT_DOUBLE_EQ(x.result_size_bits, 0.2 * x.size_bits);
}

TEST(Traces, PerLayerSizeMoments) {
  TaskGenConfig g;
  Rng rng = make_rng(23);
  std::array<double, kNumQualityLayers> sum{}, cnt{};
  for (int i = 0; i < 100000; ++i) {
    const Task t = sample_task(g, rng);
    ASSERT_GT(t.size_bits, 0);
    ASSERT_GT(t.intensity_cpb, 0);
    sum[t.quality_layer - 1] += t.size_bits;
    cnt[t.quality_layer - 1] += 1;
  }
  for (int l = 0; l < kNumQualityLayers; ++l) {
    ASSERT_GT(cnt[l], 0);
    EXPECT_LT(rel_err(sum[l] / cnt[l], g.layer_size_mean_bits[l]), 0.02) << "layer " << l + 1;
  }
  EXPECT_GT(sum[6] / cnt[6], sum[0] / cnt[0]);
}

TEST(Traces, SizeScaleMultipliesSizes) {
  TaskGenConfig g;
  g.size_scale = 2.0;
  g.layer_weights = {1, 0, 0, 0, 0, 0, 0};
  g.layer_size_std_bits[0] = 0;
  Rng rng = make_rng(1);
  EXPECT_DOUBLE_EQ(sample_task(g, rng).size_bits, 2 * g.layer_size_mean_bits[0]);
}

TEST(Traces, SolveTxEndMatchesForwardWalk) {
  Rng rng = make_rng(23);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    const int n = 1 + static_cast<int>(u(rng) * 25);
    std::vector<double> rates(n);
    for (auto& r : rates) r = u(rng) < 0.25 ? 0.0 : u(rng) * 1e9;
    rates[static_cast<std::size_t>(u(rng) * n)] = 1e7 + u(rng) * 1e8;
    const auto tr = ThroughputTrace::uniform("w", Direction::Downlink, 0.02 + u(rng), rates);
    const double start = u(rng) * 50, payload = u(rng) * 6e8;
    EXPECT_LT(rel_err(tr.solve_tx_end(start, payload), fixtures::oracle_tx_end(tr, start, payload)),
              1e-9);
  }
}
