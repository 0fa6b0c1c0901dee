#pragma once

// Throughput traces (zero-order hold, cyclic) and task sampling.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mecsim/config.hpp"
#include "mecsim/util.hpp"

namespace mecsim {

class TraceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rate samples held constant until the next timestamp; the last sample holds
// for one trailing interval. Times are relative to the first sample. Queries
// past the end wrap modulo the duration.
class ThroughputTrace {
 public:
  ThroughputTrace() = default;

  ThroughputTrace(std::string id, Direction direction, std::vector<double> times_s,
                  std::vector<double> rates_bps, double duration_s)
      : id_(std::move(id)),
        direction_(direction),
        times_(std::move(times_s)),
        rates_(std::move(rates_bps)),
        duration_(duration_s) {
    if (times_.empty() || times_.size() != rates_.size())
      throw TraceError("trace " + id_ + ": empty or mismatched samples");
    const double t0 = times_.front();
    for (double& t : times_) t -= t0;
    for (std::size_t i = 1; i < times_.size(); ++i) {
      if (!(times_[i] > times_[i - 1]))
        throw TraceError("trace " + id_ + ": non-monotone timestamp at sample " +
                         std::to_string(i + 1));
    }
    for (double r : rates_) {
      if (!(r >= 0) || !std::isfinite(r))
        throw TraceError("trace " + id_ + ": negative or non-finite rate");
    }
    if (!(duration_ > times_.back()))
      throw TraceError("trace " + id_ + ": duration must exceed the last timestamp");
    prefix_.resize(times_.size() + 1);
    prefix_[0] = 0.0;
    for (std::size_t i = 0; i < times_.size(); ++i) {
      prefix_[i + 1] = prefix_[i] + rates_[i] * (segment_end(i) - times_[i]);
    }
  }

  // Uniform spacing: sample i covers [i*period, (i+1)*period).
  static ThroughputTrace uniform(std::string id, Direction dir, double period_s,
                                 std::vector<double> rates_bps) {
    std::vector<double> t(rates_bps.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i) * period_s;
    const double dur = static_cast<double>(rates_bps.size()) * period_s;
    return ThroughputTrace(std::move(id), dir, std::move(t), std::move(rates_bps), dur);
  }

  static ThroughputTrace constant(std::string id, Direction dir, double rate_bps,
                                  double duration_s = 1.0) {
    return ThroughputTrace(std::move(id), dir, {0.0}, {rate_bps}, duration_s);
  }

  const std::string& id() const { return id_; }
  Direction direction() const { return direction_; }
  double duration() const { return duration_; }
  std::size_t size() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<double>& rates() const { return rates_; }
  double bits_per_period() const { return prefix_.back(); }

  double mean_rate() const { return bits_per_period() / duration_; }

  // Integral of the rate over [0, t), t >= 0.
  double cumulative_bits(double t) const {
    if (t <= 0) return 0.0;
    const double periods = std::floor(t / duration_);
    double y = t - periods * duration_;
    if (y < 0) y = 0;
    if (y >= duration_) y = std::nextafter(duration_, 0.0);
    return periods * bits_per_period() + within_period(y);
  }

  // Bits delivered over [t_start, t_end).
  double bits_between(double t_start, double t_end) const {
    return cumulative_bits(t_end) - cumulative_bits(t_start);
  }

  // Time-average rate over [t_start, t_end).
  double avg_rate(double t_start, double t_end) const {
    if (!(t_end > t_start)) throw TraceError("avg_rate: zero-length interval");
    if (t_start < 0) throw TraceError("avg_rate: negative start time");
    return bits_between(t_start, t_end) / (t_end - t_start);
  }

  // Smallest t_end with bits_between(t_start, t_end) == payload.
  double solve_tx_end(double t_start, double payload_bits) const {
    if (payload_bits < 0) throw TraceError("solve_tx_end: negative payload");
    if (payload_bits == 0) return t_start;
    if (!(bits_per_period() > 0))
      throw TraceError("solve_tx_end: trace " + id_ + " carries no data");
    // Work relative to the start period to keep magnitudes small.
    const double k0 = std::floor(t_start / duration_);
    const double y0 = t_start - k0 * duration_;
    const double target = within_period(y0) + payload_bits;
    double k = std::floor(target / bits_per_period());
    double rem = target - k * bits_per_period();
    if (rem <= 0 && k > 0) {
      // Lands exactly on a period boundary; the earliest time may sit before
      // trailing zero-rate samples of the previous period.
      k -= 1;
      rem = bits_per_period();
    }
    const double t = (k0 + k) * duration_ + invert_within_period(rem);
    return std::max(t, t_start);
  }

 private:
  double segment_end(std::size_t i) const {
    return i + 1 < times_.size() ? times_[i + 1] : duration_;
  }

  // Integral over [0, y) for y in [0, duration).
  double within_period(double y) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), y);
    const std::size_t i = static_cast<std::size_t>(it - times_.begin()) - 1;
    return prefix_[i] + rates_[i] * (y - times_[i]);
  }

  // Smallest y in [0, duration] with within_period(y) == bits, 0 < bits <= total.
  double invert_within_period(double bits) const {
    // first prefix index with prefix >= bits
    auto it = std::lower_bound(prefix_.begin() + 1, prefix_.end(), bits);
    if (it == prefix_.end()) --it;
    const std::size_t seg = static_cast<std::size_t>(it - prefix_.begin()) - 1;
    const double need = bits - prefix_[seg];
    if (need <= 0) return times_[seg];
    return std::min(times_[seg] + need / rates_[seg], segment_end(seg));
  }

  std::string id_;
  Direction direction_ = Direction::Uplink;
  std::vector<double> times_;
  std::vector<double> rates_;
  std::vector<double> prefix_;
  double duration_ = 0.0;
};

// CSV `t_seconds,rate_mbps`, header optional.
inline ThroughputTrace parse_trace(std::istream& in, const std::string& id,
                                   Direction dir) {
  std::vector<double> t, r;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw TraceError(id + ": format error at line " + std::to_string(lineno) +
                       ": expected `t_seconds,rate_mbps`");
    }
    double ts = 0, rm = 0;
    try {
      std::size_t p1 = 0, p2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      ts = std::stod(a, &p1);
      rm = std::stod(b, &p2);
      if (a.find_first_not_of(" \t", p1) != std::string::npos ||
          b.find_first_not_of(" \t", p2) != std::string::npos)
        throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      if (lineno == 1 && t.empty()) continue;  // header
      throw TraceError(id + ": format error at line " + std::to_string(lineno));
    }
    if (!t.empty() && !(ts > t.back())) {
      throw TraceError("non-monotone timestamp at line " + std::to_string(lineno));
    }
    if (!(rm >= 0) || !std::isfinite(rm)) {
      throw TraceError("negative rate at line " + std::to_string(lineno));
    }
    t.push_back(ts);
    r.push_back(rm * 1e6);
  }
  if (t.empty()) throw TraceError(id + ": empty trace");
  double tail = 1.0;
  if (t.size() >= 2) tail = t[t.size() - 1] - t[t.size() - 2];
  const double duration = (t.back() - t.front()) + tail;
  return ThroughputTrace(id, dir, std::move(t), std::move(r), duration);
}

inline ThroughputTrace load_trace(const std::filesystem::path& path, Direction dir) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file " + path.string());
  return parse_trace(in, path.filename().string(), dir);
}

inline void write_trace(std::ostream& out, const ThroughputTrace& trace) {
  out << "t_seconds,rate_mbps\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out << fmt_double(trace.times()[i]) << ',' << fmt_double(trace.rates()[i] / 1e6)
        << '\n';
  }
}

inline void write_trace(const std::filesystem::path& path, const ThroughputTrace& trace) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write trace file " + path.string());
  write_trace(out, trace);
}

// Lognormal parameters (mu, sigma) of the log with the given mean and std.
inline std::pair<double, double> lognormal_params(double mean, double stddev) {
  const double s2 = std::log1p((stddev * stddev) / (mean * mean));
  return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
}

inline ThroughputTrace synthesize_trace(const SyntheticTraceSpec& spec, double duration_s,
                                        Rng& rng, std::string id = "synthetic",
                                        Direction dir = Direction::Uplink) {
  if (!(duration_s > 0)) throw TraceError("synthesize_trace: duration must be > 0");
  const auto n = static_cast<std::size_t>(
      std::max(1.0, std::round(duration_s / spec.sample_period_s)));
  std::vector<double> rates(n, spec.mean_bps);
  if (spec.std_bps > 0) {
    const auto [mu, sigma] = lognormal_params(spec.mean_bps, spec.std_bps);
    std::normal_distribution<double> z(0.0, 1.0);
    const double rho = spec.model == TraceModel::GaussMarkov ? spec.correlation : 0.0;
    const double innov = std::sqrt(1.0 - rho * rho);
    double x = z(rng);
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) x = rho * x + innov * z(rng);
      rates[i] = std::exp(mu + sigma * x);
    }
  }
  return ThroughputTrace::uniform(std::move(id), dir, spec.sample_period_s,
                                  std::move(rates));
}

// Uplink and downlink traces for every channel.
struct TraceSet {
  std::vector<ThroughputTrace> uplink;
  std::vector<ThroughputTrace> downlink;
};

inline ThroughputTrace materialize(const TraceSource& src, const std::string& id,
                                   Direction dir, std::uint64_t seed,
                                   std::uint64_t stream) {
  if (!src.file.empty()) return load_trace(src.file, dir);
  if (!src.synthetic) throw TraceError(id + ": no trace source");
  Rng rng = make_rng(seed, stream);
  return synthesize_trace(*src.synthetic, src.synthetic->duration_s, rng, id, dir);
}

// Synthetic traces are drawn from streams derived from config.seed only, so
// every environment built from one config sees the same "dataset".
inline std::shared_ptr<const TraceSet> build_traces(const SystemConfig& cfg) {
  auto set = std::make_shared<TraceSet>();
  for (std::size_t c = 0; c < cfg.channels.size(); ++c) {
    const auto& ch = cfg.channels[c];
    const std::string base = std::string(to_string(ch.technology)) + "-ch" +
                             std::to_string(ch.id);
    set->uplink.push_back(materialize(ch.uplink, base + "-up", Direction::Uplink,
                                      cfg.seed, 1000 + 2 * c));
    set->downlink.push_back(materialize(ch.downlink, base + "-down",
                                        Direction::Downlink, cfg.seed, 1001 + 2 * c));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Tasks

inline Task sample_task(const TaskGenConfig& gen, Rng& rng) {
  std::discrete_distribution<int> layer_dist(gen.layer_weights.begin(),
                                             gen.layer_weights.end());
  const int layer = layer_dist(rng);
  const double mean = gen.layer_size_mean_bits[layer] * gen.size_scale;
  const double sd = gen.layer_size_std_bits[layer] * gen.size_scale;
  double size = mean;
  if (sd > 0) {
    const auto [mu, sigma] = lognormal_params(mean, sd);
    size = std::exp(mu + sigma * std::normal_distribution<double>(0.0, 1.0)(rng));
  }
  double intensity = gen.intensity.mean_cpb;
  if (gen.intensity.std_cpb > 0) {
    const auto [mu, sigma] = lognormal_params(gen.intensity.mean_cpb, gen.intensity.std_cpb);
    intensity = std::exp(mu + sigma * std::normal_distribution<double>(0.0, 1.0)(rng));
  }
  Task t;
  t.size_bits = size;
  t.intensity_cpb = intensity;
  t.deadline_s = gen.deadline_s;
  t.result_size_bits = gen.result_ratio * size;
  t.quality_layer = layer + 1;
  return t;
}

}  // namespace mecsim
