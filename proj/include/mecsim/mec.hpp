#pragma once

// Egalitarian processor sharing of the MEC server, by discrete-event sweep.

#include <algorithm>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace mecsim {

struct MecJob {
  double arrival_s = 0.0;
  double work_bits = 0.0;  // reference-intensity bits
};

// State right after an event: `active` jobs each served at `share_bps`.
struct MecEvent {
  double time_s = 0.0;
  int active = 0;
  double share_bps = 0.0;
};

struct MecSchedule {
  std::vector<double> completion_s;
  std::vector<double> mean_share_bps;  // work / (completion - arrival)
  std::vector<MecEvent> events;
};

inline MecSchedule share_processor(std::span<const MecJob> jobs, double capacity_bps) {
  if (!(capacity_bps > 0)) throw std::invalid_argument("share_processor: capacity must be > 0");
  const std::size_t n = jobs.size();
  MecSchedule out;
  out.completion_s.assign(n, 0.0);
  out.mean_share_bps.assign(n, 0.0);
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return jobs[a].arrival_s < jobs[b].arrival_s;
  });

  std::vector<double> remaining(n, 0.0);
  std::vector<std::size_t> active;
  std::size_t next = 0;
  double now = jobs[order[0]].arrival_s;

  auto finish = [&](std::size_t j) {
    out.completion_s[j] = now;
    const double span = now - jobs[j].arrival_s;
    out.mean_share_bps[j] = span > 0 ? jobs[j].work_bits / span : capacity_bps;
  };
  auto record = [&] {
    const int a = static_cast<int>(active.size());
    out.events.push_back({now, a, a > 0 ? capacity_bps / a : 0.0});
  };

  while (next < n || !active.empty()) {
    // admit every job arriving at `now`
    bool changed = false;
    while (next < n && jobs[order[next]].arrival_s <= now) {
      const std::size_t j = order[next++];
      if (jobs[j].work_bits <= 0) {
        finish(j);
      } else {
        remaining[j] = jobs[j].work_bits;
        active.push_back(j);
      }
      changed = true;
    }
    if (changed) record();
    if (active.empty()) {
      if (next < n) now = jobs[order[next]].arrival_s;
      continue;
    }
    const double share = capacity_bps / static_cast<double>(active.size());
    double min_rem = std::numeric_limits<double>::infinity();
    for (std::size_t j : active) min_rem = std::min(min_rem, remaining[j]);
    const double t_done = now + min_rem / share;
    const double t_arrive =
        next < n ? jobs[order[next]].arrival_s : std::numeric_limits<double>::infinity();

    if (t_done <= t_arrive) {
      // Departure: jobs within rounding of the minimum leave together.
      const double served = min_rem;
      const double tol = 1e-12 * std::max(1.0, served);
      now = t_done;
      std::vector<std::size_t> keep;
      keep.reserve(active.size());
      for (std::size_t j : active) {
        remaining[j] -= served;
        if (remaining[j] <= tol) {
          remaining[j] = 0;
          finish(j);
        } else {
          keep.push_back(j);
        }
      }
      active.swap(keep);
      record();
    } else {
      const double served = share * (t_arrive - now);
      for (std::size_t j : active) remaining[j] -= served;
      now = t_arrive;
    }
  }
  return out;
}

}  // namespace mecsim
