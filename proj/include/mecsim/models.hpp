#pragma once

// Closed-form computation, energy and reward models.

#include <stdexcept>
#include <string>

namespace mecsim {

// Seconds to process `size_bits` of intensity `intensity_cpb` on a processor
// of speed `speed_bps`, where speed is quoted for tasks of the reference
// intensity: a reference-intensity task of S bits takes S / speed seconds.
inline double exec_time(double size_bits, double intensity_cpb, double speed_bps,
                        double reference_intensity_cpb) {
  if (!(size_bits > 0) || !(intensity_cpb > 0) || !(speed_bps > 0) ||
      !(reference_intensity_cpb > 0))
    throw std::invalid_argument("exec_time: inputs must be positive");
  return (size_bits * intensity_cpb) / (speed_bps * reference_intensity_cpb);
}

// Work of a task expressed in reference-intensity bits.
inline double reference_work(double size_bits, double intensity_cpb,
                             double reference_intensity_cpb) {
  return size_bits * intensity_cpb / reference_intensity_cpb;
}

// Dynamic CPU energy kappa * S * I * f^2.
inline double local_energy(double size_bits, double intensity_cpb, double cpu_freq_hz,
                           double capacitance) {
  if (!(size_bits > 0) || !(intensity_cpb > 0) || !(cpu_freq_hz > 0) ||
      !(capacitance > 0))
    throw std::invalid_argument("local_energy: inputs must be positive");
  return capacitance * size_bits * intensity_cpb * cpu_freq_hz * cpu_freq_hz;
}

// Radio energy of moving `payload_bits` in `duration_s`. The power profile is
// proportional to the achieved rate, P = coeff * rate, so the result equals
// coeff * payload independent of how fast the link was.
inline double comm_energy(double payload_bits, double coeff_j_per_bit, double duration_s) {
  if (payload_bits < 0 || !(coeff_j_per_bit > 0) || duration_s < 0)
    throw std::invalid_argument("comm_energy: invalid inputs");
  if (payload_bits == 0) return 0.0;
  if (!(duration_s > 0)) throw std::invalid_argument("comm_energy: zero duration");
  const double avg_rate_bps = payload_bits / duration_s;
  const double power_w = coeff_j_per_bit * avg_rate_bps;
  return duration_s * power_w;
}

// Computational energy-efficiency S / (T_r * E), in (bits/s)/J.
inline double efficiency(double size_bits, double response_s, double energy_j) {
  if (!(response_s > 0) || !(energy_j > 0))
    throw std::invalid_argument("efficiency: response time and energy must be positive");
  return size_bits / (response_s * energy_j);
}

// Lagrangian per-task reward: scaled efficiency plus lambda times deadline slack.
inline double reward(double size_bits, double response_s, double energy_j,
                     double deadline_s, double lambda, double efficiency_scale = 1.0) {
  return efficiency(size_bits, response_s, energy_j) / efficiency_scale +
         lambda * (deadline_s - response_s);
}

}  // namespace mecsim
