#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace fwigan {

/// Sampled source time function. `samples[k]` is the value at t = k*dt.
struct Wavelet {
  std::size_t nt = 0;
  double dt = 0.0;
  double t0 = 0.0;      // delay of the peak, s
  double f_peak = 0.0;  // Hz
  std::vector<double> samples;
};

/// Ricker value w(f, tau) = (1 - 2 pi^2 f^2 tau^2) exp(-pi^2 f^2 tau^2).
double ricker_value(double f, double tau);

/// d/df of ricker_value at fixed tau.
double ricker_dfreq_value(double f, double tau);

/// Default delay: 1/f snapped to the nearest sample, so the peak sample is exactly 1.
double default_delay(double f, double dt);

/// Sampled Ricker wavelet. `t0` defaults to default_delay(f, dt).
/// Throws InvalidInput for f <= 0, t0 < 0, nt == 0, dt <= 0 or f*dt >= 0.5.
Wavelet ricker(double f, std::size_t nt, double dt, std::optional<double> t0 = std::nullopt);

/// Samples of dw/df at fixed delay; same contract as ricker.
Wavelet ricker_df(double f, std::size_t nt, double dt, std::optional<double> t0 = std::nullopt);

}  // namespace fwigan
