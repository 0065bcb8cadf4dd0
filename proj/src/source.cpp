#include "fwigan/source.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fwigan/errors.hpp"

namespace fwigan {

namespace {

void check_args(double f, std::size_t nt, double dt, double t0) {
  if (!(f > 0.0) || !std::isfinite(f)) throw InvalidInput("peak frequency must be positive");
  if (nt == 0) throw InvalidInput("wavelet needs at least one sample");
  if (!(dt > 0.0)) throw InvalidInput("sample interval must be positive");
  if (!(t0 >= 0.0)) throw InvalidInput("wavelet delay must be non-negative");
  if (f * dt >= 0.5) {
    throw InvalidInput("peak frequency " + std::to_string(f) + " Hz is above Nyquist for dt=" + std::to_string(dt));
  }
}

template <class Fn>
Wavelet sample(double f, std::size_t nt, double dt, std::optional<double> t0, Fn fn) {
  const double delay = t0.value_or(default_delay(f, dt));
  check_args(f, nt, dt, delay);
  Wavelet w{nt, dt, delay, f, std::vector<double>(nt)};
  for (std::size_t k = 0; k < nt; ++k) {
    w.samples[k] = fn(f, static_cast<double>(k) * dt - delay);
  }
  return w;
}

}  // namespace

double ricker_value(double f, double tau) {
  const double a = std::numbers::pi * std::numbers::pi * f * f * tau * tau;
  return (1.0 - 2.0 * a) * std::exp(-a);
}

double ricker_dfreq_value(double f, double tau) {
  // With a = pi^2 tau^2 f^2: dw/df = -2 (a/f) e^{-a} (3 - 2a).
  const double p2t2 = std::numbers::pi * std::numbers::pi * tau * tau;
  const double a = p2t2 * f * f;
  return -2.0 * p2t2 * f * std::exp(-a) * (3.0 - 2.0 * a);
}

double default_delay(double f, double dt) {
  if (!(f > 0.0) || !(dt > 0.0)) throw InvalidInput("frequency and dt must be positive");
  return std::round(1.0 / (f * dt)) * dt;
}

Wavelet ricker(double f, std::size_t nt, double dt, std::optional<double> t0) {
  return sample(f, nt, dt, t0, ricker_value);
}

Wavelet ricker_df(double f, std::size_t nt, double dt, std::optional<double> t0) {
  return sample(f, nt, dt, t0, ricker_dfreq_value);
}

}  // namespace fwigan
