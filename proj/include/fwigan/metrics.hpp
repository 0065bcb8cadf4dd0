#pragma once

#include <optional>
#include <span>

#include "fwigan/geometry.hpp"
#include "fwigan/propagator.hpp"

namespace fwigan {

struct MetricReport {
  double ssim = 0.0;
  double error = 0.0;
  std::optional<double> snr_db;
};

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5) over all fully
/// contained windows, c1 = 1e-4, c2 = 9e-4. Both images are rescaled to [0, 1]
/// with the min/max of `reference` (scale 1 when it is constant). Grids smaller
/// than the window use the largest odd window that fits.
double ssim(std::span<const double> candidate, std::span<const double> reference, std::size_t nz, std::size_t nx);
double ssim(const VelocityModel& candidate, const VelocityModel& truth);

/// |truth - candidate| / |truth|.
double rel_error(std::span<const double> candidate, std::span<const double> truth);
double rel_error(const VelocityModel& candidate, const VelocityModel& truth);

/// 20 log10(|reference| / |noisy - reference|); +infinity when they are equal.
double snr_db(const ShotGathers& reference, const ShotGathers& noisy);

MetricReport evaluate(const VelocityModel& candidate, const VelocityModel& truth);

}  // namespace fwigan
