#include "fwigan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fwigan/errors.hpp"

namespace fwigan {

namespace {

constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size);
  const double center = static_cast<double>(size - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - center;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += w[i];
  }
  for (auto& v : w) v /= total;
  return w;
}

void require_same_grid(const VelocityModel& a, const VelocityModel& b) {
  if (!(a.grid() == b.grid())) throw InvalidInput("models are on different grids");
}

}  // namespace

double ssim(std::span<const double> candidate, std::span<const double> reference, std::size_t nz, std::size_t nx) {
  if (candidate.size() != nz * nx || reference.size() != nz * nx || nz == 0 || nx == 0) {
    throw InvalidInput("ssim: image sizes do not match " + std::to_string(nz) + "x" + std::to_string(nx));
  }
  const auto [lo, hi] = std::ranges::minmax(reference);
  const double range = hi - lo;
  const double inv = range > 0.0 ? 1.0 / range : 1.0;
  std::vector<double> a(candidate.size()), b(reference.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = (candidate[i] - lo) * inv;
    b[i] = (reference[i] - lo) * inv;
  }

  std::size_t size = std::min<std::size_t>({11, nz, nx});
  if (size % 2 == 0) --size;
  const auto w1 = gaussian_window(size, 1.5);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i0 = 0; i0 + size <= nz; ++i0) {
    for (std::size_t j0 = 0; j0 + size <= nx; ++j0) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
          const double w = w1[i] * w1[j];
          const std::size_t k = (i0 + i) * nx + j0 + j;
          ma += w * a[k];
          mb += w * b[k];
          saa += w * a[k] * a[k];
          sbb += w * b[k] * b[k];
          sab += w * a[k] * b[k];
        }
      }
      const double va = saa - ma * ma;
      const double vb = sbb - mb * mb;
      const double cov = sab - ma * mb;
      total += (2 * ma * mb + kC1) * (2 * cov + kC2) / ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

double ssim(const VelocityModel& candidate, const VelocityModel& truth) {
  require_same_grid(candidate, truth);
  return ssim(candidate.values(), truth.values(), truth.grid().nz, truth.grid().nx);
}

double rel_error(std::span<const double> candidate, std::span<const double> truth) {
  if (candidate.size() != truth.size()) throw InvalidInput("rel_error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - candidate[i];
    num += d * d;
    den += truth[i] * truth[i];
  }
  if (den == 0.0) throw InvalidInput("rel_error: reference has zero norm");
  return std::sqrt(num / den);
}

double rel_error(const VelocityModel& candidate, const VelocityModel& truth) {
  require_same_grid(candidate, truth);
  return rel_error(candidate.values(), truth.values());
}

double snr_db(const ShotGathers& reference, const ShotGathers& noisy) {
  if (!reference.same_shape(noisy)) throw InvalidInput("snr_db: gather shapes differ");
  double signal = 0.0, noise = 0.0;
  for (std::size_t i = 0; i < reference.data.size(); ++i) {
    const double n = noisy.data[i] - reference.data[i];
    signal += reference.data[i] * reference.data[i];
    noise += n * n;
  }
  if (noise == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

MetricReport evaluate(const VelocityModel& candidate, const VelocityModel& truth) {
  return {ssim(candidate, truth), rel_error(candidate, truth), std::nullopt};
}

}  // namespace fwigan
