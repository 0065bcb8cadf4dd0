#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fwigan/geometry.hpp"
#include "fwigan/source.hpp"

namespace fwigan {

/// Stability limit on v_max*dt/dx for the 4th-order-space / 2nd-order-time
/// scheme in 2D (2/sqrt(32/3) ~ 0.612, with a 1% margin).
inline constexpr double kCourantLimit = 0.606;

struct CflCheck {
  bool ok = false;
  double ratio = 0.0;  // v_max*dt/dx
};

/// All arguments in SI units (m/s, m, s).
CflCheck check_cfl(double v_max, double dx_m, double dt);

/// Absorbing sponge around the model. The model is padded by `width` cells on
/// every side (edge-replicated velocities) and the leapfrog update is damped by
/// sigma(d) = sigma_max*(d/width)^2, d = 1..width cells into the sponge.
struct SpongeProfile {
  std::size_t width = 0;
  double sigma_max = 0.0;          // 1/s
  std::vector<double> damping;     // damping[d-1] = sigma(d)

  /// sigma_max = 3*v_max*ln(1000)/(2*width*dx). width 0 gives reflecting edges.
  static SpongeProfile make(std::size_t width, double v_max, double dx_m);
  /// Explicit maximum, mainly for tests.
  static SpongeProfile with_sigma_max(std::size_t width, double sigma_max);

  /// Damping of a cell `d` cells into the layer (0 = interior).
  [[nodiscard]] double at_depth(std::size_t d) const { return d == 0 ? 0.0 : damping[d - 1]; }
};

inline constexpr std::size_t kDefaultSpongeWidth = 20;

/// Recorded seismograms, [shot][time][receiver].
struct ShotGathers {
  std::size_t n_shots = 0;
  std::size_t nt = 0;
  std::size_t n_receivers = 0;
  double dt = 0.0;
  std::vector<double> data;

  ShotGathers() = default;
  ShotGathers(std::size_t n_shots, std::size_t nt, std::size_t n_receivers, double dt);

  [[nodiscard]] std::size_t shot_size() const { return nt * n_receivers; }
  [[nodiscard]] std::size_t index(std::size_t s, std::size_t t, std::size_t g) const {
    return (s * nt + t) * n_receivers + g;
  }
  [[nodiscard]] double at(std::size_t s, std::size_t t, std::size_t g) const { return data[index(s, t, g)]; }
  [[nodiscard]] std::span<double> shot(std::size_t s) { return {data.data() + s * shot_size(), shot_size()}; }
  [[nodiscard]] std::span<const double> shot(std::size_t s) const {
    return {data.data() + s * shot_size(), shot_size()};
  }
  [[nodiscard]] bool same_shape(const ShotGathers& o) const {
    return n_shots == o.n_shots && nt == o.nt && n_receivers == o.n_receivers;
  }
  /// Gathers made of the listed shots, in order.
  [[nodiscard]] ShotGathers select(std::span<const std::size_t> shots) const;
};

/// Full padded wavefield history of one shot, [time][padded z][padded x].
/// The first two time slices are zero.
struct Wavefields {
  std::size_t nt = 0;
  std::size_t nz = 0;
  std::size_t nx = 0;
  std::vector<double> snapshots;

  [[nodiscard]] std::span<const double> slice(std::size_t t) const {
    return {snapshots.data() + t * nz * nx, nz * nx};
  }
};

struct ForwardResult {
  ShotGathers gathers;
  std::vector<Wavefields> wavefields;  // one per shot when requested
};

struct ModelGradient {
  std::vector<double> velocity;  // nz*nx, same layout as the model
  std::vector<double> wavelet;   // d<adjoint, data>/d samples, summed over shots
  double frequency = 0.0;        // chained through ricker_df
};

/// Constant-density acoustic modeling:
///   u[t+1] = (2 - s dt) u[t] - (1 - s dt) u[t-1] + (v dt)^2 (L u[t] + w[t]/dx^2 at the source)
/// with L the 4th-order 5-point-per-axis Laplacian, zero fields outside the
/// padded grid and quiescent u[0] = u[1] = 0. Receivers record u[t] for every t.
/// Throws InvalidInput on CFL violation or inconsistent inputs and
/// NumericalFailure if amplitudes stop being finite.
ForwardResult forward(const VelocityModel& model, const Wavelet& wavelet, const AcquisitionGeometry& geometry,
                      const SpongeProfile& sponge, bool keep_wavefields = false, unsigned threads = 1);

/// Gradient of <adjoint_source, forward(model, ...)> with respect to the
/// velocity cells and the source (samples, and peak frequency via ricker_df),
/// computed by the discrete adjoint-state method. `cached` may hold the
/// wavefields of a previous forward call with identical inputs.
ModelGradient vjp(const VelocityModel& model, const Wavelet& wavelet, const AcquisitionGeometry& geometry,
                  const SpongeProfile& sponge, const ShotGathers& adjoint_source,
                  const std::vector<Wavefields>* cached = nullptr, unsigned threads = 1);

}  // namespace fwigan
