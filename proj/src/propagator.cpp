#include "fwigan/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fwigan/errors.hpp"
#include "fwigan/parallel.hpp"

namespace fwigan {

namespace {

// 4th-order second-derivative weights; the centre weight appears once per axis.
constexpr double kW0 = -5.0 / 2.0;
constexpr double kW1 = 4.0 / 3.0;
constexpr double kW2 = -1.0 / 12.0;
constexpr std::size_t kHalo = 2;

inline double laplacian(const double* u, std::size_t k, std::size_t s) {
  return 2.0 * kW0 * u[k] + kW1 * (u[k - 1] + u[k + 1] + u[k - s] + u[k + s]) +
         kW2 * (u[k - 2] + u[k + 2] + u[k - 2 * s] + u[k + 2 * s]);
}

// Padded medium and per-cell update coefficients. Fields carry a zero halo
// of two cells so the stencil needs no bounds checks.
struct Medium {
  std::size_t nz = 0, nx = 0;  // model
  std::size_t pad = 0;
  std::size_t pz = 0, px = 0;  // padded interior
  std::size_t stride = 0;      // halo row length
  std::size_t rows = 0;        // halo rows
  double dt = 0.0;
  double inv_h2 = 0.0;
  std::vector<double> vpad, a, b, c;

  Medium(const VelocityModel& model, const SpongeProfile& sponge, double dt_) : dt(dt_) {
    const Grid2D& g = model.grid();
    nz = g.nz;
    nx = g.nx;
    pad = sponge.width;
    pz = nz + 2 * pad;
    px = nx + 2 * pad;
    stride = px + 2 * kHalo;
    rows = pz + 2 * kHalo;
    const double h = g.dx_m();
    inv_h2 = 1.0 / (h * h);
    vpad.resize(pz * px);
    a.resize(pz * px);
    b.resize(pz * px);
    c.resize(pz * px);
    auto depth_into = [&](std::size_t i, std::size_t n) -> std::size_t {
      if (i < pad) return pad - i;
      if (i >= pad + n) return i - (pad + n - 1);
      return 0;
    };
    for (std::size_t i = 0; i < pz; ++i) {
      const std::size_t iz = i < pad ? 0 : std::min(i - pad, nz - 1);
      for (std::size_t j = 0; j < px; ++j) {
        const std::size_t ix = j < pad ? 0 : std::min(j - pad, nx - 1);
        const std::size_t m = i * px + j;
        const double v = model.at(iz, ix);
        const double sigma = sponge.at_depth(depth_into(i, nz)) + sponge.at_depth(depth_into(j, nx));
        vpad[m] = v;
        a[m] = 2.0 - sigma * dt;
        b[m] = 1.0 - sigma * dt;
        c[m] = v * v * dt * dt;
      }
    }
  }

  [[nodiscard]] std::size_t field_size() const { return rows * stride; }
  [[nodiscard]] std::size_t field_index(std::size_t i, std::size_t j) const {
    return (i + kHalo) * stride + j + kHalo;
  }
  [[nodiscard]] std::size_t cell_field_index(const Cell& cell) const {
    return field_index(cell.iz + pad, cell.ix + pad);
  }
  [[nodiscard]] std::size_t cell_coeff_index(const Cell& cell) const { return (cell.iz + pad) * px + cell.ix + pad; }
};

void check_inputs(const VelocityModel& model, const Wavelet& wavelet, const AcquisitionGeometry& geometry,
                  const SpongeProfile& sponge) {
  geometry.validate(model.grid());
  if (wavelet.samples.size() != wavelet.nt || wavelet.nt < 3) {
    throw InvalidInput("wavelet must have at least 3 samples matching nt");
  }
  if (sponge.damping.size() != sponge.width) throw InvalidInput("sponge profile length does not match its width");
  const auto cfl = check_cfl(model.max_value(), model.grid().dx_m(), wavelet.dt);
  if (!cfl.ok) {
    throw InvalidInput("CFL violation: Courant ratio " + std::to_string(cfl.ratio) + " exceeds " +
                       std::to_string(kCourantLimit));
  }
}

bool all_finite(const std::vector<double>& f) {
  return std::ranges::all_of(f, [](double x) { return std::isfinite(x); });
}

// One shot. Records receiver traces into `trace` ([t][g]) and optionally the
// whole padded history.
void run_shot(const Medium& md, const Wavelet& wavelet, const Cell& source, std::span<const Cell> receivers,
              std::span<double> trace, Wavefields* history) {
  const std::size_t nt = wavelet.nt;
  const std::size_t ng = receivers.size();
  const std::size_t s = md.stride;
  std::vector<double> prev(md.field_size(), 0.0), cur(md.field_size(), 0.0), next(md.field_size(), 0.0);

  std::vector<std::size_t> rec(ng);
  for (std::size_t g = 0; g < ng; ++g) rec[g] = md.cell_field_index(receivers[g]);
  const std::size_t src_k = md.cell_field_index(source);
  const double src_gain = md.c[md.cell_coeff_index(source)] * md.inv_h2;

  if (history != nullptr) {
    history->nt = nt;
    history->nz = md.pz;
    history->nx = md.px;
    history->snapshots.assign(nt * md.pz * md.px, 0.0);
  }
  std::fill(trace.begin(), trace.end(), 0.0);

  const double* a = md.a.data();
  const double* b = md.b.data();
  const double* c = md.c.data();
  const double inv_h2 = md.inv_h2;
  for (std::size_t t = 1; t + 1 < nt; ++t) {
    const double* u = cur.data();
    const double* up = prev.data();
    double* un = next.data();
    for (std::size_t i = 0; i < md.pz; ++i) {
      const std::size_t k0 = md.field_index(i, 0);
      const std::size_t m0 = i * md.px;
      for (std::size_t j = 0; j < md.px; ++j) {
        const std::size_t k = k0 + j;
        const std::size_t m = m0 + j;
        un[k] = a[m] * u[k] - b[m] * up[k] + c[m] * (laplacian(u, k, s) * inv_h2);
      }
    }
    un[src_k] += src_gain * wavelet.samples[t];

    double* row = trace.data() + (t + 1) * ng;
    for (std::size_t g = 0; g < ng; ++g) row[g] = un[rec[g]];
    if (history != nullptr) {
      double* dst = history->snapshots.data() + (t + 1) * md.pz * md.px;
      for (std::size_t i = 0; i < md.pz; ++i) {
        std::copy_n(un + md.field_index(i, 0), md.px, dst + i * md.px);
      }
    }
    if ((t % 64 == 0 || t + 2 == nt) && !all_finite(next)) {
      throw NumericalFailure("wavefield became non-finite at time step " + std::to_string(t + 1));
    }
    std::swap(prev, cur);
    std::swap(cur, next);
  }
}

// Adjoint of run_shot for one shot. Accumulates into grad_c (padded, d/d(v^2 dt^2))
// and grad_w (per wavelet sample).
void adjoint_shot(const Medium& md, const Wavelet& wavelet, const Cell& source, std::span<const Cell> receivers,
                  std::span<const double> residual, const Wavefields& history, std::vector<double>& grad_c,
                  std::vector<double>& grad_w) {
  const std::size_t nt = wavelet.nt;
  const std::size_t ng = receivers.size();
  const std::size_t s = md.stride;
  std::vector<double> a1(md.field_size(), 0.0), a2(md.field_size(), 0.0), cur(md.field_size(), 0.0);
  std::vector<double> scaled(md.field_size(), 0.0), u(md.field_size(), 0.0);

  std::vector<std::size_t> rec(ng);
  for (std::size_t g = 0; g < ng; ++g) rec[g] = md.cell_field_index(receivers[g]);
  const std::size_t src_k = md.cell_field_index(source);
  const std::size_t src_m = md.cell_coeff_index(source);

  const double* a = md.a.data();
  const double* b = md.b.data();
  const double* c = md.c.data();
  const double inv_h2 = md.inv_h2;

  // cur = lambda[t], a1 = lambda[t+1], a2 = lambda[t+2]
  for (std::size_t t = nt - 1; t >= 2; --t) {
    for (std::size_t i = 0; i < md.pz; ++i) {
      const std::size_t k0 = md.field_index(i, 0);
      const std::size_t m0 = i * md.px;
      for (std::size_t j = 0; j < md.px; ++j) scaled[k0 + j] = c[m0 + j] * a1[k0 + j];
    }
    for (std::size_t i = 0; i < md.pz; ++i) {
      const std::size_t k0 = md.field_index(i, 0);
      const std::size_t m0 = i * md.px;
      for (std::size_t j = 0; j < md.px; ++j) {
        const std::size_t k = k0 + j;
        const std::size_t m = m0 + j;
        cur[k] = a[m] * a1[k] - b[m] * a2[k] + laplacian(scaled.data(), k, s) * inv_h2;
      }
    }
    const double* y = residual.data() + t * ng;
    for (std::size_t g = 0; g < ng; ++g) cur[rec[g]] += y[g];

    // lambda[t] pairs with the update that produced u[t] from u[t-1].
    const auto snap = history.slice(t - 1);
    for (std::size_t i = 0; i < md.pz; ++i) {
      std::copy_n(snap.data() + i * md.px, md.px, u.data() + md.field_index(i, 0));
    }
    for (std::size_t i = 0; i < md.pz; ++i) {
      const std::size_t k0 = md.field_index(i, 0);
      const std::size_t m0 = i * md.px;
      for (std::size_t j = 0; j < md.px; ++j) {
        grad_c[m0 + j] += cur[k0 + j] * (laplacian(u.data(), k0 + j, s) * inv_h2);
      }
    }
    grad_c[src_m] += cur[src_k] * wavelet.samples[t - 1] * inv_h2;
    grad_w[t - 1] += cur[src_k] * c[src_m] * inv_h2;

    std::swap(a2, a1);
    std::swap(a1, cur);
  }
}

}  // namespace

CflCheck check_cfl(double v_max, double dx_m, double dt) {
  if (!(v_max > 0.0) || !(dx_m > 0.0) || !(dt > 0.0)) throw InvalidInput("CFL inputs must be positive");
  const double ratio = v_max * dt / dx_m;
  return {ratio <= kCourantLimit, ratio};
}

SpongeProfile SpongeProfile::with_sigma_max(std::size_t width, double sigma_max) {
  SpongeProfile p;
  p.width = width;
  p.sigma_max = sigma_max;
  p.damping.resize(width);
  for (std::size_t d = 1; d <= width; ++d) {
    const double r = static_cast<double>(d) / static_cast<double>(width);
    p.damping[d - 1] = sigma_max * r * r;
  }
  return p;
}

SpongeProfile SpongeProfile::make(std::size_t width, double v_max, double dx_m) {
  if (width == 0) return with_sigma_max(0, 0.0);
  const double sigma_max = 3.0 * v_max * std::log(1000.0) / (2.0 * static_cast<double>(width) * dx_m);
  return with_sigma_max(width, sigma_max);
}

ShotGathers::ShotGathers(std::size_t n_shots_, std::size_t nt_, std::size_t n_receivers_, double dt_)
    : n_shots(n_shots_), nt(nt_), n_receivers(n_receivers_), dt(dt_), data(n_shots_ * nt_ * n_receivers_, 0.0) {}

ShotGathers ShotGathers::select(std::span<const std::size_t> shots) const {
  ShotGathers out(shots.size(), nt, n_receivers, dt);
  for (std::size_t i = 0; i < shots.size(); ++i) {
    if (shots[i] >= n_shots) throw InvalidInput("shot index out of range");
    std::ranges::copy(shot(shots[i]), out.shot(i).begin());
  }
  return out;
}

ForwardResult forward(const VelocityModel& model, const Wavelet& wavelet, const AcquisitionGeometry& geometry,
                      const SpongeProfile& sponge, bool keep_wavefields, unsigned threads) {
  check_inputs(model, wavelet, geometry, sponge);
  const Medium md(model, sponge, wavelet.dt);
  ForwardResult out;
  out.gathers = ShotGathers(geometry.n_shots(), wavelet.nt, geometry.n_receivers(), wavelet.dt);
  if (keep_wavefields) out.wavefields.resize(geometry.n_shots());
  parallel_for(geometry.n_shots(), threads, [&](std::size_t s) {
    run_shot(md, wavelet, geometry.sources[s], geometry.receivers, out.gathers.shot(s),
             keep_wavefields ? &out.wavefields[s] : nullptr);
  });
  return out;
}

ModelGradient vjp(const VelocityModel& model, const Wavelet& wavelet, const AcquisitionGeometry& geometry,
                  const SpongeProfile& sponge, const ShotGathers& adjoint_source, const std::vector<Wavefields>* cached,
                  unsigned threads) {
  check_inputs(model, wavelet, geometry, sponge);
  if (adjoint_source.n_shots != geometry.n_shots() || adjoint_source.nt != wavelet.nt ||
      adjoint_source.n_receivers != geometry.n_receivers()) {
    throw InvalidInput("adjoint source shape does not match the forward output");
  }
  const Medium md(model, sponge, wavelet.dt);
  if (cached != nullptr) {
    if (cached->size() != geometry.n_shots()) throw InvalidInput("cached wavefields do not match the shot count");
    for (const auto& w : *cached) {
      if (w.nt != wavelet.nt || w.nz != md.pz || w.nx != md.px) throw InvalidInput("cached wavefields have wrong shape");
    }
  }

  const std::size_t n_shots = geometry.n_shots();
  std::vector<std::vector<double>> grad_c(n_shots);
  std::vector<std::vector<double>> grad_w(n_shots);
  parallel_for(n_shots, threads, [&](std::size_t s) {
    grad_c[s].assign(md.pz * md.px, 0.0);
    grad_w[s].assign(wavelet.nt, 0.0);
    Wavefields local;
    const Wavefields* hist = nullptr;
    if (cached != nullptr) {
      hist = &(*cached)[s];
    } else {
      std::vector<double> scratch(wavelet.nt * geometry.n_receivers());
      run_shot(md, wavelet, geometry.sources[s], geometry.receivers, scratch, &local);
      hist = &local;
    }
    adjoint_shot(md, wavelet, geometry.sources[s], geometry.receivers, adjoint_source.shot(s), *hist, grad_c[s],
                 grad_w[s]);
  });

  // Reduce in shot order so the result does not depend on the thread count.
  std::vector<double> total_c(md.pz * md.px, 0.0);
  ModelGradient out;
  out.wavelet.assign(wavelet.nt, 0.0);
  for (std::size_t s = 0; s < n_shots; ++s) {
    for (std::size_t m = 0; m < total_c.size(); ++m) total_c[m] += grad_c[s][m];
    for (std::size_t t = 0; t < wavelet.nt; ++t) out.wavelet[t] += grad_w[s][t];
  }

  // c = (v dt)^2, then fold the edge replication back onto the model cells.
  out.velocity.assign(md.nz * md.nx, 0.0);
  const double dt2 = md.dt * md.dt;
  for (std::size_t i = 0; i < md.pz; ++i) {
    const std::size_t iz = i < md.pad ? 0 : std::min(i - md.pad, md.nz - 1);
    for (std::size_t j = 0; j < md.px; ++j) {
      const std::size_t ix = j < md.pad ? 0 : std::min(j - md.pad, md.nx - 1);
      const std::size_t m = i * md.px + j;
      out.velocity[iz * md.nx + ix] += total_c[m] * 2.0 * md.vpad[m] * dt2;
    }
  }

  // Only Ricker sources carry a peak frequency to differentiate.
  if (wavelet.f_peak > 0.0) {
    const Wavelet dw = ricker_df(wavelet.f_peak, wavelet.nt, wavelet.dt, wavelet.t0);
    double gf = 0.0;
    for (std::size_t t = 0; t < wavelet.nt; ++t) gf += out.wavelet[t] * dw.samples[t];
    out.frequency = gf;
  }
  return out;
}

}  // namespace fwigan
