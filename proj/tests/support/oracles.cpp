#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

namespace {

struct Grid {
  std::size_t rows, cols;
  std::vector<double> v;
  Grid(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& at(std::size_t i, std::size_t j) { return v.at(i * cols + j); }
  [[nodiscard]] double get(std::ptrdiff_t i, std::ptrdiff_t j) const {
    if (i < 0 || j < 0 || i >= static_cast<std::ptrdiff_t>(rows) || j >= static_cast<std::ptrdiff_t>(cols)) return 0.0;
    return v.at(static_cast<std::size_t>(i) * cols + static_cast<std::size_t>(j));
  }
};

// Second derivative along each axis with weights (-1/12, 4/3, -5/2, 4/3, -1/12), in index units.
double lap(const Grid& g, std::size_t i0, std::size_t j0) {
  const double w[5] = {-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0};
  const auto i = static_cast<std::ptrdiff_t>(i0);
  const auto j = static_cast<std::ptrdiff_t>(j0);
  double s = 0.0;
  for (int o = -2; o <= 2; ++o) s += w[o + 2] * (g.get(i + o, j) + g.get(i, j + o));
  return s;
}

std::size_t sponge_depth(std::size_t i, std::size_t pad, std::size_t n) {
  if (i < pad) return pad - i;
  if (i >= pad + n) return i + 1 - (pad + n);
  return 0;
}

}  // namespace

BornResult born(const fwigan::VelocityModel& model, std::span<const double> dv, const fwigan::Wavelet& wavelet,
                const fwigan::AcquisitionGeometry& geometry, const fwigan::SpongeProfile& sponge) {
  const auto& g = model.grid();
  if (dv.size() != g.cells()) throw std::invalid_argument("born: perturbation size");
  const std::size_t pad = sponge.width;
  const std::size_t pz = g.nz + 2 * pad, px = g.nx + 2 * pad;
  const double dt = wavelet.dt, h2 = g.dx_m() * g.dx_m();
  Grid v(pz, px), dvp(pz, px), sigma(pz, px);
  for (std::size_t i = 0; i < pz; ++i) {
    for (std::size_t j = 0; j < px; ++j) {
      const std::size_t iz = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad), 0,
                                                        static_cast<std::ptrdiff_t>(g.nz) - 1);
      const std::size_t ix = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad), 0,
                                                        static_cast<std::ptrdiff_t>(g.nx) - 1);
      v.at(i, j) = model.at(iz, ix);
      dvp.at(i, j) = dv[g.index(iz, ix)];
      sigma.at(i, j) = sponge.at_depth(sponge_depth(i, pad, g.nz)) + sponge.at_depth(sponge_depth(j, pad, g.nx));
    }
  }
  const std::size_t nt = wavelet.nt, ng = geometry.n_receivers();
  BornResult out{fwigan::ShotGathers(geometry.n_shots(), nt, ng, dt), fwigan::ShotGathers(geometry.n_shots(), nt, ng, dt)};
  for (std::size_t s = 0; s < geometry.n_shots(); ++s) {
    const std::size_t si = geometry.sources[s].iz + pad, sj = geometry.sources[s].ix + pad;
    Grid u0(pz, px), u1(pz, px), d0(pz, px), d1(pz, px);
    for (std::size_t t = 1; t + 1 < nt; ++t) {
      Grid u2(pz, px), d2(pz, px);
      for (std::size_t i = 0; i < pz; ++i) {
        for (std::size_t j = 0; j < px; ++j) {
          const double c = v.at(i, j) * v.at(i, j) * dt * dt;
          const double dc = 2.0 * v.at(i, j) * dvp.at(i, j) * dt * dt;
          const double src = (i == si && j == sj) ? wavelet.samples.at(t) / h2 : 0.0;
          const double a = 2.0 - sigma.at(i, j) * dt, b = 1.0 - sigma.at(i, j) * dt;
          const double lu = lap(u1, i, j) / h2;
          u2.at(i, j) = a * u1.at(i, j) - b * u0.at(i, j) + c * (lu + src);
          d2.at(i, j) = a * d1.at(i, j) - b * d0.at(i, j) + c * lap(d1, i, j) / h2 + dc * (lu + src);
        }
      }
      for (std::size_t r = 0; r < ng; ++r) {
        const auto& cell = geometry.receivers[r];
        out.data.data.at(out.data.index(s, t + 1, r)) = u2.at(cell.iz + pad, cell.ix + pad);
        out.tangent.data.at(out.tangent.index(s, t + 1, r)) = d2.at(cell.iz + pad, cell.ix + pad);
      }
      u0 = std::move(u1);
      u1 = std::move(u2);
      d0 = std::move(d1);
      d1 = std::move(d2);
    }
  }
  return out;
}

std::vector<double> conv2d(std::span<const double> x, std::size_t ci, std::size_t h, std::size_t w,
                           std::span<const double> k, std::size_t co) {
  std::vector<double> y(co * h * w, 0.0);
  for (std::size_t o = 0; o < co; ++o) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double acc = 0.0;
        for (std::size_t c = 0; c < ci; ++c) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const auto si = static_cast<std::ptrdiff_t>(i + ky) - 1;
              const auto sj = static_cast<std::ptrdiff_t>(j + kx) - 1;
              if (si < 0 || sj < 0 || si >= static_cast<std::ptrdiff_t>(h) || sj >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += k[((o * ci + c) * 3 + ky) * 3 + kx] * x[(c * h + static_cast<std::size_t>(si)) * w + static_cast<std::size_t>(sj)];
            }
          }
        }
        y[(o * h + i) * w + j] = acc;
      }
    }
  }
  return y;
}

double critic_score(const fwigan::Critic& critic, std::span<const double> x) {
  const auto& cfg = critic.config();
  const auto& p = critic.params();
  std::size_t c = cfg.in_channels, h = cfg.padded_h(), w = cfg.padded_w();
  std::vector<double> a(c * h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < cfg.input_h; ++i) {
      for (std::size_t j = 0; j < cfg.input_w; ++j) a[(ch * h + i) * w + j] = x[(ch * cfg.input_h + i) * cfg.input_w + j];
    }
  }
  auto leaky = [](double z) { return z > 0 ? z : 0.1 * z; };
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    const auto& k = p.get("conv" + std::to_string(b) + ".weight");
    const auto& bias = p.get("conv" + std::to_string(b) + ".bias");
    const std::size_t co = k.shape()[0];
    auto y = conv2d(a, c, h, w, k.values(), co);
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t q = 0; q < h * w; ++q) y[o * h * w + q] += bias.values()[o];
    }
    std::vector<double> pooled(co * (h / 2) * (w / 2));
    for (std::size_t o = 0; o < co; ++o) {
      for (std::size_t i = 0; i < h / 2; ++i) {
        for (std::size_t j = 0; j < w / 2; ++j) {
          const double m = std::max({y[(o * h + 2 * i) * w + 2 * j], y[(o * h + 2 * i) * w + 2 * j + 1],
                                     y[(o * h + 2 * i + 1) * w + 2 * j], y[(o * h + 2 * i + 1) * w + 2 * j + 1]});
          pooled[(o * (h / 2) + i) * (w / 2) + j] = leaky(m);
        }
      }
    }
    a = std::move(pooled);
    c = co;
    h /= 2;
    w /= 2;
  }
  const auto& w1 = p.get("fc1.weight");
  const auto& b1 = p.get("fc1.bias");
  const std::size_t m = w1.shape()[0], n = w1.shape()[1];
  std::vector<double> hidden(m);
  for (std::size_t r = 0; r < m; ++r) {
    double s = b1.values()[r];
    for (std::size_t q = 0; q < n; ++q) s += w1.values()[r * n + q] * a[q];
    hidden[r] = leaky(s);
  }
  double score = p.get("fc2.bias").values()[0];
  for (std::size_t r = 0; r < m; ++r) score += p.get("fc2.weight").values()[r] * hidden[r];
  return score;
}

double central_difference(const std::function<double()>& f, double& xi, double h) {
  const double keep = xi;
  xi = keep + h;
  const double fp = f();
  xi = keep - h;
  const double fm = f();
  xi = keep;
  return (fp - fm) / (2.0 * h);
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace oracle
