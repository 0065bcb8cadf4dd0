#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "fwigan/errors.hpp"
#include "fwigan/geometry.hpp"
#include "fwigan/losses.hpp"
#include "fwigan/modelzoo.hpp"
#include "fwigan/propagator.hpp"
#include "fwigan/source.hpp"
#include "oracles.hpp"

using namespace fwigan;

TEST_CASE("surface layout places sources evenly on the top row") {
  SUBCASE("thirty shots on 300 columns") {
    const Grid2D grid(90, 300, 0.03);
    const auto g = surface_layout(grid, 30);
    CHECK(g.n_shots() == 30);
    CHECK(g.n_receivers() == 300);
    CHECK(g.sources.front().ix == 0);
    CHECK(g.sources.back().ix == 299);
    std::set<std::size_t> strides;
    for (std::size_t i = 1; i < 30; ++i) strides.insert(g.sources[i].ix - g.sources[i - 1].ix);
    CHECK(strides.size() <= 2);
    for (auto s : strides) CHECK((s == 10 || s == 11));
  }
  SUBCASE("single shot at the centre") {
    const auto g = surface_layout(Grid2D(10, 10, 0.03), 1);
    REQUIRE(g.n_shots() == 1);
    CHECK(g.sources[0].ix == 5);
    CHECK(g.sources[0].iz == 0);
  }
  SUBCASE("index oracle floor(i (nx-1) / (n-1))") {
    const auto g = surface_layout(Grid2D(10, 7, 0.03), 3);
    REQUIRE(g.n_shots() == 3);
    CHECK(g.sources[0].ix == 0);
    CHECK(g.sources[1].ix == 3);
    CHECK(g.sources[2].ix == 6);
  }
  SUBCASE("bad requests") {
    CHECK_THROWS_AS(surface_layout(Grid2D(10, 7, 0.03), 0), InvalidInput);
    CHECK_THROWS_AS(surface_layout(Grid2D(10, 7, 0.03), 8), InvalidInput);
    CHECK_THROWS_AS(surface_layout(Grid2D(10, 7, 0.03), 2, 10), InvalidInput);
  }
}

TEST_CASE("geometry validation and subsets") {
  const Grid2D grid(10, 10, 0.03);
  AcquisitionGeometry g{{{0, 1}, {0, 9}}, {{0, 0}, {0, 5}}};
  CHECK_NOTHROW(g.validate(grid));
  const std::size_t pick[] = {1};
  const auto s = g.subset(pick);
  CHECK(s.n_shots() == 1);
  CHECK(s.sources[0] == Cell{0, 9});
  CHECK(s.receivers == g.receivers);
  g.receivers.push_back({10, 0});
  CHECK_THROWS_AS(g.validate(grid), InvalidInput);
  CHECK_THROWS_AS(AcquisitionGeometry{}.validate(grid), InvalidInput);
}

TEST_CASE("clamp keeps models inside their bounds") {
  const Grid2D grid(4, 4, 0.03);
  VelocityModel m(grid, 2000.0, 1500.0, 3000.0);
  CHECK(clamp_model(m) == m);
  std::vector<double> v(16, 2000.0);
  v[3] = 1400.0;
  v[7] = 3001.0;
  clamp_values(v, 1500.0, 3000.0);
  CHECK(v[3] == 1500.0);
  CHECK(v[7] == 3000.0);
  CHECK(v[0] == 2000.0);
  // idempotent
  auto w = v;
  clamp_values(w, 1500.0, 3000.0);
  CHECK(w == v);
  CHECK_THROWS_AS(VelocityModel(grid, 1000.0, 1500.0, 3000.0), InvalidInput);
}

TEST_CASE("ricker values and frequency derivative") {
  CHECK(ricker_value(7.0, 0.0) == 1.0);
  const double root = 1.0 / (std::numbers::sqrt2 * std::numbers::pi * 7.0);
  CHECK(root == doctest::Approx(0.03215).epsilon(1e-3));
  CHECK(std::abs(ricker_value(7.0, root)) < 1e-14);
  CHECK(ricker_dfreq_value(7.0, 0.0) == 0.0);
  CHECK(ricker_dfreq_value(13.0, 0.0) == 0.0);

  for (double tau : {-0.05, -0.01, 0.02, 0.04, 0.09}) {
    const double h = 1e-4;
    const double fd = (ricker_value(7.0 + h, tau) - ricker_value(7.0 - h, tau)) / (2 * h);
    CHECK(oracle::rel_diff(ricker_dfreq_value(7.0, tau), fd) < 1e-5);
    // w(f, tau) = w(k f, tau / k)  =>  dw/df(f, tau) = k dw/df(k f, tau / k)
    const double k = 1.7;
    CHECK(oracle::rel_diff(ricker_dfreq_value(7.0, tau), k * ricker_dfreq_value(k * 7.0, tau / k)) < 1e-12);
  }
}

TEST_CASE("sampled ricker: peak, zero crossing, spectrum") {
  const double dt = 0.003;
  const auto w = ricker(7.0, 2000, dt);
  CHECK(w.t0 == doctest::Approx(default_delay(7.0, dt)));
  const auto peak = static_cast<std::size_t>(std::lround(w.t0 / dt));
  CHECK(w.samples[peak] == 1.0);
  for (double s : w.samples) CHECK(s <= 1.0);

  const double root_t = w.t0 + 1.0 / (std::numbers::sqrt2 * std::numbers::pi * 7.0);
  std::size_t crossing = 0;
  for (std::size_t k = peak; k + 1 < w.nt; ++k) {
    if (w.samples[k] > 0.0 && w.samples[k + 1] <= 0.0) {
      crossing = k;
      break;
    }
  }
  CHECK(std::abs(static_cast<double>(crossing) * dt - root_t) <= dt);

  // Direct DFT amplitude spectrum.
  const std::size_t n = w.nt;
  std::size_t best = 0;
  double best_amp = -1.0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ph = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      re += w.samples[t] * std::cos(ph);
      im += w.samples[t] * std::sin(ph);
    }
    const double amp = std::hypot(re, im);
    if (amp > best_amp) {
      best_amp = amp;
      best = k;
    }
  }
  const double df = 1.0 / (static_cast<double>(n) * dt);
  CHECK(std::abs(static_cast<double>(best) * df - 7.0) <= df);
}

TEST_CASE("ricker rejects bad parameters") {
  CHECK_THROWS_AS(ricker(0.0, 100, 0.003), InvalidInput);
  CHECK_THROWS_AS(ricker(7.0, 0, 0.003), InvalidInput);
  CHECK_THROWS_AS(ricker(7.0, 100, 0.0), InvalidInput);
  CHECK_THROWS_AS(ricker(7.0, 100, 0.003, -0.1), InvalidInput);
  CHECK_THROWS_AS(ricker(200.0, 100, 0.003), InvalidInput);
  const auto d = ricker_df(7.0, 100, 0.003);
  CHECK(d.samples[static_cast<std::size_t>(std::lround(d.t0 / 0.003))] == 0.0);
}

TEST_CASE("CFL guard") {
  auto a = check_cfl(6000.0, 30.0, 0.003);
  CHECK(a.ok);
  CHECK(a.ratio == doctest::Approx(0.6));
  auto b = check_cfl(1500.0, 30.0, 0.003);
  CHECK(b.ok);
  CHECK(b.ratio == doctest::Approx(0.15));
  auto c = check_cfl(6200.0, 30.0, 0.003);
  CHECK_FALSE(c.ok);
  CHECK(c.ratio == doctest::Approx(0.62));
  CHECK_FALSE(check_cfl(6000.0, 30.0, 0.0031).ok);

  const auto m = layered(Grid2D(10, 10, 0.03), std::vector<double>{}, std::vector<double>{6200.0}, 1000.0, 7000.0);
  const auto geo = surface_layout(m.grid(), 1);
  CHECK_THROWS_AS(forward(m, ricker(7.0, 50, 0.003), geo, SpongeProfile::make(5, 6200.0, 30.0)), InvalidInput);
}

namespace {

struct SmallSetup {
  VelocityModel model;
  Wavelet wavelet;
  AcquisitionGeometry geometry;
  SpongeProfile sponge;
};

SmallSetup small_setup(std::size_t nt = 200) {
  const Grid2D grid(16, 20, 0.03);
  const double iface[] = {0.5};
  const double vel[] = {2000.0, 2800.0};
  auto model = layered(grid, iface, vel, 1500.0, 3500.0);
  auto geometry = surface_layout(grid, 2, 1);
  return {model, ricker(10.0, nt, 0.003), geometry, SpongeProfile::make(8, 3500.0, 30.0)};
}

}  // namespace

TEST_CASE("forward modeling is linear in the source") {
  auto s = small_setup();
  auto zero = s.wavelet;
  std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
  const auto z = forward(s.model, zero, s.geometry, s.sponge).gathers;
  for (double x : z.data) CHECK(x == 0.0);

  const auto d1 = forward(s.model, s.wavelet, s.geometry, s.sponge).gathers;
  auto doubled = s.wavelet;
  for (auto& x : doubled.samples) x *= 2.0;
  const auto d2 = forward(s.model, doubled, s.geometry, s.sponge).gathers;
  for (std::size_t i = 0; i < d1.data.size(); ++i) CHECK(d2.data[i] == 2.0 * d1.data[i]);
  for (std::size_t s_ = 0; s_ < d1.n_shots; ++s_) {
    for (std::size_t g = 0; g < d1.n_receivers; ++g) {
      CHECK(d1.at(s_, 0, g) == 0.0);
      CHECK(d1.at(s_, 1, g) == 0.0);
    }
  }
}

TEST_CASE("forward matches a loop-by-loop transcription of the scheme") {
  auto s = small_setup();
  const auto fast = forward(s.model, s.wavelet, s.geometry, s.sponge).gathers;
  const std::vector<double> dv(s.model.grid().cells(), 0.0);
  const auto slow = oracle::born(s.model, dv, s.wavelet, s.geometry, s.sponge).data;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fast.data.size(); ++i) {
    num += (fast.data[i] - slow.data[i]) * (fast.data[i] - slow.data[i]);
    den += slow.data[i] * slow.data[i];
  }
  CHECK(den > 0.0);
  CHECK(std::sqrt(num / den) < 1e-12);
}

TEST_CASE("threaded and serial modeling agree bit for bit") {
  auto s = small_setup();
  const auto a = forward(s.model, s.wavelet, s.geometry, s.sponge, false, 1).gathers;
  const auto b = forward(s.model, s.wavelet, s.geometry, s.sponge, false, 3).gathers;
  CHECK(a.data == b.data);
  const auto ga = vjp(s.model, s.wavelet, s.geometry, s.sponge, a, nullptr, 1);
  const auto gb = vjp(s.model, s.wavelet, s.geometry, s.sponge, a, nullptr, 3);
  CHECK(ga.velocity == gb.velocity);
  CHECK(ga.frequency == gb.frequency);
}

TEST_CASE("first arrival in a homogeneous model follows distance / velocity") {
  const Grid2D grid(61, 61, 0.01);
  const VelocityModel m(grid, 2000.0, 1500.0, 2500.0);
  const double dt = 0.001;
  const AcquisitionGeometry geo{{{30, 0}}, {{30, 60}}};
  const double offset_m = 600.0;
  const auto w = ricker(15.0, 500, dt);
  const auto d = forward(m, w, geo, SpongeProfile::make(20, 2000.0, 10.0)).gathers;
  // onset: first sample exceeding 1% of the trace maximum, compared with the
  // onset of the wavelet itself shifted by the travel time
  double peak = 0.0;
  for (std::size_t t = 0; t < d.nt; ++t) peak = std::max(peak, std::abs(d.at(0, t, 0)));
  REQUIRE(peak > 0.0);
  std::size_t onset = 0;
  while (std::abs(d.at(0, onset, 0)) < 0.01 * peak) ++onset;
  std::size_t w_onset = 0;
  while (std::abs(w.samples[w_onset]) < 0.01) ++w_onset;
  const double expected = offset_m / 2000.0 / dt + static_cast<double>(w_onset);
  CHECK(std::abs(static_cast<double>(onset) - expected) <= 3.0);
}

TEST_CASE("zero adjoint source gives zero gradients") {
  auto s = small_setup();
  ShotGathers y(s.geometry.n_shots(), s.wavelet.nt, s.geometry.n_receivers(), s.wavelet.dt);
  const auto g = vjp(s.model, s.wavelet, s.geometry, s.sponge, y);
  for (double x : g.velocity) CHECK(x == 0.0);
  CHECK(g.frequency == 0.0);
}

TEST_CASE("adjoint state agrees with the tangent-linear oracle") {
  auto s = small_setup();
  std::mt19937_64 rng(11);
  const auto dv = oracle::random_vector(s.model.grid().cells(), rng, 10.0);
  const auto born = oracle::born(s.model, dv, s.wavelet, s.geometry, s.sponge);
  ShotGathers y(s.geometry.n_shots(), s.wavelet.nt, s.geometry.n_receivers(), s.wavelet.dt);
  y.data = oracle::random_vector(y.data.size(), rng);
  const auto g = vjp(s.model, s.wavelet, s.geometry, s.sponge, y);
  const double lhs = oracle::dot(born.tangent.data, y.data);
  const double rhs = oracle::dot(dv, g.velocity);
  CHECK(oracle::rel_diff(lhs, rhs) < 1e-10);

  // cached wavefields give the same gradient
  const auto fw = forward(s.model, s.wavelet, s.geometry, s.sponge, true);
  const auto gc = vjp(s.model, s.wavelet, s.geometry, s.sponge, y, &fw.wavefields);
  CHECK(gc.velocity == g.velocity);
}

TEST_CASE("misfit gradient matches finite differences at random cells") {
  auto s = small_setup(150);
  const auto truth = s.model;
  const auto obs = forward(truth, s.wavelet, s.geometry, s.sponge).gathers;
  auto start = gaussian_smooth(truth, 2.0);
  auto misfit_at = [&](const VelocityModel& m) {
    return l2_misfit(forward(m, s.wavelet, s.geometry, s.sponge).gathers, obs);
  };
  const auto base = misfit_at(start);
  const auto g = vjp(start, s.wavelet, s.geometry, s.sponge, base.adjoint_source);
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, start.grid().cells() - 1);
  for (int k = 0; k < 3; ++k) {
    const std::size_t cell = pick(rng);
    auto vals = start.mutable_values();
    const double fd = oracle::central_difference(
        [&] { return misfit_at(start).value; }, vals[cell], 1.0);
    CHECK(oracle::rel_diff(g.velocity[cell], fd) < 1e-3);
  }
}
