#include "fwigan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "fwigan/errors.hpp"

namespace fwigan {

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

NormalizationConstant choose_c(const ShotGathers& observed) {
  if (observed.data.empty()) throw InvalidInput("choose_c: empty gathers");
  const auto [lo, hi] = std::ranges::minmax(observed.data);
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw InvalidInput("choose_c: non-finite observed data");
  const double c = 1.1 * std::abs(lo);
  if (lo + c > 0.0) return {c};
  const double peak = std::max(std::abs(lo), std::abs(hi));
  return {1.1 * peak * 1e-6 + std::numeric_limits<double>::min()};
}

std::vector<double> normalize(std::span<const double> gather, double c) {
  double total = 0.0;
  for (std::size_t i = 0; i < gather.size(); ++i) {
    const double shifted = gather[i] + c;
    if (!(shifted > 0.0)) {
      throw InvalidInput("normalize: entry " + std::to_string(i) + " is not positive after the shift (" +
                         std::to_string(shifted) + ")");
    }
    total += shifted;
  }
  std::vector<double> p(gather.size());
  for (std::size_t i = 0; i < gather.size(); ++i) p[i] = (gather[i] + c) / total;
  return p;
}

std::vector<double> normalize_vjp(std::span<const double> gather, double c, std::span<const double> upstream) {
  if (upstream.size() != gather.size()) throw InvalidInput("normalize_vjp: upstream size mismatch");
  double total = 0.0;
  for (double x : gather) total += x + c;
  double mean = 0.0;  // <upstream, P>
  for (std::size_t i = 0; i < gather.size(); ++i) mean += upstream[i] * (gather[i] + c);
  mean /= total;
  std::vector<double> g(gather.size());
  for (std::size_t i = 0; i < gather.size(); ++i) g[i] = (upstream[i] - mean) / total;
  return g;
}

nn::Tensor normalize_gathers(const ShotGathers& gathers, double c) {
  std::vector<double> values;
  values.reserve(gathers.data.size());
  for (std::size_t s = 0; s < gathers.n_shots; ++s) {
    const auto p = normalize(gathers.shot(s), c);
    values.insert(values.end(), p.begin(), p.end());
  }
  return nn::Tensor::from({gathers.n_shots, gathers.nt, gathers.n_receivers}, std::move(values));
}

Misfit l2_misfit(const ShotGathers& sim, const ShotGathers& obs) {
  if (!sim.same_shape(obs)) throw InvalidInput("l2_misfit: gather shapes differ");
  Misfit m{0.0, ShotGathers(sim.n_shots, sim.nt, sim.n_receivers, sim.dt)};
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const double r = sim.data[i] - obs.data[i];
    m.adjoint_source.data[i] = r;
    m.value += 0.5 * r * r;
  }
  return m;
}

CriticObjective critic_objective(const ScoreFn& critic, const nn::Tensor& real, const nn::Tensor& fake,
                                 std::span<const double> mu, double lambda) {
  if (real.shape() != fake.shape()) {
    throw InvalidInput("critic_objective: real " + nn::shape_string(real.shape()) + " vs fake " +
                       nn::shape_string(fake.shape()));
  }
  if (real.dim() != 3 || mu.size() != real.shape()[0]) {
    throw InvalidInput("critic_objective: need one mu per channel of a [B,H,W] batch");
  }
  if (lambda < 0.0) throw InvalidInput("critic_objective: lambda must be non-negative");

  const std::size_t per = real.shape()[1] * real.shape()[2];
  std::vector<double> mixed(real.numel());
  for (std::size_t b = 0; b < mu.size(); ++b) {
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) {
      mixed[i] = mu[b] * real.values()[i] + (1.0 - mu[b]) * fake.values()[i];
    }
  }
  auto u_hat = nn::Tensor::from(real.shape(), std::move(mixed), true);

  nn::GradMode on(true);
  auto d_real = critic(real.detach());
  auto d_fake = critic(fake.detach());
  auto d_hat = critic(u_hat);
  auto g = nn::grad(d_hat, {u_hat}, true)[0];
  auto norm = nn::sqrt(nn::dot(g, g));
  auto excess = nn::shift(norm, -1.0);
  auto penalty = nn::scale(nn::mul(excess, excess), lambda);
  CriticObjective out;
  out.loss = nn::add(nn::sub(d_fake, d_real), penalty);
  out.d_real = d_real.item();
  out.d_fake = d_fake.item();
  out.penalty = penalty.item();
  out.grad_norm = norm.item();
  return out;
}

GeneratorObjective generator_objective(const ScoreFn& critic, const nn::Tensor& fake) {
  auto leaf = fake.detach();
  leaf.set_requires_grad(true);
  nn::GradMode on(true);
  auto loss = nn::scale(critic(leaf), -1.0);
  return {loss.item(), nn::grad(loss, {leaf})[0]};
}

WganLosses wgan_losses(const ScoreFn& critic, const nn::Tensor& real, const nn::Tensor& fake,
                       std::span<const double> mu, double lambda) {
  return {critic_objective(critic, real, fake, mu, lambda), generator_objective(critic, fake)};
}

ShotGathers add_awgn(const ShotGathers& d, std::optional<double> snr_db, std::uint64_t seed) {
  if (!snr_db) return d;
  if (!std::isfinite(*snr_db)) throw InvalidInput("add_awgn: SNR must be finite");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> eps(d.data.size());
  for (auto& e : eps) e = normal(rng);
  const double eps_norm = l2_norm(eps);
  const double scale = eps_norm > 0.0 ? l2_norm(d.data) / (std::pow(10.0, *snr_db / 20.0) * eps_norm) : 0.0;
  ShotGathers out = d;
  for (std::size_t i = 0; i < eps.size(); ++i) out.data[i] += scale * eps[i];
  return out;
}

double learned_noise_scale(double snr_db, double ref_norm, std::size_t ref_count) {
  if (ref_count == 0) throw InvalidInput("learned noise needs a positive reference count");
  return ref_norm * std::pow(10.0, -snr_db / 20.0) / std::sqrt(static_cast<double>(ref_count));
}

LearnedNoise sample_learned_noise(std::size_t count, double snr_db, double ref_norm, std::size_t ref_count,
                                  std::uint64_t seed) {
  const double alpha = learned_noise_scale(snr_db, ref_norm, ref_count);
  const double dlog = -std::numbers::ln10 / 20.0;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  LearnedNoise out{std::vector<double>(count), std::vector<double>(count)};
  for (std::size_t i = 0; i < count; ++i) {
    out.noise[i] = alpha * normal(rng);
    out.dnoise_dsnr[i] = out.noise[i] * dlog;
  }
  return out;
}

}  // namespace fwigan
