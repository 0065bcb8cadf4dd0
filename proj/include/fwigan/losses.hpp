#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fwigan/nn.hpp"
#include "fwigan/propagator.hpp"

namespace fwigan {

/// Offset that makes observed gathers strictly positive before normalization.
struct NormalizationConstant {
  double c = 0.0;
};

/// c = 1.1*|min(observed)|. When that is not positive enough to shift the
/// minimum above zero (min >= 0 with min + c == 0), falls back to
/// 1.1*max|observed|*1e-6 plus the smallest normal double.
NormalizationConstant choose_c(const ShotGathers& observed);

/// P(x) = (x + c) / sum(x + c). Throws InvalidInput if any x + c <= 0.
std::vector<double> normalize(std::span<const double> gather, double c);

/// Gradient w.r.t. x of <upstream, P(x)>: (upstream_j - <upstream, P>) / sum(x + c).
std::vector<double> normalize_vjp(std::span<const double> gather, double c, std::span<const double> upstream);

/// Per-shot normalization of a whole gather set, returned as a [n_shots, nt, n_g] tensor.
nn::Tensor normalize_gathers(const ShotGathers& gathers, double c);

struct Misfit {
  double value = 0.0;
  ShotGathers adjoint_source;  // sim - obs
};

/// 0.5 * sum (sim - obs)^2.
Misfit l2_misfit(const ShotGathers& sim, const ShotGathers& obs);

/// Scores a [B, H, W] tensor; must record a differentiable graph when grad mode is on.
using ScoreFn = std::function<nn::Tensor(const nn::Tensor&)>;

struct CriticObjective {
  nn::Tensor loss;  // D(fake) - D(real) + lambda*(|grad D(u_hat)| - 1)^2, differentiable
  double d_real = 0.0;
  double d_fake = 0.0;
  double penalty = 0.0;   // already multiplied by lambda
  double grad_norm = 0.0;  // |grad D(u_hat)|
};

/// u_hat[b] = mu[b]*real[b] + (1 - mu[b])*fake[b]; one mu per channel.
CriticObjective critic_objective(const ScoreFn& critic, const nn::Tensor& real, const nn::Tensor& fake,
                                 std::span<const double> mu, double lambda);

struct GeneratorObjective {
  double loss = 0.0;       // -D(fake)
  nn::Tensor upstream;     // d(-D(fake))/d fake
};

GeneratorObjective generator_objective(const ScoreFn& critic, const nn::Tensor& fake);

struct WganLosses {
  CriticObjective critic;
  GeneratorObjective generator;
};

WganLosses wgan_losses(const ScoreFn& critic, const nn::Tensor& real, const nn::Tensor& fake,
                       std::span<const double> mu, double lambda);

/// d + n with n = eps * |d| / (10^(snr/20) |eps|), eps standard normal from
/// `seed`. The realized SNR equals snr_db up to rounding. No value means no noise.
ShotGathers add_awgn(const ShotGathers& d, std::optional<double> snr_db, std::uint64_t seed);

/// Standard deviation of the learned noise: ref_norm * 10^(-snr/20) / sqrt(ref_count).
double learned_noise_scale(double snr_db, double ref_norm, std::size_t ref_count);

struct LearnedNoise {
  std::vector<double> noise;        // alpha * eps
  std::vector<double> dnoise_dsnr;  // noise * (-ln 10 / 20)
};

/// `count` samples of reparameterized noise alpha*eps, eps ~ N(0, 1) drawn from `seed`.
LearnedNoise sample_learned_noise(std::size_t count, double snr_db, double ref_norm, std::size_t ref_count,
                                  std::uint64_t seed);

}  // namespace fwigan
