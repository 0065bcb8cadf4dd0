#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fwigan/critic.hpp"
#include "fwigan/geometry.hpp"
#include "fwigan/propagator.hpp"

namespace fwigan {

/// Bias-corrected Adam: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
/// p <- p - lr * (m / (1 - b1^t)) / (sqrt(v) / sqrt(1 - b2^t) + eps).
class AdamState {
 public:
  static constexpr double kBeta1 = 0.5;
  static constexpr double kBeta2 = 0.9;
  static constexpr double kEps = 1e-8;

  AdamState() = default;
  explicit AdamState(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> param, std::span<const double> grad, double lr);

  [[nodiscard]] std::size_t size() const { return m_.size(); }
  [[nodiscard]] std::uint64_t steps() const { return steps_; }
  [[nodiscard]] std::span<const double> first_moment() const { return m_; }
  [[nodiscard]] std::span<const double> second_moment() const { return v_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t steps_ = 0;
};

struct ClipRule {
  enum class Kind { None, Value, Norm };
  Kind kind = Kind::None;
  double limit = 0.0;

  static ClipRule none() { return {}; }
  /// Elementwise clamp to [-k, k].
  static ClipRule value(double k) { return {Kind::Value, k}; }
  /// Rescale so the joint 2-norm is at most k.
  static ClipRule norm(double k) { return {Kind::Norm, k}; }

  friend bool operator==(const ClipRule&, const ClipRule&) = default;
};

void clip(std::span<double> grad, const ClipRule& rule);
/// Norm rules act on the concatenation of all parts.
void clip(std::span<const std::span<double>> parts, const ClipRule& rule);

/// base * gamma^(number of milestones <= epoch), epochs counted from 0.
double lr_at(std::size_t epoch, double base, std::span<const std::size_t> milestones, double gamma = 0.5);

enum class Mode { Fwi, Fwigan };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct TrainConfig {
  Mode mode = Mode::Fwigan;
  std::size_t epochs = 300;
  std::size_t batch_size = 5;
  std::size_t n_critic = 6;
  double lr_v = 5.0;
  double lr_c = 1e-3;
  double lr_f = 1e-3;
  double lr_snr = 1.0;
  double lambda = 10.0;
  ClipRule clip_v = ClipRule::value(10.0);
  ClipRule clip_c = ClipRule::norm(1e3);
  std::vector<std::size_t> milestones{100, 200};
  double gamma = 0.5;
  std::uint64_t seed = 0;
  bool learn_source = false;
  bool learn_noise = false;
  double init_snr_db = 20.0;
  /// Feed the critic nt*n_g*P(x) (mean 1 per gather) instead of P(x). Keeps
  /// critic inputs O(1) and the generator gradient well above Adam's epsilon.
  bool scale_critic_input = true;
  std::size_t critic_base_channels = 32;
  std::size_t critic_fc_width = 2000;
  std::size_t sponge_width = kDefaultSpongeWidth;
  unsigned threads = 1;

  /// 800 epochs, batch 1, lr_v 50, decay at epochs 100 and 200.
  static TrainConfig fwi_defaults();
  /// 300 epochs, batch 5, 6 critic steps, lambda 10, lr_v 5, lr_c 1e-3, decay
  /// every 100 epochs. Noisy data widens the clip limits (1e3 value, 1e6 norm).
  static TrainConfig fwigan_defaults(bool noisy = false);

  /// Throws InvalidInput for negative rates or a batch size that does not divide n_shots.
  /// Zero rates are allowed and freeze the corresponding parameters.
  void validate(std::size_t n_shots) const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything the loops need besides the configuration.
struct InversionProblem {
  ShotGathers observed;
  AcquisitionGeometry geometry;
  VelocityModel initial;
  double f_init = 7.0;
  double source_delay = 0.0;  // s, kept fixed while f is learned
  std::optional<VelocityModel> truth;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;         // FWI: summed misfit; FWIGAN: mean generator loss -D(fake)
  double critic_loss = 0.0;  // FWIGAN: mean critic objective over the epoch's critic steps
  double lr_v = 0.0;
  double f_peak = 0.0;
  std::optional<double> snr_db;
  std::optional<double> ssim;
  std::optional<double> error;
  double wall_ms = 0.0;
};

struct InversionRun {
  TrainConfig config;
  VelocityModel model;
  double f_peak = 0.0;
  std::optional<double> snr_db;
  AdamState adam_v;
  AdamState adam_f;
  AdamState adam_snr;
  std::optional<Critic> critic;
  std::vector<AdamState> adam_critic;  // one per critic parameter
  double c = 0.0;                      // frozen normalization offset
  std::vector<EpochRecord> history;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
  /// Called after each critic update with (run, epoch, batch index, critic iteration).
  std::function<void(const InversionRun&, std::size_t, std::size_t, std::size_t)> on_critic_step;
};

/// Shot indices shuffled with `rng` and cut into consecutive groups of `batch_size`.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_shots, std::size_t batch_size, std::mt19937_64& rng);

/// Per-shot max-abs scaling followed by 0.5*|sim - obs|^2; returns the misfit
/// and fills `adjoint` (same shape as sim) with its gradient w.r.t. sim.
double max_abs_misfit(const ShotGathers& sim, const ShotGathers& obs, ShotGathers* adjoint);

/// max_abs_misfit of the full data set for `model` and source frequency `f`.
double fwi_data_misfit(const InversionProblem& problem, const VelocityModel& model, double f,
                       std::size_t sponge_width = kDefaultSpongeWidth, unsigned threads = 1);

/// Least-squares FWI on max-abs normalized gathers.
InversionRun run_fwi(const TrainConfig& config, const InversionProblem& problem, const TrainHooks& hooks = {});

/// Adversarial FWI: WGAN-GP critic over normalized gathers, generator step
/// through the normalization and the adjoint-state gradient.
InversionRun run_fwigan(const TrainConfig& config, const InversionProblem& problem, const TrainHooks& hooks = {});

}  // namespace fwigan
