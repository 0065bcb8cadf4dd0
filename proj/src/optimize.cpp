#include "fwigan/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fwigan/errors.hpp"
#include "fwigan/losses.hpp"
#include "fwigan/metrics.hpp"
#include "fwigan/source.hpp"

namespace fwigan {

// ---- Adam, clipping, schedules -----------------------------------------------

void AdamState::step(std::span<double> param, std::span<const double> grad, double lr) {
  if (param.size() != m_.size() || grad.size() != m_.size()) {
    throw InvalidInput("adam: state of size " + std::to_string(m_.size()) + " given param " +
                       std::to_string(param.size()) + " and grad " + std::to_string(grad.size()));
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bc1 = 1.0 - std::pow(kBeta1, t);
  const double sqrt_bc2 = std::sqrt(1.0 - std::pow(kBeta2, t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    param[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i]) / sqrt_bc2 + kEps);
  }
}

void clip(std::span<double> grad, const ClipRule& rule) {
  const std::span<double> parts[] = {grad};
  clip(parts, rule);
}

void clip(std::span<const std::span<double>> parts, const ClipRule& rule) {
  switch (rule.kind) {
    case ClipRule::Kind::None:
      return;
    case ClipRule::Kind::Value:
      for (auto part : parts) {
        for (double& g : part) g = std::clamp(g, -rule.limit, rule.limit);
      }
      return;
    case ClipRule::Kind::Norm: {
      double sq = 0.0;
      for (auto part : parts) {
        for (double g : part) sq += g * g;
      }
      const double norm = std::sqrt(sq);
      if (norm <= rule.limit) return;
      const double s = rule.limit / norm;
      for (auto part : parts) {
        for (double& g : part) g *= s;
      }
      return;
    }
  }
}

double lr_at(std::size_t epoch, double base, std::span<const std::size_t> milestones, double gamma) {
  const auto passed = std::ranges::count_if(milestones, [epoch](std::size_t m) { return m <= epoch; });
  return base * std::pow(gamma, static_cast<double>(passed));
}

std::string to_string(Mode mode) { return mode == Mode::Fwi ? "fwi" : "fwigan"; }

Mode parse_mode(const std::string& text) {
  if (text == "fwi") return Mode::Fwi;
  if (text == "fwigan") return Mode::Fwigan;
  throw InvalidInput("unknown mode '" + text + "' (expected fwi or fwigan)");
}

TrainConfig TrainConfig::fwi_defaults() {
  TrainConfig c;
  c.mode = Mode::Fwi;
  c.epochs = 800;
  c.batch_size = 1;
  c.n_critic = 0;
  c.lr_v = 50.0;
  c.milestones = {100, 200};
  return c;
}

TrainConfig TrainConfig::fwigan_defaults(bool noisy) {
  TrainConfig c;
  c.mode = Mode::Fwigan;
  c.epochs = 300;
  c.batch_size = 5;
  c.n_critic = 6;
  c.lr_v = 5.0;
  c.lr_c = 1e-3;
  c.lambda = 10.0;
  c.milestones = {100, 200};
  c.learn_noise = noisy;
  c.clip_v = ClipRule::value(noisy ? 1e3 : 10.0);
  c.clip_c = ClipRule::norm(noisy ? 1e6 : 1e3);
  return c;
}

void TrainConfig::validate(std::size_t n_shots) const {
  if (batch_size == 0 || n_shots % batch_size != 0) {
    throw InvalidInput("batch size " + std::to_string(batch_size) + " does not divide the shot count " +
                       std::to_string(n_shots));
  }
  for (double r : {lr_v, lr_c, lr_f, lr_snr}) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidInput("learning rates must be finite and non-negative");
  }
  if (!(lambda >= 0.0)) throw InvalidInput("lambda must be non-negative");
  if (!(gamma > 0.0)) throw InvalidInput("schedule gamma must be positive");
  if (mode == Mode::Fwigan && critic_base_channels == 0) throw InvalidInput("critic needs channels");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_shots, std::size_t batch_size,
                                                    std::mt19937_64& rng) {
  if (batch_size == 0 || n_shots % batch_size != 0) throw InvalidInput("batch size must divide the shot count");
  std::vector<std::size_t> order(n_shots);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Fisher-Yates with explicit draws so the order is the same on every standard library.
  for (std::size_t i = n_shots; i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(order[i - 1], order[j]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n_shots; b += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                         order.begin() + static_cast<std::ptrdiff_t>(b + batch_size));
  }
  return batches;
}

// ---- shared pieces -------------------------------------------------------------

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void check_problem(const InversionProblem& p) {
  p.geometry.validate(p.initial.grid());
  if (p.observed.n_shots != p.geometry.n_shots() || p.observed.n_receivers != p.geometry.n_receivers()) {
    throw InvalidInput("observed gathers (" + std::to_string(p.observed.n_shots) + " shots x " +
                       std::to_string(p.observed.n_receivers) + " receivers) do not match the geometry");
  }
  if (p.observed.nt < 3 || !(p.observed.dt > 0.0)) throw InvalidInput("observed gathers need nt >= 3 and dt > 0");
  if (!(p.f_init > 0.0)) throw InvalidInput("initial source frequency must be positive");
  if (p.truth && !(p.truth->grid() == p.initial.grid())) throw InvalidInput("truth model grid differs from init");
}

struct FrequencyBounds {
  double lo, hi;
};

FrequencyBounds frequency_bounds(double f_init, double dt) {
  return {0.1 * f_init, std::min(10.0 * f_init, 0.45 / dt)};
}

Wavelet source_for(const InversionProblem& p, double f) {
  return ricker(f, p.observed.nt, p.observed.dt, p.source_delay);
}

InversionRun start_run(const TrainConfig& config, const InversionProblem& problem) {
  InversionRun run;
  run.config = config;
  run.model = clamp_model(problem.initial);
  run.f_peak = problem.f_init;
  run.adam_v = AdamState(run.model.grid().cells());
  run.adam_f = AdamState(1);
  run.adam_snr = AdamState(1);
  if (config.learn_noise) run.snr_db = config.init_snr_db;
  return run;
}

void finish_record(EpochRecord& rec, const InversionRun& run, const InversionProblem& problem,
                   std::chrono::steady_clock::time_point started) {
  rec.f_peak = run.f_peak;
  rec.snr_db = run.snr_db;
  if (problem.truth) {
    rec.ssim = ssim(run.model, *problem.truth);
    rec.error = rel_error(run.model, *problem.truth);
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
}

// Velocity, and optionally frequency, update shared by both loops.
void model_step(InversionRun& run, ModelGradient& grad, double lr_v, double lr_f, FrequencyBounds fb) {
  clip(grad.velocity, run.config.clip_v);
  run.adam_v.step(run.model.mutable_values(), grad.velocity, lr_v);
  clamp_values(run.model.mutable_values(), run.model.v_min(), run.model.v_max());
  if (run.config.learn_source) {
    double f = run.f_peak;
    const double g = grad.frequency;
    run.adam_f.step(std::span<double>(&f, 1), std::span<const double>(&g, 1), lr_f);
    run.f_peak = std::clamp(f, fb.lo, fb.hi);
  }
}

std::string context(const char* mode, std::size_t epoch, std::size_t batch) {
  return std::string(mode) + " epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + ": ";
}

template <class Body>
void with_context(const char* mode, std::size_t epoch, std::size_t batch, Body&& body) {
  try {
    body();
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(context(mode, epoch, batch) + e.what());
  } catch (const InvalidInput& e) {
    throw InvalidInput(context(mode, epoch, batch) + e.what());
  }
}

}  // namespace

double max_abs_misfit(const ShotGathers& sim, const ShotGathers& obs, ShotGathers* adjoint) {
  if (!sim.same_shape(obs)) throw InvalidInput("max_abs_misfit: gather shapes differ");
  if (adjoint) *adjoint = ShotGathers(sim.n_shots, sim.nt, sim.n_receivers, sim.dt);
  double total = 0.0;
  const std::size_t n = sim.shot_size();
  for (std::size_t s = 0; s < sim.n_shots; ++s) {
    const auto x = sim.shot(s);
    const auto y = obs.shot(s);
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(x[i]) > std::abs(x[k])) k = i;
    }
    const double m = std::abs(x[k]) > 0.0 ? std::abs(x[k]) : 1.0;
    double big = 0.0;
    for (double v : y) big = std::max(big, std::abs(v));
    if (big == 0.0) big = 1.0;
    double r_dot_x = 0.0;
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = x[i] / m - y[i] / big;
      total += 0.5 * r[i] * r[i];
      r_dot_x += r[i] * x[i];
    }
    if (!adjoint) continue;
    auto g = adjoint->shot(s);
    for (std::size_t i = 0; i < n; ++i) g[i] = r[i] / m;
    if (x[k] != 0.0) g[k] -= r_dot_x / (m * m) * (x[k] > 0.0 ? 1.0 : -1.0);
  }
  return total;
}

double fwi_data_misfit(const InversionProblem& problem, const VelocityModel& model, double f,
                       std::size_t sponge_width, unsigned threads) {
  const auto sponge = SpongeProfile::make(sponge_width, model.v_max(), model.grid().dx_m());
  const auto sim = forward(model, source_for(problem, f), problem.geometry, sponge, false, threads);
  return max_abs_misfit(sim.gathers, problem.observed, nullptr);
}

// ---- least-squares FWI -----------------------------------------------------------

InversionRun run_fwi(const TrainConfig& config, const InversionProblem& problem, const TrainHooks& hooks) {
  check_problem(problem);
  config.validate(problem.observed.n_shots);
  InversionRun run = start_run(config, problem);
  const auto sponge = SpongeProfile::make(config.sponge_width, run.model.v_max(), run.model.grid().dx_m());
  const auto fb = frequency_bounds(problem.f_init, problem.observed.dt);
  std::mt19937_64 shuffle(derive_seed(config.seed, 1));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_v = lr_at(epoch, config.lr_v, config.milestones, config.gamma);
    const double lr_f = lr_at(epoch, config.lr_f, config.milestones, config.gamma);
    const auto batches = epoch_batches(problem.observed.n_shots, config.batch_size, shuffle);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      with_context("fwi", epoch, b, [&] {
        const auto geometry = problem.geometry.subset(batches[b]);
        const auto observed = problem.observed.select(batches[b]);
        const auto wavelet = source_for(problem, run.f_peak);
        const auto sim = forward(run.model, wavelet, geometry, sponge, true, config.threads);
        ShotGathers adjoint;
        rec.loss += max_abs_misfit(sim.gathers, observed, &adjoint);
        auto grad = vjp(run.model, wavelet, geometry, sponge, adjoint, &sim.wavefields, config.threads);
        model_step(run, grad, rec.lr_v, lr_f, fb);
      });
    }
    finish_record(rec, run, problem, started);
    run.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return run;
}

// ---- FWIGAN ------------------------------------------------------------------------

InversionRun run_fwigan(const TrainConfig& config, const InversionProblem& problem, const TrainHooks& hooks) {
  check_problem(problem);
  config.validate(problem.observed.n_shots);
  InversionRun run = start_run(config, problem);
  const auto& obs = problem.observed;
  const auto sponge = SpongeProfile::make(config.sponge_width, run.model.v_max(), run.model.grid().dx_m());
  const auto fb = frequency_bounds(problem.f_init, obs.dt);
  run.c = choose_c(obs).c;

  CriticConfig cc;
  cc.in_channels = config.batch_size;
  cc.input_h = obs.nt;
  cc.input_w = obs.n_receivers;
  cc.base_channels = config.critic_base_channels;
  cc.fc_width = config.critic_fc_width;
  run.critic = Critic::build(cc, derive_seed(config.seed, 0));
  Critic& critic = *run.critic;
  for (const auto& [name, p] : critic.params().entries()) run.adam_critic.emplace_back(p.numel());
  const ScoreFn score = [&critic](const nn::Tensor& x) { return critic.forward(x); };

  const double kappa = config.scale_critic_input ? static_cast<double>(obs.shot_size()) : 1.0;
  auto critic_input = [&](const ShotGathers& g) {
    auto t = normalize_gathers(g, run.c);
    for (double& v : t.mutable_values()) v *= kappa;
    return t;
  };

  std::mt19937_64 shuffle(derive_seed(config.seed, 1));
  std::mt19937_64 mixing(derive_seed(config.seed, 2));
  std::uint64_t noise_draws = 0;
  const double ref_norm = std::sqrt(std::inner_product(obs.data.begin(), obs.data.end(), obs.data.begin(), 0.0));

  // Simulated gathers plus, in noisy mode, a fresh draw of the learned noise.
  auto make_fake = [&](const ShotGathers& clean, std::vector<double>* dnoise) {
    ShotGathers fake = clean;
    if (!run.snr_db) return fake;
    const auto noise = sample_learned_noise(fake.data.size(), *run.snr_db, ref_norm, obs.data.size(),
                                            derive_seed(config.seed, 1000 + noise_draws++));
    for (std::size_t i = 0; i < fake.data.size(); ++i) fake.data[i] += noise.noise[i];
    if (dnoise) *dnoise = noise.dnoise_dsnr;
    return fake;
  };

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr_v = lr_at(epoch, config.lr_v, config.milestones, config.gamma);
    const double lr_c = lr_at(epoch, config.lr_c, config.milestones, config.gamma);
    const double lr_f = lr_at(epoch, config.lr_f, config.milestones, config.gamma);
    const double lr_snr = lr_at(epoch, config.lr_snr, config.milestones, config.gamma);
    const auto batches = epoch_batches(obs.n_shots, config.batch_size, shuffle);
    std::size_t critic_steps = 0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      with_context("fwigan", epoch, b, [&] {
        const auto geometry = problem.geometry.subset(batches[b]);
        const auto real = critic_input(obs.select(batches[b]));
        const auto wavelet = source_for(problem, run.f_peak);
        // The model is fixed during the critic iterations, so one simulation serves them all.
        const auto sim = forward(run.model, wavelet, geometry, sponge, true, config.threads);

        for (std::size_t k = 0; k < config.n_critic; ++k) {
          const auto fake = critic_input(make_fake(sim.gathers, nullptr));
          std::vector<double> mu(config.batch_size);
          for (auto& m : mu) m = uniform01(mixing);
          const auto objective = critic_objective(score, real, fake, mu, config.lambda);
          std::vector<nn::Tensor> params;
          for (const auto& [name, p] : critic.params().entries()) params.push_back(p);
          auto grads = nn::grad(objective.loss, params);
          std::vector<std::span<double>> parts;
          for (auto& g : grads) parts.push_back(g.mutable_values());
          clip(parts, config.clip_c);
          for (std::size_t i = 0; i < params.size(); ++i) {
            run.adam_critic[i].step(params[i].mutable_values(), grads[i].values(), lr_c);
          }
          rec.critic_loss += objective.loss.item();
          ++critic_steps;
          if (hooks.on_critic_step) hooks.on_critic_step(run, epoch, b, k);
        }

        std::vector<double> dnoise;
        const auto fake_raw = make_fake(sim.gathers, &dnoise);
        const auto generator = generator_objective(score, critic_input(fake_raw));
        rec.loss += generator.loss;
        ShotGathers adjoint(fake_raw.n_shots, fake_raw.nt, fake_raw.n_receivers, fake_raw.dt);
        const std::size_t per = fake_raw.shot_size();
        for (std::size_t s = 0; s < fake_raw.n_shots; ++s) {
          std::vector<double> up(generator.upstream.values().begin() + static_cast<std::ptrdiff_t>(s * per),
                                 generator.upstream.values().begin() + static_cast<std::ptrdiff_t>((s + 1) * per));
          for (double& u : up) u *= kappa;
          const auto g = normalize_vjp(fake_raw.shot(s), run.c, up);
          std::ranges::copy(g, adjoint.shot(s).begin());
        }
        auto grad = vjp(run.model, wavelet, geometry, sponge, adjoint, &sim.wavefields, config.threads);
        model_step(run, grad, rec.lr_v, lr_f, fb);
        if (run.snr_db) {
          double g_snr = std::inner_product(adjoint.data.begin(), adjoint.data.end(), dnoise.begin(), 0.0);
          double snr = *run.snr_db;
          run.adam_snr.step(std::span<double>(&snr, 1), std::span<const double>(&g_snr, 1), lr_snr);
          run.snr_db = snr;
        }
      });
    }
    if (critic_steps) rec.critic_loss /= static_cast<double>(critic_steps);
    rec.loss /= static_cast<double>(batches.size());
    finish_record(rec, run, problem, started);
    run.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return run;
}

}  // namespace fwigan
