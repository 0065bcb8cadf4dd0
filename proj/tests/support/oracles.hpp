#pragma once

// Slow, loop-by-loop reference implementations used as test oracles.

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "fwigan/critic.hpp"
#include "fwigan/geometry.hpp"
#include "fwigan/propagator.hpp"
#include "fwigan/source.hpp"

namespace oracle {

struct BornResult {
  fwigan::ShotGathers data;     // forward(m)
  fwigan::ShotGathers tangent;  // d forward(m + eps dv) / d eps at eps = 0
};

/// Direct transcription of the leapfrog scheme and its tangent-linear
/// counterpart on a bounds-checked padded grid.
BornResult born(const fwigan::VelocityModel& model, std::span<const double> dv, const fwigan::Wavelet& wavelet,
                const fwigan::AcquisitionGeometry& geometry, const fwigan::SpongeProfile& sponge);

/// 3x3 zero-padded cross-correlation, x[Ci][H][W], k[Co][Ci][3][3].
std::vector<double> conv2d(std::span<const double> x, std::size_t ci, std::size_t h, std::size_t w,
                           std::span<const double> k, std::size_t co);

/// Critic score evaluated with plain loops from the parameter store.
double critic_score(const fwigan::Critic& critic, std::span<const double> x);

/// Central difference of f along unit coordinate i of x (x restored afterwards).
double central_difference(const std::function<double()>& f, double& xi, double h);

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);

double rel_diff(double a, double b);

}  // namespace oracle
