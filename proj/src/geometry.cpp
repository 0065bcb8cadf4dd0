#include "fwigan/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fwigan/errors.hpp"

namespace fwigan {

Grid2D::Grid2D(std::size_t nz_, std::size_t nx_, double dx_km_) : nz(nz_), nx(nx_), dx_km(dx_km_) {
  if (nz == 0 || nx == 0) {
    throw InvalidInput("grid must be non-empty, got " + std::to_string(nz) + "x" + std::to_string(nx));
  }
  if (!(dx_km > 0.0) || !std::isfinite(dx_km)) {
    throw InvalidInput("grid spacing must be positive");
  }
}

VelocityModel::VelocityModel(Grid2D grid, std::vector<double> values, double v_min, double v_max)
    : grid_(grid), values_(std::move(values)), v_min_(v_min), v_max_(v_max) {
  if (!(v_min_ > 0.0) || !(v_max_ >= v_min_) || !std::isfinite(v_max_)) {
    throw InvalidInput("velocity bounds must satisfy 0 < v_min <= v_max");
  }
  if (values_.size() != grid_.cells()) {
    throw InvalidInput("velocity array has " + std::to_string(values_.size()) + " values, grid needs " +
                       std::to_string(grid_.cells()));
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!std::isfinite(v) || v < v_min_ || v > v_max_) {
      throw InvalidInput("velocity " + std::to_string(v) + " at cell (" + std::to_string(i / grid_.nx) + ", " +
                         std::to_string(i % grid_.nx) + ") outside [" + std::to_string(v_min_) + ", " +
                         std::to_string(v_max_) + "]");
    }
  }
}

VelocityModel::VelocityModel(Grid2D grid, double value, double v_min, double v_max)
    : VelocityModel(grid, std::vector<double>(grid.cells(), value), v_min, v_max) {}

double VelocityModel::max_value() const { return *std::ranges::max_element(values_); }

double VelocityModel::min_value() const { return *std::ranges::min_element(values_); }

void AcquisitionGeometry::validate(const Grid2D& grid) const {
  if (sources.empty()) throw InvalidInput("acquisition needs at least one source");
  if (receivers.empty()) throw InvalidInput("acquisition needs at least one receiver");
  auto check = [&](const Cell& c, const char* what) {
    if (c.iz >= grid.nz || c.ix >= grid.nx) {
      throw InvalidInput(std::string(what) + " cell (" + std::to_string(c.iz) + ", " + std::to_string(c.ix) +
                         ") outside the grid");
    }
  };
  for (const auto& c : sources) check(c, "source");
  for (const auto& c : receivers) check(c, "receiver");
}

AcquisitionGeometry AcquisitionGeometry::subset(std::span<const std::size_t> shots) const {
  AcquisitionGeometry out;
  out.receivers = receivers;
  out.sources.reserve(shots.size());
  for (std::size_t s : shots) {
    if (s >= sources.size()) throw InvalidInput("shot index " + std::to_string(s) + " out of range");
    out.sources.push_back(sources[s]);
  }
  return out;
}

AcquisitionGeometry surface_layout(const Grid2D& grid, std::size_t n_shots, std::size_t shot_depth) {
  if (n_shots == 0) throw InvalidInput("need at least one shot");
  if (n_shots > grid.nx) {
    throw InvalidInput("cannot place " + std::to_string(n_shots) + " shots on " + std::to_string(grid.nx) +
                       " columns");
  }
  if (shot_depth >= grid.nz) throw InvalidInput("shot depth below the grid");

  AcquisitionGeometry g;
  g.sources.reserve(n_shots);
  if (n_shots == 1) {
    g.sources.push_back({shot_depth, grid.nx / 2});
  } else {
    for (std::size_t i = 0; i < n_shots; ++i) {
      g.sources.push_back({shot_depth, i * (grid.nx - 1) / (n_shots - 1)});
    }
  }
  g.receivers.reserve(grid.nx);
  for (std::size_t ix = 0; ix < grid.nx; ++ix) g.receivers.push_back({shot_depth, ix});
  return g;
}

void clamp_values(std::span<double> values, double v_min, double v_max) {
  for (double& v : values) v = std::clamp(v, v_min, v_max);
}

VelocityModel clamp_model(VelocityModel model) {
  clamp_values(model.mutable_values(), model.v_min(), model.v_max());
  return model;
}

}  // namespace fwigan
