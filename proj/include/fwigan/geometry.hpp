#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fwigan {

/// Regular 2D grid. Storage everywhere is [depth row][lateral column],
/// row-major; `dx_km` is the isotropic cell size.
struct Grid2D {
  std::size_t nz = 0;
  std::size_t nx = 0;
  double dx_km = 0.0;

  Grid2D() = default;
  Grid2D(std::size_t nz, std::size_t nx, double dx_km);

  [[nodiscard]] std::size_t cells() const { return nz * nx; }
  [[nodiscard]] double dx_m() const { return dx_km * 1000.0; }
  [[nodiscard]] std::size_t index(std::size_t iz, std::size_t ix) const { return iz * nx + ix; }

  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

/// P-wave speeds in m/s on a grid, with the clamp bounds used during inversion.
class VelocityModel {
 public:
  VelocityModel() = default;
  /// Throws InvalidInput if the values are out of bounds or the shape is wrong.
  VelocityModel(Grid2D grid, std::vector<double> values, double v_min, double v_max);
  /// Homogeneous model.
  VelocityModel(Grid2D grid, double value, double v_min, double v_max);

  [[nodiscard]] const Grid2D& grid() const { return grid_; }
  [[nodiscard]] double v_min() const { return v_min_; }
  [[nodiscard]] double v_max() const { return v_max_; }
  [[nodiscard]] std::span<const double> values() const { return values_; }
  [[nodiscard]] double at(std::size_t iz, std::size_t ix) const { return values_[grid_.index(iz, ix)]; }
  [[nodiscard]] double max_value() const;
  [[nodiscard]] double min_value() const;

  /// Raw access for optimizers; callers must re-establish the bound
  /// invariant (see clamp_model) before handing the model on.
  [[nodiscard]] std::span<double> mutable_values() { return values_; }

  friend bool operator==(const VelocityModel&, const VelocityModel&) = default;

 private:
  Grid2D grid_;
  std::vector<double> values_;
  double v_min_ = 0.0;
  double v_max_ = 0.0;
};

struct Cell {
  std::size_t iz = 0;
  std::size_t ix = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Source and receiver cells. Every shot records on the same receiver set.
struct AcquisitionGeometry {
  std::vector<Cell> sources;
  std::vector<Cell> receivers;

  [[nodiscard]] std::size_t n_shots() const { return sources.size(); }
  [[nodiscard]] std::size_t n_receivers() const { return receivers.size(); }

  /// Throws InvalidInput if any cell lies outside `grid` or a list is empty.
  void validate(const Grid2D& grid) const;

  /// Geometry restricted to the listed shots (receivers unchanged).
  [[nodiscard]] AcquisitionGeometry subset(std::span<const std::size_t> shots) const;
};

/// Evenly spaced sources along row `shot_depth` at lateral indices
/// floor(i*(nx-1)/(n-1)); a single shot sits at nx/2. One receiver per column
/// at the same depth.
AcquisitionGeometry surface_layout(const Grid2D& grid, std::size_t n_shots, std::size_t shot_depth = 0);

/// Every cell clamped into [v_min, v_max]. Idempotent.
VelocityModel clamp_model(VelocityModel model);

/// In-place variant used by the optimizer loops.
void clamp_values(std::span<double> values, double v_min, double v_max);

}  // namespace fwigan
