#pragma once

#include <filesystem>
#include <span>

#include "fwigan/geometry.hpp"

namespace fwigan {

/// Piecewise constant in depth. `interfaces` are strictly increasing depth
/// fractions in (0, 1); layer k spans rows [floor(f_{k-1} nz), floor(f_k nz)).
/// Needs one more velocity than interfaces.
VelocityModel layered(const Grid2D& grid, std::span<const double> interfaces, std::span<const double> velocities,
                      double v_min, double v_max);

/// Separable Gaussian blur (sigma in cells, kernel truncated at 4 sigma, edges
/// mirrored as in d c b a | a b c d | d c b a), clamped to the model bounds.
/// sigma <= 0 returns the model unchanged.
VelocityModel gaussian_smooth(const VelocityModel& model, double sigma);

/// v(z) = v0 + beta * z with z the row depth in km (row 0 at z = 0), clamped to the bounds.
VelocityModel linear_model(const Grid2D& grid, double v0, double beta_per_km, double v_min, double v_max);

/// The 40x80, 30 m, three-layer (1500/2500/3500 m/s) test model with bounds [1400, 4000].
VelocityModel desk_model();

/// Little-endian float32 row-major grid. Throws InvalidInput on a size
/// mismatch or a value outside [v_min, v_max] (naming the cell).
VelocityModel load_raw_grid(const std::filesystem::path& path, std::size_t nz, std::size_t nx, double dx_km,
                            double v_min, double v_max);
void save_raw_grid(const std::filesystem::path& path, const VelocityModel& model);

/// Raw grid plus a JSON sidecar {format_version, nz, nx, dx_km, v_min, v_max}
/// at `path` with the extension replaced by .json.
void save_model(const std::filesystem::path& path, const VelocityModel& model);
VelocityModel load_model(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace fwigan
