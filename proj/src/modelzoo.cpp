#include "fwigan/modelzoo.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "binary.hpp"
#include "fwigan/errors.hpp"

namespace fwigan {

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(4.0 * sigma + 0.5);
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& v : k) v /= total;
  return k;
}

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  std::ptrdiff_t k = i % period;
  if (k < 0) k += period;
  if (k >= static_cast<std::ptrdiff_t>(n)) k = period - 1 - k;
  return static_cast<std::size_t>(k);
}

// Blurs along one axis of a row-major [rows][cols] array.
std::vector<double> blur_axis(const std::vector<double>& in, std::size_t rows, std::size_t cols,
                              const std::vector<double>& kernel, bool along_rows) {
  const auto radius = static_cast<std::ptrdiff_t>(kernel.size() / 2);
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (std::ptrdiff_t o = -radius; o <= radius; ++o) {
        const double w = kernel[static_cast<std::size_t>(o + radius)];
        if (along_rows) {
          acc += w * in[mirror(static_cast<std::ptrdiff_t>(r) + o, rows) * cols + c];
        } else {
          acc += w * in[r * cols + mirror(static_cast<std::ptrdiff_t>(c) + o, cols)];
        }
      }
      out[r * cols + c] = acc;
    }
  }
  return out;
}

}  // namespace

VelocityModel layered(const Grid2D& grid, std::span<const double> interfaces, std::span<const double> velocities,
                      double v_min, double v_max) {
  if (velocities.size() != interfaces.size() + 1) {
    throw InvalidInput("layered: need " + std::to_string(interfaces.size() + 1) + " velocities, got " +
                       std::to_string(velocities.size()));
  }
  for (std::size_t k = 0; k < interfaces.size(); ++k) {
    if (!(interfaces[k] > 0.0 && interfaces[k] < 1.0) || (k > 0 && !(interfaces[k] > interfaces[k - 1]))) {
      throw InvalidInput("layered: interfaces must be strictly increasing inside (0, 1)");
    }
  }
  std::vector<double> values(grid.cells());
  std::size_t layer = 0;
  for (std::size_t iz = 0; iz < grid.nz; ++iz) {
    while (layer < interfaces.size() &&
           iz >= static_cast<std::size_t>(std::floor(interfaces[layer] * static_cast<double>(grid.nz)))) {
      ++layer;
    }
    std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(iz * grid.nx), grid.nx, velocities[layer]);
  }
  return {grid, std::move(values), v_min, v_max};
}

VelocityModel gaussian_smooth(const VelocityModel& model, double sigma) {
  if (!(sigma > 0.0)) return model;
  const auto& g = model.grid();
  const auto kernel = gaussian_kernel(sigma);
  std::vector<double> values(model.values().begin(), model.values().end());
  values = blur_axis(values, g.nz, g.nx, kernel, true);
  values = blur_axis(values, g.nz, g.nx, kernel, false);
  clamp_values(values, model.v_min(), model.v_max());
  return {g, std::move(values), model.v_min(), model.v_max()};
}

VelocityModel linear_model(const Grid2D& grid, double v0, double beta_per_km, double v_min, double v_max) {
  std::vector<double> values(grid.cells());
  for (std::size_t iz = 0; iz < grid.nz; ++iz) {
    const double v = v0 + beta_per_km * static_cast<double>(iz) * grid.dx_km;
    std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(iz * grid.nx), grid.nx, v);
  }
  clamp_values(values, v_min, v_max);
  return {grid, std::move(values), v_min, v_max};
}

VelocityModel desk_model() {
  constexpr std::array interfaces{1.0 / 3.0, 2.0 / 3.0};
  constexpr std::array velocities{1500.0, 2500.0, 3500.0};
  return layered(Grid2D(40, 80, 0.03), interfaces, velocities, 1400.0, 4000.0);
}

VelocityModel load_raw_grid(const std::filesystem::path& path, std::size_t nz, std::size_t nx, double dx_km,
                            double v_min, double v_max) {
  const Grid2D grid(nz, nx, dx_km);
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() != grid.cells() * sizeof(float)) {
    throw InvalidInput(path.string() + ": expected " + std::to_string(grid.cells() * sizeof(float)) +
                       " bytes for a " + std::to_string(nz) + "x" + std::to_string(nx) + " grid, found " +
                       std::to_string(bytes.size()));
  }
  const auto raw = detail::decode_le<float>(bytes);
  return {grid, std::vector<double>(raw.begin(), raw.end()), v_min, v_max};
}

void save_raw_grid(const std::filesystem::path& path, const VelocityModel& model) {
  std::vector<float> raw(model.values().begin(), model.values().end());
  auto out = detail::open_for_write(path, true);
  detail::write_le<float>(out, raw);
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  return p.replace_extension(".json");
}

void save_model(const std::filesystem::path& path, const VelocityModel& model) {
  save_raw_grid(path, model);
  const auto& g = model.grid();
  nlohmann::json header{{"format_version", 1}, {"nz", g.nz},           {"nx", g.nx},
                        {"dx_km", g.dx_km},    {"v_min", model.v_min()}, {"v_max", model.v_max()}};
  auto out = detail::open_for_write(sidecar_path(path), false);
  out << header.dump(2) << '\n';
}

VelocityModel load_model(const std::filesystem::path& path) {
  const auto side = sidecar_path(path);
  std::ifstream in(side);
  if (!in) throw InvalidInput("missing model sidecar " + side.string());
  try {
    const auto header = nlohmann::json::parse(in);
    return load_raw_grid(path, header.at("nz").get<std::size_t>(), header.at("nx").get<std::size_t>(),
                         header.at("dx_km").get<double>(), header.at("v_min").get<double>(),
                         header.at("v_max").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("malformed model sidecar " + side.string() + ": " + e.what());
  }
}

}  // namespace fwigan
