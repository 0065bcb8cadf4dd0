#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fwigan/geometry.hpp"
#include "fwigan/optimize.hpp"
#include "fwigan/propagator.hpp"

namespace fwigan {

inline constexpr int kFormatVersion = 1;
inline constexpr int kManifestSchemaVersion = 1;

/// Acquisition and source context stored alongside simulated gathers.
struct GatherMeta {
  Grid2D grid;
  AcquisitionGeometry geometry;
  double f_peak = 0.0;
  double source_delay = 0.0;
};

struct GatherFile {
  ShotGathers gathers;
  std::optional<GatherMeta> meta;
};

/// `path` holds little-endian float32 samples in [shot][time][receiver] order;
/// the JSON header {format_version, n_s, nt, n_g, dt_s, ...} goes next to it
/// with the extension replaced by .json.
void save_gathers(const std::filesystem::path& path, const ShotGathers& gathers,
                  const std::optional<GatherMeta>& meta = std::nullopt);
GatherFile load_gathers(const std::filesystem::path& path);

/// Hex SHA-256 of a file's bytes / of a string.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(std::string_view bytes);

nlohmann::json config_to_json(const TrainConfig& config);
/// Throws InvalidInput when a field is missing or malformed (the seed included).
TrainConfig config_from_json(const nlohmann::json& j);

nlohmann::json history_to_json(std::span<const EpochRecord> history);
/// Hash over every history field except wall time, printed with full precision.
std::string history_hash(std::span<const EpochRecord> history);

struct ManifestInput {
  std::string role;  // e.g. "observed", "init_model"
  std::filesystem::path path;
};

/// {schema_version, format_version, command, config, seed, inputs{role: {path, sha256}},
///  invocation, results, history, history_hash}
nlohmann::json save_run_manifest(const InversionRun& run, std::span<const ManifestInput> inputs,
                                 const nlohmann::json& invocation);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// Binary (P5) PGM of a row-major rows x cols field, linear min-max mapping to
/// 0..255 with round-half-up. A constant field maps to 0.
void render_heatmap(std::span<const double> values, std::size_t rows, std::size_t cols,
                    const std::filesystem::path& path);
void render_heatmap(const VelocityModel& model, const std::filesystem::path& path);
void render_heatmap(const ShotGathers& gathers, std::size_t shot, const std::filesystem::path& path);

struct NamedModel {
  std::string name;
  const VelocityModel* model;
};

/// CSV with a depth_km column followed by one column per (model, position).
/// Positions in km snap to the nearest column; positions outside the grid are rejected.
void export_profiles(std::span<const NamedModel> models, std::span<const double> lateral_km,
                     const std::filesystem::path& path);

}  // namespace fwigan
