#include "fwigan/io.hpp"

#include <charconv>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "binary.hpp"
#include "fwigan/errors.hpp"
#include "fwigan/modelzoo.hpp"

namespace fwigan {

namespace {

using nlohmann::json;

json cells_to_json(const std::vector<Cell>& cells) {
  json out = json::array();
  for (const auto& c : cells) out.push_back({c.iz, c.ix});
  return out;
}

std::vector<Cell> cells_from_json(const json& j) {
  std::vector<Cell> out;
  for (const auto& c : j) out.push_back({c.at(0).get<std::size_t>(), c.at(1).get<std::size_t>()});
  return out;
}

template <class T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw InvalidInput(std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("bad field '") + key + "': " + e.what());
  }
}

std::string hex(const unsigned char* bytes, unsigned len) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += kDigits[bytes[i] >> 4];
    out += kDigits[bytes[i] & 15];
  }
  return out;
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

// Grid coordinates (i * dx) without the accumulated binary noise.
std::string format_coord(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json clip_to_json(const ClipRule& r) {
  const char* kind = r.kind == ClipRule::Kind::Value ? "value" : r.kind == ClipRule::Kind::Norm ? "norm" : "none";
  return {{"kind", kind}, {"limit", r.limit}};
}

ClipRule clip_from_json(const json& j) {
  const auto kind = required<std::string>(j, "kind");
  const auto limit = required<double>(j, "limit");
  if (kind == "value") return ClipRule::value(limit);
  if (kind == "norm") return ClipRule::norm(limit);
  if (kind == "none") return ClipRule::none();
  throw InvalidInput("unknown clip kind '" + kind + "'");
}

}  // namespace

// ---- gathers -------------------------------------------------------------------

void save_gathers(const std::filesystem::path& path, const ShotGathers& gathers,
                  const std::optional<GatherMeta>& meta) {
  if (gathers.data.size() != gathers.n_shots * gathers.nt * gathers.n_receivers) {
    throw InvalidInput("save_gathers: data length does not match the shape");
  }
  std::vector<float> raw(gathers.data.begin(), gathers.data.end());
  {
    auto out = detail::open_for_write(path, true);
    detail::write_le<float>(out, raw);
  }
  json header{{"format_version", kFormatVersion},
              {"n_s", gathers.n_shots},
              {"nt", gathers.nt},
              {"n_g", gathers.n_receivers},
              {"dt_s", gathers.dt}};
  if (meta) {
    header["nz"] = meta->grid.nz;
    header["nx"] = meta->grid.nx;
    header["dx_km"] = meta->grid.dx_km;
    header["sources"] = cells_to_json(meta->geometry.sources);
    header["receivers"] = cells_to_json(meta->geometry.receivers);
    header["f_peak"] = meta->f_peak;
    header["source_delay_s"] = meta->source_delay;
  }
  write_json(sidecar_path(path), header);
}

GatherFile load_gathers(const std::filesystem::path& path) {
  const auto header = read_json(sidecar_path(path));
  if (required<int>(header, "format_version") != kFormatVersion) throw InvalidInput("unsupported gather format");
  GatherFile file;
  file.gathers = ShotGathers(required<std::size_t>(header, "n_s"), required<std::size_t>(header, "nt"),
                             required<std::size_t>(header, "n_g"), required<double>(header, "dt_s"));
  const auto bytes = detail::read_file_bytes(path);
  const std::size_t expected = file.gathers.data.size() * sizeof(float);
  if (bytes.size() != expected) {
    throw InvalidInput(path.string() + ": header describes " + std::to_string(expected) + " bytes, payload has " +
                       std::to_string(bytes.size()));
  }
  const auto raw = detail::decode_le<float>(bytes);
  std::ranges::copy(raw, file.gathers.data.begin());
  if (header.contains("sources")) {
    GatherMeta meta;
    meta.grid = Grid2D(required<std::size_t>(header, "nz"), required<std::size_t>(header, "nx"),
                       required<double>(header, "dx_km"));
    meta.geometry.sources = cells_from_json(header.at("sources"));
    meta.geometry.receivers = cells_from_json(header.at("receivers"));
    meta.f_peak = required<double>(header, "f_peak");
    meta.source_delay = required<double>(header, "source_delay_s");
    meta.geometry.validate(meta.grid);
    file.meta = std::move(meta);
  }
  return file;
}

// ---- hashing and manifests ---------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalFailure("SHA-256 computation failed");
  }
  return hex(digest, len);
}

std::string sha256_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  return sha256_hex(std::string_view(bytes.data(), bytes.size()));
}

json config_to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"n_critic", c.n_critic},
          {"lr_v", c.lr_v},
          {"lr_c", c.lr_c},
          {"lr_f", c.lr_f},
          {"lr_snr", c.lr_snr},
          {"lambda", c.lambda},
          {"clip_v", clip_to_json(c.clip_v)},
          {"clip_c", clip_to_json(c.clip_c)},
          {"milestones", c.milestones},
          {"gamma", c.gamma},
          {"seed", c.seed},
          {"learn_source", c.learn_source},
          {"learn_noise", c.learn_noise},
          {"init_snr_db", c.init_snr_db},
          {"scale_critic_input", c.scale_critic_input},
          {"critic_base_channels", c.critic_base_channels},
          {"critic_fc_width", c.critic_fc_width},
          {"sponge_width", c.sponge_width},
          {"threads", c.threads}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.mode = parse_mode(required<std::string>(j, "mode"));
  c.epochs = required<std::size_t>(j, "epochs");
  c.batch_size = required<std::size_t>(j, "batch_size");
  c.n_critic = required<std::size_t>(j, "n_critic");
  c.lr_v = required<double>(j, "lr_v");
  c.lr_c = required<double>(j, "lr_c");
  c.lr_f = required<double>(j, "lr_f");
  c.lr_snr = required<double>(j, "lr_snr");
  c.lambda = required<double>(j, "lambda");
  c.clip_v = clip_from_json(required<json>(j, "clip_v"));
  c.clip_c = clip_from_json(required<json>(j, "clip_c"));
  c.milestones = required<std::vector<std::size_t>>(j, "milestones");
  c.gamma = required<double>(j, "gamma");
  c.seed = required<std::uint64_t>(j, "seed");
  c.learn_source = required<bool>(j, "learn_source");
  c.learn_noise = required<bool>(j, "learn_noise");
  c.init_snr_db = required<double>(j, "init_snr_db");
  c.scale_critic_input = required<bool>(j, "scale_critic_input");
  c.critic_base_channels = required<std::size_t>(j, "critic_base_channels");
  c.critic_fc_width = required<std::size_t>(j, "critic_fc_width");
  c.sponge_width = required<std::size_t>(j, "sponge_width");
  c.threads = required<unsigned>(j, "threads");
  return c;
}

json history_to_json(std::span<const EpochRecord> history) {
  json out = json::array();
  for (const auto& r : history) {
    json row{{"epoch", r.epoch},       {"loss", r.loss},     {"critic_loss", r.critic_loss},
             {"lr_v", r.lr_v},         {"f_peak", r.f_peak}, {"wall_ms", r.wall_ms}};
    if (r.snr_db) row["snr_db"] = *r.snr_db;
    if (r.ssim) row["ssim"] = *r.ssim;
    if (r.error) row["error"] = *r.error;
    out.push_back(std::move(row));
  }
  return out;
}

std::string history_hash(std::span<const EpochRecord> history) {
  std::string text;
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("-"); };
  for (const auto& r : history) {
    text += std::to_string(r.epoch) + "," + format_double(r.loss) + "," + format_double(r.critic_loss) + "," +
            format_double(r.lr_v) + "," + format_double(r.f_peak) + "," + opt(r.snr_db) + "," + opt(r.ssim) + "," +
            opt(r.error) + "\n";
  }
  return sha256_hex(text);
}

json save_run_manifest(const InversionRun& run, std::span<const ManifestInput> inputs, const json& invocation) {
  json manifest{{"schema_version", kManifestSchemaVersion},
                {"format_version", kFormatVersion},
                {"command", "invert"},
                {"config", config_to_json(run.config)},
                {"seed", run.config.seed},
                {"invocation", invocation}};
  json files = json::object();
  for (const auto& in : inputs) files[in.role] = {{"path", in.path.string()}, {"sha256", sha256_file(in.path)}};
  manifest["inputs"] = files;
  json results{{"f_peak", run.f_peak}};
  if (run.snr_db) results["snr_db"] = *run.snr_db;
  manifest["results"] = results;
  manifest["history"] = history_to_json(run.history);
  manifest["history_hash"] = history_hash(run.history);
  return manifest;
}

void write_json(const std::filesystem::path& path, const json& j) {
  auto out = detail::open_for_write(path, false);
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("malformed JSON in " + path.string() + ": " + e.what());
  }
}

// ---- figures --------------------------------------------------------------------

void render_heatmap(std::span<const double> values, std::size_t rows, std::size_t cols,
                    const std::filesystem::path& path) {
  if (rows == 0 || cols == 0 || values.size() != rows * cols) throw InvalidInput("render_heatmap: bad dimensions");
  const auto [lo, hi] = std::ranges::minmax(values);
  const double range = hi - lo;
  std::string pixels(values.size(), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = range > 0.0 ? (values[i] - lo) / range : 0.0;
    pixels[i] = static_cast<char>(static_cast<unsigned char>(std::min(255.0, std::floor(t * 255.0 + 0.5))));
  }
  auto out = detail::open_for_write(path, true);
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw InvalidInput("write failed: " + path.string());
}

void render_heatmap(const VelocityModel& model, const std::filesystem::path& path) {
  render_heatmap(model.values(), model.grid().nz, model.grid().nx, path);
}

void render_heatmap(const ShotGathers& gathers, std::size_t shot, const std::filesystem::path& path) {
  if (shot >= gathers.n_shots) throw InvalidInput("render_heatmap: no shot " + std::to_string(shot));
  render_heatmap(gathers.shot(shot), gathers.nt, gathers.n_receivers, path);
}

void export_profiles(std::span<const NamedModel> models, std::span<const double> lateral_km,
                     const std::filesystem::path& path) {
  if (models.empty() || lateral_km.empty()) throw InvalidInput("export_profiles: need models and positions");
  const Grid2D& grid = models.front().model->grid();
  for (const auto& m : models) {
    if (!(m.model->grid() == grid)) throw InvalidInput("export_profiles: models on different grids");
  }
  std::vector<std::size_t> columns;
  const double width_km = static_cast<double>(grid.nx - 1) * grid.dx_km;
  for (double x : lateral_km) {
    if (!(x >= 0.0) || x > width_km + 0.5 * grid.dx_km) {
      throw InvalidInput("lateral position " + format_coord(x) + " km is outside [0, " + format_coord(width_km) +
                         "] km");
    }
    columns.push_back(std::min(grid.nx - 1, static_cast<std::size_t>(std::lround(x / grid.dx_km))));
  }
  auto out = detail::open_for_write(path, false);
  out << "depth_km";
  for (const auto& m : models) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      out << ',' << m.name << "@" << format_coord(static_cast<double>(columns[k]) * grid.dx_km) << "km";
    }
  }
  out << '\n';
  for (std::size_t iz = 0; iz < grid.nz; ++iz) {
    out << format_coord(static_cast<double>(iz) * grid.dx_km);
    for (const auto& m : models) {
      for (std::size_t ix : columns) out << ',' << format_double(m.model->at(iz, ix));
    }
    out << '\n';
  }
}

}  // namespace fwigan
