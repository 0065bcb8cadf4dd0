#include "fwigan/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fwigan/errors.hpp"
#include "fwigan/io.hpp"
#include "fwigan/losses.hpp"
#include "fwigan/metrics.hpp"
#include "fwigan/modelzoo.hpp"
#include "fwigan/optimize.hpp"
#include "fwigan/parallel.hpp"
#include "fwigan/source.hpp"

namespace fwigan {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

unsigned resolve_threads(unsigned flag) {
  if (const char* env = std::getenv("FWIGAN_THREADS"); env && *env) {
    try {
      flag = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      throw InvalidInput(std::string("FWIGAN_THREADS is not a number: ") + env);
    }
  }
  return flag == 0 ? default_threads() : flag;
}

fs::path with_suffix(const fs::path& path, const std::string& suffix) {
  auto p = path;
  p.replace_extension();
  p += suffix;
  return p;
}

// Manifest for the small commands: arguments, hashed inputs, hashed output.
void write_command_manifest(const std::string& command, json args, const std::vector<std::string>& inputs,
                            const fs::path& output) {
  json hashed = json::array();
  for (const auto& in : inputs) hashed.push_back({{"path", in}, {"sha256", sha256_file(in)}});
  write_json(with_suffix(output, ".manifest.json"),
             {{"schema_version", kManifestSchemaVersion},
              {"format_version", kFormatVersion},
              {"command", command},
              {"seed", 0},
              {"args", std::move(args)},
              {"inputs", std::move(hashed)},
              {"output", {{"path", output.string()}, {"sha256", sha256_file(output)}}}});
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// ---- model ---------------------------------------------------------------------

struct ModelArgs {
  std::string kind = "desk";
  std::size_t nz = 40, nx = 80;
  double dx_km = 0.03;
  std::vector<double> interfaces;
  std::vector<double> velocities;
  double v0 = 1500.0, beta = 500.0;
  std::string in;
  double sigma = 8.0;
  double v_min = 1400.0, v_max = 4000.0;
  std::string out;
};

void cmd_model(const ModelArgs& a, std::ostream& out) {
  VelocityModel model;
  if (a.kind == "desk") {
    model = desk_model();
  } else if (a.kind == "layered") {
    model = layered(Grid2D(a.nz, a.nx, a.dx_km), a.interfaces, a.velocities, a.v_min, a.v_max);
  } else if (a.kind == "linear") {
    model = linear_model(Grid2D(a.nz, a.nx, a.dx_km), a.v0, a.beta, a.v_min, a.v_max);
  } else if (a.kind == "smooth") {
    if (a.in.empty()) throw InvalidInput("--kind smooth needs --in");
    model = gaussian_smooth(load_model(a.in), a.sigma);
  } else {
    throw InvalidInput("unknown model kind '" + a.kind + "'");
  }
  ensure_parent(a.out);
  save_model(a.out, model);
  write_command_manifest("model",
                         {{"kind", a.kind},
                          {"nz", a.nz},
                          {"nx", a.nx},
                          {"dx_km", a.dx_km},
                          {"interfaces", a.interfaces},
                          {"velocities", a.velocities},
                          {"v0", a.v0},
                          {"beta", a.beta},
                          {"sigma", a.sigma},
                          {"v_min", a.v_min},
                          {"v_max", a.v_max}},
                         a.kind == "smooth" ? std::vector<std::string>{a.in} : std::vector<std::string>{}, a.out);
  out << "wrote " << a.out << " (" << model.grid().nz << "x" << model.grid().nx << ")\n";
}

// ---- simulate -------------------------------------------------------------------

struct SimulateArgs {
  std::string model;
  double f = 7.0;
  std::size_t shots = 8;
  std::size_t nt = 1000;
  double dt = 0.003;
  std::size_t shot_depth = 0;
  std::optional<double> t0;
  std::size_t sponge_width = kDefaultSpongeWidth;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;
};

void cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  const VelocityModel model = a.model == "desk" ? desk_model() : load_model(a.model);
  const auto geometry = surface_layout(model.grid(), a.shots, a.shot_depth);
  const auto wavelet = ricker(a.f, a.nt, a.dt, a.t0);
  const auto sponge = SpongeProfile::make(a.sponge_width, model.v_max(), model.grid().dx_m());
  const auto result = forward(model, wavelet, geometry, sponge, false, resolve_threads(a.threads));
  ensure_parent(a.out);
  save_gathers(a.out, result.gathers, GatherMeta{model.grid(), geometry, a.f, wavelet.t0});

  json manifest{{"schema_version", kManifestSchemaVersion},
                {"format_version", kFormatVersion},
                {"command", "simulate"},
                {"seed", a.seed},
                {"args",
                 {{"model", a.model},
                  {"wavelet_f", a.f},
                  {"shots", a.shots},
                  {"nt", a.nt},
                  {"dt", a.dt},
                  {"shot_depth", a.shot_depth},
                  {"t0", wavelet.t0},
                  {"sponge_width", a.sponge_width}}},
                {"output", {{"path", a.out}, {"sha256", sha256_file(a.out)}}}};
  if (a.model != "desk") manifest["inputs"] = {{"model", {{"path", a.model}, {"sha256", sha256_file(a.model)}}}};
  write_json(with_suffix(a.out, ".manifest.json"), manifest);
  out << "wrote " << a.out << " (" << a.shots << " shots x " << a.nt << " samples x "
      << geometry.n_receivers() << " receivers)\n";
}

// ---- add-noise ------------------------------------------------------------------

struct NoiseArgs {
  std::string in;
  double snr_db = 10.0;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_add_noise(const NoiseArgs& a, std::ostream& out) {
  const auto file = load_gathers(a.in);
  const auto noisy = add_awgn(file.gathers, a.snr_db, a.seed);
  ensure_parent(a.out);
  save_gathers(a.out, noisy, file.meta);
  const double realized = snr_db(file.gathers, noisy);
  write_json(with_suffix(a.out, ".manifest.json"),
             {{"schema_version", kManifestSchemaVersion},
              {"format_version", kFormatVersion},
              {"command", "add-noise"},
              {"seed", a.seed},
              {"args", {{"in", a.in}, {"snr_db", a.snr_db}}},
              {"inputs", {{"gathers", {{"path", a.in}, {"sha256", sha256_file(a.in)}}}}},
              {"realized_snr_db", realized},
              {"output", {{"path", a.out}, {"sha256", sha256_file(a.out)}}}});
  out << "wrote " << a.out << " (snr " << realized << " dB)\n";
}

// ---- invert ---------------------------------------------------------------------

struct InvertArgs {
  std::string mode = "fwigan";
  std::string obs;
  std::string init_model = "smoothed";
  std::string init_file;
  std::string truth;
  double init_sigma = 8.0;
  double linear_v0 = 1500.0;
  double linear_beta = 500.0;
  std::optional<double> v_min, v_max;
  std::optional<double> f_init;
  std::optional<std::size_t> epochs, batch, n_critic;
  std::optional<double> lambda, lr_v, lr_c, lr_f, lr_snr;
  bool learn_noise = false;
  bool learn_source = false;
  double init_snr = 20.0;
  bool unit_mass_critic_input = false;
  std::size_t critic_channels = 32;
  std::size_t critic_fc = 2000;
  std::optional<std::size_t> sponge_width;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir;
  std::string from_manifest;
};

json invocation_json(const InvertArgs& a) {
  json j{{"obs", a.obs},
         {"init_model", a.init_model},
         {"init_file", a.init_file},
         {"truth", a.truth},
         {"init_sigma", a.init_sigma},
         {"linear_v0", a.linear_v0},
         {"linear_beta", a.linear_beta}};
  j["v_min"] = a.v_min ? json(*a.v_min) : json(nullptr);
  j["v_max"] = a.v_max ? json(*a.v_max) : json(nullptr);
  j["f_init"] = a.f_init ? json(*a.f_init) : json(nullptr);
  return j;
}

void apply_invocation(const json& j, InvertArgs& a) {
  try {
    a.obs = j.at("obs").get<std::string>();
    a.init_model = j.at("init_model").get<std::string>();
    a.init_file = j.at("init_file").get<std::string>();
    a.truth = j.at("truth").get<std::string>();
    a.init_sigma = j.at("init_sigma").get<double>();
    a.linear_v0 = j.at("linear_v0").get<double>();
    a.linear_beta = j.at("linear_beta").get<double>();
    auto opt = [&](const char* key) -> std::optional<double> {
      return j.at(key).is_null() ? std::nullopt : std::optional<double>(j.at(key).get<double>());
    };
    a.v_min = opt("v_min");
    a.v_max = opt("v_max");
    a.f_init = opt("f_init");
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("manifest invocation is incomplete: ") + e.what());
  }
}

TrainConfig config_from_flags(const InvertArgs& a) {
  const Mode mode = parse_mode(a.mode);
  TrainConfig c = mode == Mode::Fwi ? TrainConfig::fwi_defaults() : TrainConfig::fwigan_defaults(a.learn_noise);
  if (a.epochs) c.epochs = *a.epochs;
  if (a.batch) c.batch_size = *a.batch;
  if (a.n_critic) c.n_critic = *a.n_critic;
  if (a.lambda) c.lambda = *a.lambda;
  if (a.lr_v) c.lr_v = *a.lr_v;
  if (a.lr_c) c.lr_c = *a.lr_c;
  if (a.lr_f) c.lr_f = *a.lr_f;
  if (a.lr_snr) c.lr_snr = *a.lr_snr;
  c.learn_noise = a.learn_noise;
  c.learn_source = a.learn_source;
  c.init_snr_db = a.init_snr;
  c.scale_critic_input = !a.unit_mass_critic_input;
  c.critic_base_channels = a.critic_channels;
  c.critic_fc_width = a.critic_fc;
  if (a.sponge_width) c.sponge_width = *a.sponge_width;
  c.seed = a.seed;
  if (mode == Mode::Fwi && a.learn_noise) throw InvalidInput("--learn-noise applies to fwigan mode only");
  return c;
}

VelocityModel initial_model(const InvertArgs& a, const Grid2D& grid, const std::optional<VelocityModel>& truth) {
  if (a.init_model == "smoothed") {
    if (!truth) throw InvalidInput("--init-model smoothed needs --truth to smooth");
    return gaussian_smooth(*truth, a.init_sigma);
  }
  const double lo = a.v_min.value_or(truth ? truth->v_min() : 1000.0);
  const double hi = a.v_max.value_or(truth ? truth->v_max() : 6000.0);
  if (a.init_model == "linear") return linear_model(grid, a.linear_v0, a.linear_beta, lo, hi);
  if (a.init_model == "file") {
    if (a.init_file.empty()) throw InvalidInput("--init-model file needs --init-file");
    return load_model(a.init_file);
  }
  throw InvalidInput("unknown --init-model '" + a.init_model + "' (expected smoothed, linear or file)");
}

void write_csvs(const fs::path& dir, const InversionRun& run, const std::optional<MetricReport>& initial) {
  std::ofstream losses(dir / "losses.csv");
  losses << "epoch,loss,critic_loss,lr_v,f_peak,snr_db,wall_ms\n";
  losses.precision(17);
  for (const auto& r : run.history) {
    losses << r.epoch << ',' << r.loss << ',' << r.critic_loss << ',' << r.lr_v << ',' << r.f_peak << ','
           << (r.snr_db ? std::to_string(*r.snr_db) : "") << ',' << r.wall_ms << '\n';
  }
  if (!initial) return;
  std::ofstream metrics(dir / "metrics.csv");
  metrics.precision(17);
  metrics << "epoch,ssim,error\n";
  metrics << "init," << initial->ssim << ',' << initial->error << '\n';
  for (const auto& r : run.history) metrics << r.epoch << ',' << r.ssim.value_or(0) << ',' << r.error.value_or(0) << '\n';
}

void cmd_invert(InvertArgs a, std::ostream& out) {
  std::optional<TrainConfig> config;
  if (!a.from_manifest.empty()) {
    const auto manifest = read_json(a.from_manifest);
    if (!manifest.contains("seed")) throw InvalidInput("manifest has no seed; cannot reproduce the run");
    if (!manifest.contains("config") || !manifest.contains("invocation")) {
      throw InvalidInput("manifest lacks config or invocation");
    }
    config = config_from_json(manifest.at("config"));
    if (manifest.at("seed").get<std::uint64_t>() != config->seed) throw InvalidInput("manifest seed disagrees with config");
    apply_invocation(manifest.at("invocation"), a);
    const json inputs = manifest.value("inputs", json::object());
    for (const auto& [role, entry] : inputs.items()) {
      const auto path = entry.at("path").get<std::string>();
      if (sha256_file(path) != entry.at("sha256").get<std::string>()) {
        throw InvalidInput("input '" + role + "' (" + path + ") changed since the manifest was written");
      }
    }
  } else {
    config = config_from_flags(a);
  }
  if (a.out_dir.empty()) throw InvalidInput("--out-dir is required");
  config->threads = resolve_threads(a.threads);

  const auto obs = load_gathers(a.obs);
  if (!obs.meta) throw InvalidInput(a.obs + " has no acquisition header; simulate it with this tool");
  std::optional<VelocityModel> truth;
  if (!a.truth.empty()) truth = load_model(a.truth);
  if (truth && !(truth->grid() == obs.meta->grid)) throw InvalidInput("--truth grid differs from the data's grid");

  InversionProblem problem;
  problem.observed = obs.gathers;
  problem.geometry = obs.meta->geometry;
  problem.initial = initial_model(a, obs.meta->grid, truth);
  if (!(problem.initial.grid() == obs.meta->grid)) throw InvalidInput("initial model grid differs from the data's grid");
  problem.f_init = a.f_init.value_or(obs.meta->f_peak);
  problem.source_delay = obs.meta->source_delay;
  problem.truth = truth;
  config->validate(problem.observed.n_shots);

  const fs::path dir = a.out_dir;
  fs::create_directories(dir);
  save_model(dir / "init.f32", problem.initial);
  std::ofstream log(dir / "log.jsonl");
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRecord& r) {
    json rec{{"epoch", r.epoch}, {"lr_v", r.lr_v}, {"wall_ms", r.wall_ms}};
    if (config->mode == Mode::Fwi) {
      rec["misfit"] = r.loss;
    } else {
      rec["gen_loss"] = r.loss;
      rec["critic_loss"] = r.critic_loss;
    }
    if (r.snr_db) rec["snr_db"] = *r.snr_db;
    if (config->learn_source) rec["f_peak"] = r.f_peak;
    if (r.ssim) rec["ssim"] = *r.ssim;
    if (r.error) rec["error"] = *r.error;
    log << rec.dump() << '\n' << std::flush;
  };

  const auto run = config->mode == Mode::Fwi ? run_fwi(*config, problem, hooks) : run_fwigan(*config, problem, hooks);

  save_model(dir / "model.f32", run.model);
  render_heatmap(run.model, dir / "model.pgm");
  render_heatmap(problem.initial, dir / "init.pgm");
  std::optional<MetricReport> initial;
  if (truth) {
    render_heatmap(*truth, dir / "truth.pgm");
    initial = evaluate(problem.initial, *truth);
  }
  write_csvs(dir, run, initial);
  json estimates{{"f_peak", run.f_peak}};
  if (run.snr_db) estimates["snr_db"] = *run.snr_db;
  if (truth) {
    const auto final_report = evaluate(run.model, *truth);
    estimates["ssim"] = final_report.ssim;
    estimates["error"] = final_report.error;
  }
  write_json(dir / "estimates.json", estimates);
  if (run.critic) run.critic->save(dir / "critic");

  std::vector<ManifestInput> inputs{{"observed", a.obs}};
  if (!a.truth.empty()) inputs.push_back({"truth", a.truth});
  if (a.init_model == "file") inputs.push_back({"init_model", a.init_file});
  write_json(dir / "manifest.json", save_run_manifest(run, inputs, invocation_json(a)));
  out << "wrote " << (dir / "model.f32").string() << " after " << run.history.size() << " epochs";
  if (truth) out << " (ssim " << estimates["ssim"].get<double>() << ", error " << estimates["error"].get<double>() << ")";
  out << '\n';
}

// ---- metrics, render, profiles ----------------------------------------------------

void cmd_metrics(const std::string& truth_path, const std::string& candidate_path, std::ostream& out) {
  const auto truth = load_model(truth_path);
  const auto candidate = load_model(candidate_path);
  const auto report = evaluate(candidate, truth);
  out << json{{"ssim", report.ssim}, {"error", report.error}}.dump() << '\n';
}

void cmd_render(const std::string& model, const std::string& gathers, std::size_t shot, const std::string& path) {
  if (model.empty() == gathers.empty()) throw InvalidInput("render needs exactly one of --model or --gathers");
  ensure_parent(path);
  if (!model.empty()) {
    render_heatmap(load_model(model), path);
  } else {
    render_heatmap(load_gathers(gathers).gathers, shot, path);
  }
  write_command_manifest("render", {{"model", model}, {"gathers", gathers}, {"shot", shot}},
                         {model.empty() ? gathers : model}, path);
}

void cmd_profiles(const std::vector<std::string>& paths, const std::vector<double>& positions, const std::string& path) {
  std::vector<VelocityModel> models;
  for (const auto& p : paths) models.push_back(load_model(p));
  std::vector<NamedModel> named;
  for (std::size_t i = 0; i < models.size(); ++i) named.push_back({fs::path(paths[i]).stem().string(), &models[i]});
  ensure_parent(path);
  export_profiles(named, positions, path);
  write_command_manifest("profiles", {{"models", paths}, {"positions", positions}}, paths, path);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial and least-squares full-waveform inversion on 2D acoustic models", "fwigan"};
  app.require_subcommand(1);

  ModelArgs model_args;
  auto* model = app.add_subcommand("model", "Write a velocity model (desk, layered, linear, or a smoothed copy)");
  model->add_option("--kind", model_args.kind, "desk | layered | linear | smooth")->capture_default_str();
  model->add_option("--nz", model_args.nz)->capture_default_str();
  model->add_option("--nx", model_args.nx)->capture_default_str();
  model->add_option("--dx", model_args.dx_km, "cell size in km")->capture_default_str();
  model->add_option("--interfaces", model_args.interfaces, "depth fractions in (0,1)")->delimiter(',');
  model->add_option("--velocities", model_args.velocities, "layer velocities in m/s")->delimiter(',');
  model->add_option("--v0", model_args.v0, "linear: surface velocity (m/s)")->capture_default_str();
  model->add_option("--beta", model_args.beta, "linear: gradient (m/s per km)")->capture_default_str();
  model->add_option("--in", model_args.in, "smooth: input model");
  model->add_option("--sigma", model_args.sigma, "smooth: Gaussian sigma in cells")->capture_default_str();
  model->add_option("--v-min", model_args.v_min)->capture_default_str();
  model->add_option("--v-max", model_args.v_max)->capture_default_str();
  model->add_option("--out", model_args.out, "output .f32 path")->required();

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Model observed shot gathers");
  simulate->add_option("--model", sim_args.model, "model .f32 path, or 'desk'")->required();
  simulate->add_option("--wavelet-f", sim_args.f, "Ricker peak frequency (Hz)")->capture_default_str();
  simulate->add_option("--shots", sim_args.shots)->capture_default_str();
  simulate->add_option("--nt", sim_args.nt)->capture_default_str();
  simulate->add_option("--dt", sim_args.dt, "time step (s)")->capture_default_str();
  simulate->add_option("--shot-depth", sim_args.shot_depth, "source/receiver row")->capture_default_str();
  simulate->add_option("--t0", sim_args.t0, "source delay (s); default 1/f on the sample grid");
  simulate->add_option("--sponge-width", sim_args.sponge_width)->capture_default_str();
  simulate->add_option("--seed", sim_args.seed)->capture_default_str();
  simulate->add_option("--threads", sim_args.threads, "0 = all cores; FWIGAN_THREADS overrides")->capture_default_str();
  simulate->add_option("--out", sim_args.out, "output .f32 path")->required();

  NoiseArgs noise_args;
  auto* noise = app.add_subcommand("add-noise", "Add white Gaussian noise at an exact SNR");
  noise->add_option("--in", noise_args.in)->required();
  noise->add_option("--snr-db", noise_args.snr_db)->required();
  noise->add_option("--seed", noise_args.seed)->capture_default_str();
  noise->add_option("--out", noise_args.out)->required();

  InvertArgs inv;
  auto* invert = app.add_subcommand("invert", "Run FWI or FWIGAN");
  invert->add_option("--mode", inv.mode, "fwi | fwigan")->capture_default_str();
  invert->add_option("--obs", inv.obs, "observed gathers (.f32 with header)");
  invert->add_option("--init-model", inv.init_model, "smoothed | linear | file")->capture_default_str();
  invert->add_option("--init-file", inv.init_file);
  invert->add_option("--init-sigma", inv.init_sigma, "smoothing sigma in cells")->capture_default_str();
  invert->add_option("--linear-v0", inv.linear_v0)->capture_default_str();
  invert->add_option("--linear-beta", inv.linear_beta, "m/s per km")->capture_default_str();
  invert->add_option("--v-min", inv.v_min);
  invert->add_option("--v-max", inv.v_max);
  invert->add_option("--truth", inv.truth, "true model for metrics (and smoothed init)");
  invert->add_option("--f-init", inv.f_init, "initial peak frequency; default from the data header");
  invert->add_option("--epochs", inv.epochs);
  invert->add_option("--batch", inv.batch);
  invert->add_option("--n-critic", inv.n_critic);
  invert->add_option("--lambda", inv.lambda);
  invert->add_option("--lr-v", inv.lr_v);
  invert->add_option("--lr-c", inv.lr_c);
  invert->add_option("--lr-f", inv.lr_f);
  invert->add_option("--lr-snr", inv.lr_snr);
  invert->add_flag("--learn-noise", inv.learn_noise, "learn the noise level (fwigan)");
  invert->add_flag("--learn-source", inv.learn_source, "learn the source peak frequency");
  invert->add_option("--init-snr", inv.init_snr, "initial SNR guess in dB")->capture_default_str();
  invert->add_flag("--unit-mass-critic-input", inv.unit_mass_critic_input,
                   "feed the critic P(x) itself rather than nt*n_g*P(x)");
  invert->add_option("--critic-channels", inv.critic_channels, "channels of the first critic block")->capture_default_str();
  invert->add_option("--critic-fc", inv.critic_fc, "critic hidden dense width")->capture_default_str();
  invert->add_option("--sponge-width", inv.sponge_width, "absorbing layer width in cells (default 20)");
  invert->add_option("--seed", inv.seed)->capture_default_str();
  invert->add_option("--threads", inv.threads, "0 = all cores; FWIGAN_THREADS overrides")->capture_default_str();
  invert->add_option("--out-dir", inv.out_dir)->required();
  invert->add_option("--from-manifest", inv.from_manifest, "rerun the configuration recorded in a manifest");

  std::string truth_path, candidate_path;
  auto* metrics = app.add_subcommand("metrics", "SSIM and relative error of a candidate model");
  metrics->add_option("--truth", truth_path)->required();
  metrics->add_option("--candidate", candidate_path)->required();

  std::string render_model, render_gathers, render_out;
  std::size_t render_shot = 0;
  auto* render = app.add_subcommand("render", "Write a PGM heatmap of a model or one shot gather");
  render->add_option("--model", render_model);
  render->add_option("--gathers", render_gathers);
  render->add_option("--shot", render_shot)->capture_default_str();
  render->add_option("--out", render_out)->required();

  std::vector<std::string> profile_models;
  std::vector<double> profile_positions;
  std::string profile_out;
  auto* profiles = app.add_subcommand("profiles", "CSV of depth profiles at lateral positions (km)");
  profiles->add_option("--models", profile_models)->required()->delimiter(',');
  profiles->add_option("--positions", profile_positions)->required()->delimiter(',');
  profiles->add_option("--out", profile_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*model) cmd_model(model_args, out);
    if (*simulate) cmd_simulate(sim_args, out);
    if (*noise) cmd_add_noise(noise_args, out);
    if (*invert) {
      if (inv.from_manifest.empty() && inv.obs.empty()) throw InvalidInput("invert needs --obs or --from-manifest");
      cmd_invert(inv, out);
    }
    if (*metrics) cmd_metrics(truth_path, candidate_path, out);
    if (*render) cmd_render(render_model, render_gathers, render_shot, render_out);
    if (*profiles) cmd_profiles(profile_models, profile_positions, profile_out);
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace fwigan
