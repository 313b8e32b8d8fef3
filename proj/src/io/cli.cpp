#include "styleswin/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "styleswin/analysis.hpp"
#include "styleswin/gradient_suite.hpp"
#include "styleswin/run.hpp"

namespace styleswin {

namespace fs = std::filesystem;

namespace {

/// --config is missing on disk.
struct MissingConfig : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig load_run_config(const Globals& g) {
  RunConfig config;
  if (!g.config_path.empty()) {
    if (!fs::exists(g.config_path)) throw MissingConfig("config not found: " + g.config_path);
    config = load_config(g.config_path);
  }
  if (g.seed) config.train.seed = *g.seed;
  if (!g.out.empty()) config.output_dir = g.out;
  return config;
}

std::string run_dir(const RunConfig& config) { return resolve_output_dir(config.output_dir); }

std::string in_run_dir(const RunConfig& config, const std::string& name) {
  fs::create_directories(run_dir(config));
  return (fs::path(run_dir(config)) / name).string();
}

/// EMA generator of a checkpoint, built from the config stored inside it.
Generator load_ema(const std::string& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  const RunConfig stored = parse_config(ckpt.config_text);
  Trainer trainer = make_trainer(stored);
  restore_checkpoint(trainer, ckpt);
  return trainer.ema().clone();
}

std::string checkpoint_or_default(const RunConfig& config, const std::string& given) {
  return given.empty() ? (fs::path(run_dir(config)) / "checkpoint_final.bin").string() : given;
}

Tensor generate(const Generator& g, const Tensor& z) {
  NoGradGuard no_grad;
  return g.forward(z);
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

int cmd_train(const Globals& g, std::int64_t iters, const std::string& resume) {
  RunConfig config = load_run_config(g);
  if (iters > 0) config.train.total_iters = iters;
  config.validate();
  RunOptions opt;
  opt.output_dir = run_dir(config);
  opt.resume_from = resume;
  opt.on_row = [](const MetricsRow& r) {
    if (!std::isnan(r.proxy_distance))
      std::cout << "iter " << r.iter << " loss_d " << r.loss_d << " loss_g " << r.loss_g
                << " proxy " << r.proxy_distance << " blocking " << r.blocking_score << "\n";
  };
  const RunResult r = run_training(config, opt);
  std::cout << "trained " << r.iterations << " iterations; proxy " << r.initial_proxy << " -> "
            << r.final_proxy << "; blocking " << r.final_blocking << "; outputs in "
            << opt.output_dir << "\n";
  return kExitOk;
}

int cmd_sample(const Globals& g, const std::string& ckpt, std::int64_t n) {
  const RunConfig config = load_run_config(g);
  const Generator ema = load_ema(checkpoint_or_default(config, ckpt));
  Rng rng = Rng::stream(config.seed(), "sample");
  const Tensor images = generate(ema, randn({n, ema.config().z_dim}, rng));
  const std::string path = in_run_dir(config, "sample_grid.png");
  write_sample_grid(images, path);
  std::cout << path << "\n";
  return kExitOk;
}

int cmd_interpolate(const Globals& g, const std::string& ckpt, std::int64_t steps) {
  if (steps < 2) throw ConfigError("--steps must be at least 2");
  const RunConfig config = load_run_config(g);
  const Generator ema = load_ema(checkpoint_or_default(config, ckpt));
  Rng rng = Rng::stream(config.seed(), "interpolate");
  const Tensor z0 = randn({1, ema.config().z_dim}, rng);
  const Tensor z1 = randn({1, ema.config().z_dim}, rng);
  std::vector<Tensor> zs;
  for (std::int64_t i = 0; i < steps; ++i)
    zs.push_back(latent_lerp(z0, z1, double(i) / double(steps - 1)));
  const std::string path = in_run_dir(config, "interpolation.png");
  write_sample_grid(generate(ema, concat(zs, 0)), path, steps);
  std::cout << path << "\n";
  return kExitOk;
}

int cmd_analyze_spectrum(const Globals& g, const std::string& image, const std::string& ckpt,
                         std::int64_t n, std::int64_t window) {
  const RunConfig config = load_run_config(g);
  Tensor batch;
  if (!image.empty()) {
    const Tensor img = read_png(image);
    batch = reshape(img, {1, img.dim(0), img.dim(1), img.dim(2)});
  } else {
    const Generator ema = load_ema(checkpoint_or_default(config, ckpt));
    Rng rng = Rng::stream(config.seed(), "spectrum");
    batch = generate(ema, randn({n, ema.config().z_dim}, rng));
  }
  if (window <= 0) window = config.generator.scales.back().window;
  const std::int64_t b = batch.dim(0), s = batch.dim(1);
  std::vector<double> mean_log(s * s, 0.0);
  for (std::int64_t i = 0; i < b; ++i) {
    const Spectrum2D spec = fft2_log_magnitude(slice(batch, 0, i, i + 1));
    for (std::size_t k = 0; k < mean_log.size(); ++k) mean_log[k] += spec.log_magnitude[k] / double(b);
  }
  const double score = mean_blocking_score(batch, window);
  write_heatmap_png(in_run_dir(config, "spectrum.png"), mean_log, s, s);
  write_file_atomic(in_run_dir(config, "spectrum.csv"),
                    "images,window,blocking_score\n" + std::to_string(b) + "," +
                        std::to_string(window) + "," + fmt(score) + "\n");
  std::cout << "blocking_score " << score << " (window " << window << ", " << b << " images)\n";
  return kExitOk;
}

int cmd_demo_1d(const Globals& g, std::int64_t length, std::int64_t window) {
  const RunConfig config = load_run_config(g);
  std::vector<double> ramp(length);
  for (std::int64_t i = 0; i < length; ++i) ramp[i] = 2.0 * double(i) / double(length - 1) - 1.0;
  const WindowDemoResult r = demo_1d_window_attention(ramp, window, config.seed());
  std::string csv = "index,input,output\n";
  for (std::int64_t i = 0; i < length; ++i)
    csv += std::to_string(i) + "," + fmt(ramp[i]) + "," + fmt(r.output[i]) + "\n";
  write_file_atomic(in_run_dir(config, "demo_1d.csv"), csv);
  std::cout << "boundary_jump_ratio " << r.boundary_jump_ratio << "\n";
  return kExitOk;
}

int cmd_footprint(const Globals& g, const std::string& stack_name, std::int64_t size,
                  std::int64_t window, std::int64_t depth, std::int64_t channels,
                  std::int64_t heads) {
  const RunConfig config = load_run_config(g);
  const ProbeStack stack = stack_name == "double" ? ProbeStack::Double
                           : stack_name == "swin" ? ProbeStack::Swin
                                                  : ProbeStack::Pointwise;
  const ProbeNetwork net = make_probe_network(stack, channels, heads, window, depth, config.seed());
  const std::int64_t centre = size / 2;
  const FootprintReport r =
      footprint_probe(net, {1, size, size, channels}, centre, centre, depth, config.seed());
  std::string csv = "depth,rows,cols,full\n";
  for (std::size_t d = 0; d < r.rows.size(); ++d) {
    const bool full = r.rows[d] == size && r.cols[d] == size;
    csv += std::to_string(d + 1) + "," + std::to_string(r.rows[d]) + "," +
           std::to_string(r.cols[d]) + "," + (full ? "1" : "0") + "\n";
    std::cout << "depth " << d + 1 << ": " << r.rows[d] << "x" << r.cols[d] << "\n";
  }
  write_file_atomic(in_run_dir(config, "footprint_" + stack_name + ".csv"), csv);
  std::vector<double> mask(r.deepest_map.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = r.deepest_map[i] > 1e-9 ? 1.0 : 0.0;
  write_heatmap_png(in_run_dir(config, "footprint_" + stack_name + ".png"), mask, size, size);
  return kExitOk;
}

int cmd_gradcheck() {
  bool ok = true;
  run_gradient_suite([&](const GradSuiteEntry& e) {
    ok = ok && e.passed();
    std::cout << (e.passed() ? "PASS " : "FAIL ") << std::left << std::setw(30) << e.name
              << " rel_err " << std::scientific << std::setprecision(2) << e.result.max_rel_error
              << " < " << e.tolerance << std::defaultfloat << "\n";
  });
  return ok ? kExitOk : kExitGradcheck;
}

int cmd_eval_proxy(const Globals& g, const std::string& ckpt) {
  const RunConfig config = load_run_config(g);
  const Generator ema = load_ema(checkpoint_or_default(config, ckpt));
  const Dataset data(config.dataset);
  const Evaluator eval(config, data);
  const double proxy = eval.proxy(ema), blocking = eval.blocking(ema);
  write_file_atomic(in_run_dir(config, "eval.csv"),
                    "proxy_distance,blocking_score\n" + fmt(proxy) + "," + fmt(blocking) + "\n");
  std::cout << "proxy_distance " << proxy << " blocking_score " << blocking << "\n";
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Desk-scale StyleSwin: training, sampling and analysis", "styleswin"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config_path, "Run configuration file (INI)");
  auto* seed_opt = app.add_option("--seed", seed, "Override the run seed");
  app.add_option("--out", g.out, "Override the run output directory");

  std::int64_t iters = 0, n = 16, steps = 5, window = 0, length = 64, size = 64, depth = 4,
               channels = 8, heads = 4;
  std::string resume, ckpt, image, stack = "double";

  auto* train = app.add_subcommand("train", "Train a GAN and write metrics, checkpoints, samples");
  train->add_option("--iters", iters, "Total iterations (overrides train.total_iters)")
      ->check(CLI::PositiveNumber);
  train->add_option("--resume", resume, "Checkpoint to resume from");

  auto* sample = app.add_subcommand("sample", "Write a grid of EMA samples");
  sample->add_option("--checkpoint", ckpt, "Checkpoint (default: run dir final)");
  sample->add_option("-n,--count", n, "Number of samples")->check(CLI::PositiveNumber);

  auto* interp = app.add_subcommand("interpolate", "Latent lerp between two samples");
  interp->add_option("--checkpoint", ckpt, "Checkpoint (default: run dir final)");
  interp->add_option("--steps", steps, "Images along the path, endpoints included");

  auto* spectrum = app.add_subcommand("analyze-spectrum", "Log-magnitude spectrum and blocking score");
  spectrum->add_option("--image", image, "PNG to analyze instead of EMA samples");
  spectrum->add_option("--checkpoint", ckpt, "Checkpoint (default: run dir final)");
  spectrum->add_option("-n,--count", n, "Number of EMA samples")->check(CLI::PositiveNumber);
  spectrum->add_option("--window", window, "Window size (default: final generator scale)");

  auto* demo = app.add_subcommand("demo-1d", "1-D window attention on a smooth ramp");
  demo->add_option("--length", length, "Signal length")->check(CLI::Range(2, 1 << 20));
  demo->add_option("--window", window, "Window length")->check(CLI::PositiveNumber);

  auto* footprint = app.add_subcommand("footprint", "Receptive-field footprint of a block stack");
  footprint->add_option("--stack", stack, "double | swin | pointwise")
      ->check(CLI::IsMember({"double", "swin", "pointwise"}));
  footprint->add_option("--size", size, "Input size")->check(CLI::PositiveNumber);
  footprint->add_option("--window", window, "Window size (default 8)");
  footprint->add_option("--depth", depth, "Maximum number of blocks")->check(CLI::PositiveNumber);
  footprint->add_option("--channels", channels, "Token width")->check(CLI::PositiveNumber);
  footprint->add_option("--heads", heads, "Attention heads")->check(CLI::PositiveNumber);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  auto* eval = app.add_subcommand("eval-proxy", "Proxy distance and blocking score of a checkpoint");
  eval->add_option("--checkpoint", ckpt, "Checkpoint (default: run dir final)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "styleswin: " << e.what() << "\n";
    return kExitUsage;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*train) return cmd_train(g, iters, resume);
    if (*sample) return cmd_sample(g, ckpt, n);
    if (*interp) return cmd_interpolate(g, ckpt, steps);
    if (*spectrum) return cmd_analyze_spectrum(g, image, ckpt, n, window);
    if (*demo) return cmd_demo_1d(g, length, window > 0 ? window : 8);
    if (*footprint) return cmd_footprint(g, stack, size, window > 0 ? window : 8, depth, channels, heads);
    if (*gradcheck) return cmd_gradcheck();
    if (*eval) return cmd_eval_proxy(g, ckpt);
  } catch (const MissingConfig& e) {
    std::cerr << "styleswin: " << e.what() << "\n";
    return kExitMissingConfig;
  } catch (const ConfigError& e) {
    std::cerr << "styleswin: invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const IoError& e) {
    std::cerr << "styleswin: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "styleswin: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "styleswin: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace styleswin
