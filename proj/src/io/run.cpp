#include "styleswin/run.hpp"

#include <cstdlib>
#include <filesystem>
#include <cmath>
#include <memory>
#include <numeric>

#include "styleswin/analysis.hpp"
#include "styleswin/ops.hpp"

namespace styleswin {

namespace fs = std::filesystem;

namespace {

constexpr std::int64_t kEvalChunk = 32;

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

}  // namespace

std::string resolve_output_dir(const std::string& dir) {
  const char* root = std::getenv("STYLESWIN_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0' || fs::path(dir).is_absolute()) return dir;
  return (fs::path(root) / dir).string();
}

Evaluator::Evaluator(const RunConfig& config, const Dataset& data)
    : blocking_samples(std::min(config.blocking_samples, config.eval_samples)),
      window(config.generator.scales.back().window) {
  Rng rng = Rng::stream(config.seed(), "eval");
  latents = randn({config.eval_samples, config.generator.z_dim}, rng);
  const std::int64_t n = std::min(config.eval_samples, data.size());
  std::vector<std::int64_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  real = data.batch(idx);
}

Tensor Evaluator::samples(const Generator& g, std::int64_t n) const {
  NoGradGuard no_grad;
  n = std::min(n, latents.dim(0));
  std::vector<Tensor> parts;
  for (std::int64_t i = 0; i < n; i += kEvalChunk) {
    parts.push_back(g.forward(slice(latents, 0, i, std::min(n, i + kEvalChunk))));
  }
  return parts.size() == 1 ? parts[0] : concat(parts, 0);
}

double Evaluator::proxy(const Generator& g) const {
  return proxy_distance(real, samples(g, latents.dim(0)));
}

double Evaluator::blocking(const Generator& g) const {
  return mean_blocking_score(samples(g, blocking_samples), window);
}

Trainer make_trainer(const RunConfig& config) {
  config.validate();
  return Trainer(config.generator, config.discriminator, config.train, config.augment);
}

RunResult run_training(const RunConfig& config, const RunOptions& options) {
  const Dataset data(config.dataset);
  if (data.size() == 0) throw ConfigError("dataset is empty");
  Trainer trainer = make_trainer(config);
  const std::string config_text = serialize_config(config);
  const bool persist = !options.output_dir.empty();

  if (!options.resume_from.empty()) {
    const Checkpoint ckpt = load_checkpoint(options.resume_from);
    if (!(parse_config(ckpt.config_text) == config))
      throw ConfigError("checkpoint config differs from run config: " + options.resume_from);
    restore_checkpoint(trainer, ckpt);
  }

  const Evaluator eval(config, data);
  const std::int64_t total = config.train.total_iters;
  const std::int64_t stop = options.stop_at < 0 ? total : std::min(options.stop_at, total);

  RunResult result;
  result.initial_proxy = eval.proxy(trainer.ema());

  std::unique_ptr<MetricsWriter> csv;
  if (persist) {
    fs::create_directories(options.output_dir);
    write_file_atomic(join(options.output_dir, "config.ini"), config_text);
    csv = std::make_unique<MetricsWriter>(join(options.output_dir, "metrics.csv"),
                                          !options.resume_from.empty());
  }
  auto save = [&](const std::string& name) {
    save_checkpoint(join(options.output_dir, name), capture_checkpoint(trainer, config_text));
  };

  while (trainer.iteration() < stop) {
    const auto idx = data.sample_indices(config.train.batch_size, trainer.rng().data);
    MetricsRow row = trainer.step(data.batch(idx));
    const std::int64_t done = trainer.iteration();
    if ((config.eval_interval > 0 && done % config.eval_interval == 0) || done == total) {
      row.proxy_distance = eval.proxy(trainer.ema());
      row.blocking_score = eval.blocking(trainer.ema());
    }
    if (csv) csv->write(row);
    if (options.on_row) options.on_row(row);
    result.rows.push_back(row);
    if (persist && config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0)
      save("checkpoint_" + std::to_string(done) + ".bin");
  }

  result.iterations = trainer.iteration();
  if (!result.rows.empty() && !std::isnan(result.rows.back().proxy_distance)) {
    result.final_proxy = result.rows.back().proxy_distance;
    result.final_blocking = result.rows.back().blocking_score;
  } else {
    result.final_proxy = eval.proxy(trainer.ema());
    result.final_blocking = eval.blocking(trainer.ema());
  }
  if (persist) {
    save("checkpoint_final.bin");
    write_sample_grid(eval.samples(trainer.ema(), 16), join(options.output_dir, "samples.png"));
  }
  return result;
}

}  // namespace styleswin
