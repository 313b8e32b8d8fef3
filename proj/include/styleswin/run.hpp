#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "styleswin/config.hpp"
#include "styleswin/dataset.hpp"
#include "styleswin/io.hpp"

namespace styleswin {

struct RunOptions {
  /// Directory receiving metrics.csv, config.ini, checkpoints and samples;
  /// empty keeps everything in memory.
  std::string output_dir;
  /// Checkpoint to continue from; its config must match the run config.
  std::string resume_from;
  /// Stop after this iteration count (-1: train.total_iters). The schedule
  /// always follows train.total_iters.
  std::int64_t stop_at = -1;
  std::function<void(const MetricsRow&)> on_row;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  double initial_proxy = 0;
  double final_proxy = 0;
  double final_blocking = 0;
  std::int64_t iterations = 0;
};

/// Fixed evaluation inputs: EMA latents from the run's "eval" stream and the
/// first `eval_samples` dataset images.
struct Evaluator {
  Evaluator(const RunConfig& config, const Dataset& data);

  double proxy(const Generator& g) const;
  double blocking(const Generator& g) const;
  Tensor samples(const Generator& g, std::int64_t n) const;

  Tensor latents;
  Tensor real;
  std::int64_t blocking_samples;
  std::int64_t window;
};

Trainer make_trainer(const RunConfig& config);

RunResult run_training(const RunConfig& config, const RunOptions& options = {});

/// Prepends $STYLESWIN_OUTPUT_ROOT when set.
std::string resolve_output_dir(const std::string& dir);

}  // namespace styleswin
