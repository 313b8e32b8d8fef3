#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "styleswin/nn.hpp"
#include "styleswin/training.hpp"

namespace styleswin {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Truncated or corrupted checkpoint.
class IntegrityError : public IoError {
 public:
  using IoError::IoError;
};

class VersionError : public IoError {
 public:
  using IoError::IoError;
};

/// Writes to `path + ".tmp"` and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

/// [-1,1] → 8-bit with round-half-up: v = floor((x+1)/2·255 + 0.5), clamped.
std::uint8_t to_byte(double x);

/// PNG of one [H,W,C] (C = 1 or 3) image with values in [-1,1].
void write_png(const std::string& path, const Tensor& image);
/// PNG of an 8-bit grayscale or RGB buffer.
void write_png_bytes(const std::string& path, std::int64_t height, std::int64_t width,
                     std::int64_t channels, const std::vector<std::uint8_t>& pixels);
/// Reads an 8-bit PNG as [H,W,3] in [-1,1]; grayscale is replicated.
Tensor read_png(const std::string& path);

/// Tiles a [B,H,W,C] batch into a grid image with `columns` tiles per row
/// (0: ⌈√B⌉) separated by no padding, and writes it as PNG.
void write_sample_grid(const Tensor& images, const std::string& path, std::int64_t columns = 0);
Tensor tile_grid(const Tensor& images, std::int64_t columns = 0);

/// Values mapped linearly from [min, max] to 8-bit grayscale.
void write_heatmap_png(const std::string& path, const std::vector<double>& values,
                       std::int64_t height, std::int64_t width);

std::string metrics_header();
std::string format_metrics_row(const MetricsRow& row);

/// Appends rows to a CSV file, writing the fixed header when the file is new.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path, bool append = false);
  void write(const MetricsRow& row);

 private:
  std::ofstream out_;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

/// Complete trainer state plus the config that produced it.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::int64_t iteration = 0;
  std::string config_text;
  ParamList generator;
  ParamList discriminator;
  ParamList ema;
  ParamList buffers;  // spectral-norm power vectors
  ParamList adam_g;   // m.i / v.i
  ParamList adam_d;
  std::int64_t adam_g_step = 0;
  std::int64_t adam_d_step = 0;
  std::string rng_latent, rng_augment, rng_data;
};

/// Deep copy of the trainer's current state.
Checkpoint capture_checkpoint(const Trainer& trainer, const std::string& config_text);
/// Validates every name and shape first; applies nothing on mismatch.
void restore_checkpoint(Trainer& trainer, const Checkpoint& ckpt);

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace styleswin
