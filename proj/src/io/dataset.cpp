#include "styleswin/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "styleswin/io.hpp"

namespace styleswin {

namespace {

constexpr int kRingSlots = 8;

Rng sample_rng(std::uint64_t seed, std::int64_t index) {
  return Rng::stream(seed, "sample/" + std::to_string(index));
}

Tensor gaussian_blob(std::int64_t s, double cy, double cx, double sigma, double intensity) {
  std::vector<double> img(s * s * 3);
  for (std::int64_t y = 0; y < s; ++y)
    for (std::int64_t x = 0; x < s; ++x) {
      const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      const double v = -1.0 + 2.0 * intensity * std::exp(-r2 / (2 * sigma * sigma));
      for (int c = 0; c < 3; ++c) img[(y * s + x) * 3 + c] = v;
    }
  return Tensor::from({s, s, 3}, std::move(img));
}

}  // namespace

Dataset::Dataset(DatasetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind != DatasetKind::ImageFolder) return;
  namespace fs = std::filesystem;
  if (!fs::is_directory(spec_.path)) throw IoError("image folder not found: " + spec_.path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(spec_.path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (spec_.count > 0 && std::int64_t(files.size()) > spec_.count) files.resize(spec_.count);
  for (const auto& f : files) {
    Tensor img = read_png(f.string());
    if (img.dim(0) != spec_.image_size || img.dim(1) != spec_.image_size)
      throw ConfigError("image " + f.string() + " is not " + std::to_string(spec_.image_size) +
                        "x" + std::to_string(spec_.image_size));
    folder_.push_back(std::move(img));
  }
}

std::int64_t Dataset::size() const {
  return spec_.kind == DatasetKind::ImageFolder ? std::int64_t(folder_.size()) : spec_.count;
}

std::int64_t Dataset::mode(std::int64_t index) const {
  Rng rng = sample_rng(spec_.seed, index);
  switch (spec_.kind) {
    case DatasetKind::TwoBlobs: return rng.bernoulli(0.5) ? 1 : 0;
    case DatasetKind::RingGaussians: return rng.uniform_int(0, kRingSlots - 1);
    default: return 0;
  }
}

Tensor Dataset::image(std::int64_t index) const {
  if (index < 0 || index >= size()) throw ContractError("dataset index out of range");
  const std::int64_t s = spec_.image_size;
  const double sd = double(s);
  if (spec_.kind == DatasetKind::ImageFolder) return folder_[index];
  Rng rng = sample_rng(spec_.seed, index);
  switch (spec_.kind) {
    case DatasetKind::TwoBlobs: {
      const bool second = rng.bernoulli(0.5);
      const double base = second ? 0.75 * sd : 0.25 * sd;
      const double cy = base - 0.5 + rng.uniform(-sd / 16, sd / 16);
      const double cx = base - 0.5 + rng.uniform(-sd / 16, sd / 16);
      return gaussian_blob(s, cy, cx, sd / 8, rng.uniform(0.8, 1.0));
    }
    case DatasetKind::RingGaussians: {
      const auto slot = rng.uniform_int(0, kRingSlots - 1);
      const double angle = 2 * std::numbers::pi * double(slot) / kRingSlots;
      const double cy = sd / 2 - 0.5 + 0.3 * sd * std::sin(angle) + rng.uniform(-0.5, 0.5);
      const double cx = sd / 2 - 0.5 + 0.3 * sd * std::cos(angle) + rng.uniform(-0.5, 0.5);
      return gaussian_blob(s, cy, cx, sd / 12, rng.uniform(0.8, 1.0));
    }
    case DatasetKind::CheckerShapes: {
      // Checkerboard of random cell size and phase, with one bright square on top.
      const std::int64_t cell = std::int64_t(1) << rng.uniform_int(1, 2);
      const std::int64_t py = rng.uniform_int(0, cell - 1), px = rng.uniform_int(0, cell - 1);
      const double lo = rng.uniform(-1.0, -0.4), hi = rng.uniform(-0.2, 0.4);
      const std::int64_t side = std::max<std::int64_t>(2, s / 4);
      const std::int64_t y0 = rng.uniform_int(0, s - side), x0 = rng.uniform_int(0, s - side);
      double color[3];
      for (auto& c : color) c = rng.uniform(0.5, 1.0);
      std::vector<double> img(s * s * 3);
      for (std::int64_t y = 0; y < s; ++y)
        for (std::int64_t x = 0; x < s; ++x) {
          const bool inside = y >= y0 && y < y0 + side && x >= x0 && x < x0 + side;
          const double bg = (((y + py) / cell + (x + px) / cell) % 2) ? hi : lo;
          for (int c = 0; c < 3; ++c) img[(y * s + x) * 3 + c] = inside ? color[c] : bg;
        }
      return Tensor::from({s, s, 3}, std::move(img));
    }
    case DatasetKind::ImageFolder: break;
  }
  throw ConfigError("unknown dataset kind");
}

Tensor Dataset::batch(const std::vector<std::int64_t>& indices) const {
  const std::int64_t s = spec_.image_size, n = std::int64_t(indices.size());
  std::vector<double> out;
  out.reserve(n * s * s * 3);
  for (auto i : indices) {
    const Tensor img = image(i);
    out.insert(out.end(), img.data().begin(), img.data().end());
  }
  return Tensor::from({n, s, s, 3}, std::move(out));
}

std::vector<std::int64_t> Dataset::sample_indices(std::int64_t n, Rng& rng) const {
  if (size() == 0) throw ContractError("cannot sample from an empty dataset");
  std::vector<std::int64_t> idx(n);
  for (auto& i : idx) i = rng.uniform_int(0, size() - 1);
  return idx;
}

}  // namespace styleswin
