#pragma once

#include <cstdint>
#include <string>

#include "styleswin/discriminator.hpp"
#include "styleswin/generator.hpp"
#include "styleswin/training.hpp"

namespace styleswin {

enum class DatasetKind { TwoBlobs, RingGaussians, CheckerShapes, ImageFolder };

DatasetKind parse_dataset_kind(const std::string& name);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::TwoBlobs;
  std::int64_t image_size = 16;
  std::int64_t count = 4096;
  std::uint64_t seed = 1;
  /// image-folder only.
  std::string path;

  void validate() const;
  bool operator==(const DatasetSpec&) const = default;
};

/// Everything that determines a run. The run seed lives in `train.seed`.
struct RunConfig {
  GeneratorConfig generator = GeneratorConfig::desk(16);
  DiscriminatorConfig discriminator = default_discriminator(16);
  TrainConfig train;
  AugmentationSpec augment;
  DatasetSpec dataset;
  std::string output_dir = "run";
  std::int64_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::int64_t eval_interval = 100;      // 0: no periodic evaluation
  std::int64_t eval_samples = 128;       // proxy-distance batch
  std::int64_t blocking_samples = 64;

  std::uint64_t seed() const { return train.seed; }
  void validate() const;
  bool operator==(const RunConfig&) const = default;

  static DiscriminatorConfig default_discriminator(std::int64_t image_size);
};

/// Flat INI text: sections [run], [generator], [discriminator], [train],
/// [augment], [dataset]. Unknown sections or keys are rejected.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& config);

}  // namespace styleswin
