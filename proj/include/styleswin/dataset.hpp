#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "styleswin/config.hpp"

namespace styleswin {

/// Random-access image source; every image is [S,S,3] in [-1,1].
class Dataset {
 public:
  explicit Dataset(DatasetSpec spec);

  const DatasetSpec& spec() const { return spec_; }
  std::int64_t size() const;
  Tensor image(std::int64_t index) const;
  /// [n,S,S,3] batch of the given indices.
  Tensor batch(const std::vector<std::int64_t>& indices) const;
  /// Uniform indices drawn from `rng`.
  std::vector<std::int64_t> sample_indices(std::int64_t n, Rng& rng) const;

  /// Synthetic generators expose their latent mode: two-blobs 0/1 for the
  /// upper-left / lower-right blob, ring-gaussians the ring slot.
  std::int64_t mode(std::int64_t index) const;

 private:
  DatasetSpec spec_;
  std::vector<Tensor> folder_;  // image-folder contents
};

}  // namespace styleswin
