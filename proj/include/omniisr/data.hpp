#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "omniisr/tensor.hpp"

namespace omniisr {

/// A minibatch in network layout.
struct Batch {
  Tensor inputs;  // [B, C, H, W]
  Tensor onehot;  // [B, K, H, W]
  std::vector<std::uint32_t> labels;  // B * H * W, row-major per sample
};

/// Labelled samples on an H x W cell grid. Classification is the 1 x 1 grid.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::size_t classes, std::size_t channels, std::size_t height, std::size_t width);

  void add(std::span<const double> input, std::span<const std::uint32_t> labels);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t classes() const { return classes_; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t cells() const { return height_ * width_; }

  std::span<const double> input(std::size_t i) const;
  std::span<const std::uint32_t> labels(std::size_t i) const;
  /// Most frequent cell label of sample i (lowest class wins ties).
  std::uint32_t dominant_label(std::size_t i) const;
  /// Cell-label histogram over the whole dataset.
  std::vector<std::size_t> class_counts() const;

  Batch gather(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t classes_ = 0;
  std::size_t channels_ = 0;
  std::size_t height_ = 1;
  std::size_t width_ = 1;
  std::size_t count_ = 0;
  std::vector<double> inputs_;
  std::vector<std::uint32_t> labels_;
};

/// K isotropic Gaussian clusters (unit variance) whose means sit at
/// `separation` times the vertices e_k of the coordinate simplex (random unit
/// directions when dims < K). Labels are balanced: sample i has class i mod K
/// before the final shuffle.
Dataset gen_classification(std::size_t classes, std::size_t dims, std::size_t n,
                           double separation, std::uint64_t seed);

/// Noisy Voronoi segmentation grids. Each sample scatters K sites over the
/// grid, labels every cell with its nearest site's class and encodes the cell
/// as that class's prototype vector (unit-norm, `channels` wide) plus
/// Gaussian noise of standard deviation `noise`.
Dataset gen_gridseg(std::size_t classes, std::size_t width, std::size_t height, std::size_t n,
                    std::uint64_t seed, std::size_t channels = 0, double noise = 0.5);

/// Disjoint train/test split; test receives round(fraction * n) samples.
std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed);

/// Binary container:
///   magic "OISD" | version u8 (=1) | classes u32 | channels u32 | height u32 |
///   width u32 | count u64 | per sample: inputs f64[C*H*W], labels u32[H*W]
/// All integers and floats little-endian.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace omniisr
