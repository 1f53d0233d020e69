#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rmlab/numerics.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

using Labels = std::vector<std::size_t>;

// Features plus observed (possibly corrupted) labels, optionally the true
// labels, and the per-class membership index over the observed labels.
// Immutable once built; relabeling produces a new Dataset.
class Dataset {
 public:
  Dataset(Matrix features, Labels observed, std::optional<Labels> true_labels,
          std::size_t num_classes);

  std::size_t size() const noexcept { return observed_.size(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return num_classes_; }

  const Matrix& features() const noexcept { return features_; }
  const Labels& observed_labels() const noexcept { return observed_; }
  bool has_true_labels() const noexcept { return true_.has_value(); }
  // Throws Unavailable when the dataset carries no ground truth.
  const Labels& true_labels() const;
  const std::optional<Labels>& maybe_true_labels() const noexcept { return true_; }

  // Sorted member indices of each observed class.
  const std::vector<std::vector<std::size_t>>& class_index() const noexcept { return index_; }
  std::span<const std::size_t> members(std::size_t cls) const { return index_.at(cls); }

  Dataset with_observed_labels(Labels observed) const;
  Dataset with_features(Matrix features) const;
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  Matrix features_;
  Labels observed_;
  std::optional<Labels> true_;
  std::size_t num_classes_;
  std::vector<std::vector<std::size_t>> index_;
};

std::vector<std::vector<std::size_t>> build_class_index(const Labels& labels, std::size_t num_classes);

// Unit-covariance Gaussian clusters whose centers are pairwise at least
// `separation` apart.
Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                   double separation, RngStream rng);

// Two interleaved half circles, 2-D, 2 classes.
Dataset make_two_moons(std::size_t per_class, double noise_stdev, RngStream rng);

struct TrainTestSplit {
  Dataset train;
  Dataset test;
};

// Stratified by observed label; every class must keep at least one member on
// each side.
TrainTestSplit split(const Dataset& dataset, double test_fraction, RngStream rng);

// Per-dimension affine map fitted on one split and applied to any other.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const Matrix& features);
  Matrix apply(const Matrix& features) const;
};

// ---- IDX (MNIST-style) files ----------------------------------------------

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Loads an image/label file pair. Pixels are scaled to [0, 1] and flattened
// row-major. The labels are treated as clean ground truth when
// `labels_are_clean` holds.
Dataset read_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path, bool labels_are_clean = true);

void write_idx_images(const std::filesystem::path& path, std::size_t count, std::size_t rows,
                      std::size_t cols, std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// ---- Dataset container ------------------------------------------------------
//
// Layout (all integers little-endian):
//   char[8]  magic "RMLDSET\0"
//   u32      version (1)
//   u64      N, u64 d, u32 c, u8 has_true_labels
//   f64[N*d] features, row-major
//   u8[N]    observed labels
//   u8[N]    true labels (only if has_true_labels)

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace rmlab
