#include "rmlab/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>

#include "rmlab/binary_io.hpp"
#include "rmlab/error.hpp"

namespace rmlab {

std::vector<std::vector<std::size_t>> build_class_index(const Labels& labels, std::size_t num_classes) {
  std::vector<std::vector<std::size_t>> index(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw InvalidInput("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                         " is outside [0, " + std::to_string(num_classes) + ")");
    }
    index[labels[i]].push_back(i);
  }
  return index;
}

Dataset::Dataset(Matrix features, Labels observed, std::optional<Labels> true_labels,
                 std::size_t num_classes)
    : features_(std::move(features)),
      observed_(std::move(observed)),
      true_(std::move(true_labels)),
      num_classes_(num_classes) {
  if (num_classes_ < 1) throw InvalidInput("dataset needs at least one class");
  if (features_.rows() != observed_.size()) {
    throw InvalidInput("dataset has " + std::to_string(features_.rows()) + " feature rows but " +
                       std::to_string(observed_.size()) + " labels");
  }
  if (!features_.all_finite()) throw InvalidInput("dataset features must be finite");
  if (true_) {
    if (true_->size() != observed_.size()) throw InvalidInput("true/observed label lengths differ");
    build_class_index(*true_, num_classes_);
  }
  index_ = build_class_index(observed_, num_classes_);
}

const Labels& Dataset::true_labels() const {
  if (!true_) throw Unavailable("dataset carries no true labels");
  return *true_;
}

Dataset Dataset::with_observed_labels(Labels observed) const {
  return Dataset(features_, std::move(observed), true_, num_classes_);
}

Dataset Dataset::with_features(Matrix features) const {
  return Dataset(std::move(features), observed_, true_, num_classes_);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Labels obs;
  obs.reserve(indices.size());
  std::optional<Labels> tru;
  if (true_) tru.emplace();
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidInput("subset index out of range");
    obs.push_back(observed_[i]);
    if (tru) tru->push_back((*true_)[i]);
  }
  return Dataset(gather_rows(features_, indices), std::move(obs), std::move(tru), num_classes_);
}

Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim,
                   double separation, RngStream rng) {
  if (num_classes < 2) throw InvalidInput("make_blobs: need at least 2 classes");
  if (per_class < 1) throw InvalidInput("make_blobs: per_class must be >= 1");
  if (dim < 1) throw InvalidInput("make_blobs: dim must be >= 1");
  if (!(separation > 0.0)) throw InvalidInput("make_blobs: separation must be positive");

  // Centers: uniform in a box, rejected until pairwise distance >= separation.
  RngStream center_rng = rng.derive(0);
  double half_width =
      separation * std::max(1.0, std::pow(static_cast<double>(num_classes), 1.0 / static_cast<double>(dim)));
  std::vector<std::vector<double>> centers;
  while (centers.size() < num_classes) {
    centers.clear();
    bool failed = false;
    while (!failed && centers.size() < num_classes) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        std::vector<double> c(dim);
        for (double& v : c) v = (2.0 * center_rng.uniform() - 1.0) * half_width;
        placed = std::all_of(centers.begin(), centers.end(), [&](const std::vector<double>& o) {
          double d2 = 0.0;
          for (std::size_t j = 0; j < dim; ++j) d2 += (c[j] - o[j]) * (c[j] - o[j]);
          return d2 >= separation * separation;
        });
        if (placed) centers.push_back(std::move(c));
      }
      failed = !placed;
    }
    if (failed) half_width *= 1.25;
  }

  RngStream point_rng = rng.derive(1);
  const std::size_t n = num_classes * per_class;
  Matrix features(n, dim);
  Labels labels(n);
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    for (std::size_t j = 0; j < per_class; ++j) {
      const std::size_t i = cls * per_class + j;
      labels[i] = cls;
      for (std::size_t f = 0; f < dim; ++f) features(i, f) = centers[cls][f] + point_rng.normal();
    }
  }
  Labels truth = labels;
  return Dataset(std::move(features), std::move(labels), std::move(truth), num_classes);
}

Dataset make_two_moons(std::size_t per_class, double noise_stdev, RngStream rng) {
  if (per_class < 1) throw InvalidInput("make_two_moons: per_class must be >= 1");
  if (!(noise_stdev >= 0.0)) throw InvalidInput("make_two_moons: noise_stdev must be >= 0");
  const std::size_t n = 2 * per_class;
  Matrix features(n, 2);
  Labels labels(n);
  for (std::size_t j = 0; j < per_class; ++j) {
    const double t = per_class == 1 ? 0.0
                                    : std::numbers::pi * static_cast<double>(j) /
                                          static_cast<double>(per_class - 1);
    features(j, 0) = std::cos(t);
    features(j, 1) = std::sin(t);
    labels[j] = 0;
    features(per_class + j, 0) = 1.0 - std::cos(t);
    features(per_class + j, 1) = 0.5 - std::sin(t);
    labels[per_class + j] = 1;
  }
  if (noise_stdev > 0.0) {
    for (double& v : features.data()) v += noise_stdev * rng.normal();
  }
  Labels truth = labels;
  return Dataset(std::move(features), std::move(labels), std::move(truth), 2);
}

TrainTestSplit split(const Dataset& dataset, double test_fraction, RngStream rng) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw InvalidInput("split: test_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> train_idx, test_idx;
  for (std::size_t cls = 0; cls < dataset.num_classes(); ++cls) {
    std::vector<std::size_t> members(dataset.members(cls).begin(), dataset.members(cls).end());
    if (members.empty()) continue;
    if (members.size() < 2) {
      throw InvalidInput("split: class " + std::to_string(cls) +
                         " has fewer than 2 samples and cannot appear in both splits");
    }
    RngStream cls_rng = rng.derive(cls);
    for (std::size_t i = members.size(); i > 1; --i) {
      std::swap(members[i - 1], members[cls_rng.below(i)]);
    }
    const auto m = static_cast<double>(members.size());
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * m));
    n_test = std::clamp<std::size_t>(n_test, 1, members.size() - 1);
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {dataset.subset(train_idx), dataset.subset(test_idx)};
}

Standardizer Standardizer::fit(const Matrix& features) {
  Standardizer s;
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 1.0);
  if (n == 0) return s;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += features(i, j);
  for (double& m : s.mean) m /= static_cast<double>(n);
  std::vector<double> var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double dev = features(i, j) - s.mean[j];
      var[j] += dev * dev;
    }
  for (std::size_t j = 0; j < d; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    s.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  return s;
}

Matrix Standardizer::apply(const Matrix& features) const {
  if (features.cols() != mean.size()) throw InvalidInput("standardizer dimension mismatch");
  Matrix out = features;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) = (out(i, j) - mean[j]) / scale[j];
  return out;
}

// ---- IDX ----------------------------------------------------------------------

namespace {

struct IdxHeader {
  std::vector<std::uint32_t> dims;
};

IdxHeader read_idx_header(std::istream& in, std::uint32_t expected_magic, const std::string& name) {
  const std::uint32_t magic = binary::get_be32(in, name);
  if (magic != expected_magic) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", magic);
    throw FormatError(name + ": bad IDX magic number " + buf);
  }
  IdxHeader h;
  const std::uint32_t ndims = magic & 0xFF;
  if (ndims == 0) throw FormatError(name + ": IDX file declares no dimensions");
  for (std::uint32_t i = 0; i < ndims; ++i) h.dims.push_back(binary::get_be32(in, name));
  return h;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

Dataset read_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 bool labels_are_clean) {
  auto img_in = open_in(images_path);
  auto lbl_in = open_in(labels_path);
  const std::string img_name = images_path.string();
  const std::string lbl_name = labels_path.string();

  const IdxHeader ih = read_idx_header(img_in, kIdxImagesMagic, img_name);
  const IdxHeader lh = read_idx_header(lbl_in, kIdxLabelsMagic, lbl_name);
  if (lh.dims.size() != 1) throw FormatError(lbl_name + ": label file must be one-dimensional");
  const std::size_t count = ih.dims[0];
  if (lh.dims[0] != count) {
    throw ConsistencyError(img_name + " declares " + std::to_string(count) + " items but " + lbl_name +
                           " declares " + std::to_string(lh.dims[0]));
  }
  std::size_t dim = 1;
  for (std::size_t i = 1; i < ih.dims.size(); ++i) dim *= ih.dims[i];

  std::vector<std::uint8_t> pixels(count * dim);
  if (!img_in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()))) {
    throw FormatError(img_name + ": truncated pixel payload");
  }
  std::vector<std::uint8_t> raw(count);
  if (!lbl_in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(lbl_name + ": truncated label payload");
  }

  Matrix features(count, dim);
  std::transform(pixels.begin(), pixels.end(), features.data().begin(),
                 [](std::uint8_t p) { return static_cast<double>(p) / 255.0; });
  Labels labels(raw.begin(), raw.end());
  const std::size_t classes =
      std::max<std::size_t>(2, labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1);
  std::optional<Labels> truth;
  if (labels_are_clean) truth = labels;
  return Dataset(std::move(features), std::move(labels), std::move(truth), classes);
}

void write_idx_images(const std::filesystem::path& path, std::size_t count, std::size_t rows,
                      std::size_t cols, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != count * rows * cols) throw InvalidInput("write_idx_images: payload size mismatch");
  auto out = open_out(path);
  binary::put_be32(out, kIdxImagesMagic);
  binary::put_be32(out, static_cast<std::uint32_t>(count));
  binary::put_be32(out, static_cast<std::uint32_t>(rows));
  binary::put_be32(out, static_cast<std::uint32_t>(cols));
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  auto out = open_out(path);
  binary::put_be32(out, kIdxLabelsMagic);
  binary::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

// ---- container ----------------------------------------------------------------

namespace {
constexpr char kDatasetMagic[8] = {'R', 'M', 'L', 'D', 'S', 'E', 'T', '\0'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  if (dataset.num_classes() > 256) throw InvalidInput("dataset container stores labels as bytes (c <= 256)");
  auto out = open_out(path);
  out.write(kDatasetMagic, sizeof kDatasetMagic);
  binary::put_le<std::uint32_t>(out, kDatasetVersion);
  binary::put_le<std::uint64_t>(out, dataset.size());
  binary::put_le<std::uint64_t>(out, dataset.dim());
  binary::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.num_classes()));
  binary::put_le<std::uint8_t>(out, dataset.has_true_labels() ? 1 : 0);
  for (double v : dataset.features().data()) binary::put_le<double>(out, v);
  for (std::size_t y : dataset.observed_labels()) binary::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(y));
  if (dataset.has_true_labels()) {
    for (std::size_t y : dataset.true_labels()) binary::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(y));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto in = open_in(path);
  const std::string name = path.string();
  char magic[8];
  if (!in.read(magic, sizeof magic) || !std::equal(magic, magic + 8, kDatasetMagic)) {
    throw FormatError(name + ": not a dataset container");
  }
  const auto version = binary::get_le<std::uint32_t>(in, name);
  if (version != kDatasetVersion) throw FormatError(name + ": unsupported container version");
  const auto n = binary::get_le<std::uint64_t>(in, name);
  const auto d = binary::get_le<std::uint64_t>(in, name);
  const auto c = binary::get_le<std::uint32_t>(in, name);
  const auto has_true = binary::get_le<std::uint8_t>(in, name);
  Matrix features(n, d);
  for (double& v : features.data()) v = binary::get_le<double>(in, name);
  Labels observed(n);
  for (auto& y : observed) y = binary::get_le<std::uint8_t>(in, name);
  std::optional<Labels> truth;
  if (has_true) {
    truth.emplace(n);
    for (auto& y : *truth) y = binary::get_le<std::uint8_t>(in, name);
  }
  return Dataset(std::move(features), std::move(observed), std::move(truth), c);
}

}  // namespace rmlab
