#include "omniisr/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "omniisr/errors.hpp"
#include "omniisr/rng.hpp"

namespace omniisr {

Dataset::Dataset(std::size_t classes, std::size_t channels, std::size_t height,
                 std::size_t width)
    : classes_(classes), channels_(channels), height_(height), width_(width) {
  if (classes == 0 || channels == 0 || height == 0 || width == 0) {
    throw ConfigError("dataset dimensions must be positive");
  }
}

void Dataset::add(std::span<const double> input, std::span<const std::uint32_t> labels) {
  if (input.size() != channels_ * cells() || labels.size() != cells()) {
    throw ShapeError("sample does not match dataset layout");
  }
  for (auto l : labels) {
    if (l >= classes_) throw ConfigError("label " + std::to_string(l) + " out of range");
  }
  inputs_.insert(inputs_.end(), input.begin(), input.end());
  labels_.insert(labels_.end(), labels.begin(), labels.end());
  ++count_;
}

std::span<const double> Dataset::input(std::size_t i) const {
  const std::size_t stride = channels_ * cells();
  return {inputs_.data() + i * stride, stride};
}

std::span<const std::uint32_t> Dataset::labels(std::size_t i) const {
  return {labels_.data() + i * cells(), cells()};
}

std::uint32_t Dataset::dominant_label(std::size_t i) const {
  std::vector<std::size_t> hist(classes_, 0);
  for (auto l : labels(i)) ++hist[l];
  return static_cast<std::uint32_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> hist(classes_, 0);
  for (auto l : labels_) ++hist[l];
  return hist;
}

Batch Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t b = indices.size();
  const std::size_t p = cells();
  Batch batch{Tensor({b, channels_, height_, width_}), Tensor({b, classes_, height_, width_}),
              std::vector<std::uint32_t>(b * p)};
  for (std::size_t s = 0; s < b; ++s) {
    if (indices[s] >= count_) throw ConfigError("sample index out of range");
    auto x = input(indices[s]);
    std::copy(x.begin(), x.end(), batch.inputs.data() + s * channels_ * p);
    auto y = labels(indices[s]);
    for (std::size_t c = 0; c < p; ++c) {
      batch.labels[s * p + c] = y[c];
      batch.onehot[(s * classes_ + y[c]) * p + c] = 1.0;
    }
  }
  return batch;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out(classes_, channels_, height_, width_);
  for (auto i : indices) out.add(input(i), labels(i));
  return out;
}

namespace {

std::vector<double> random_unit(std::size_t dims, Rng& rng) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dims);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (double& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

Dataset gen_classification(std::size_t classes, std::size_t dims, std::size_t n,
                           double separation, std::uint64_t seed) {
  if (n < classes) throw ConfigError("gen_classification needs n >= K");
  Rng rng = make_rng(seed, Stream::data, 0);
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dims, 0.0));
  for (std::size_t k = 0; k < classes; ++k) {
    if (dims >= classes) {
      centres[k][k] = separation;
    } else {
      centres[k] = random_unit(dims, rng);
      for (double& x : centres[k]) x *= separation;
    }
  }

  std::normal_distribution<double> normal;
  const auto order = permutation(n, rng);
  Dataset data(classes, dims, 1, 1);
  std::vector<double> x(dims);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(order[i] % classes);
    for (std::size_t d = 0; d < dims; ++d) x[d] = centres[label][d] + normal(rng);
    data.add(x, std::span(&label, 1));
  }
  return data;
}

Dataset gen_gridseg(std::size_t classes, std::size_t width, std::size_t height, std::size_t n,
                    std::uint64_t seed, std::size_t channels, double noise) {
  if (width * height < classes) throw ConfigError("gen_gridseg needs W*H >= K");
  if (channels == 0) channels = classes;
  Rng rng = make_rng(seed, Stream::data, 1);
  std::vector<std::vector<double>> prototypes;
  for (std::size_t k = 0; k < classes; ++k) {
    if (channels >= classes) {
      std::vector<double> e(channels, 0.0);
      e[k] = 1.0;
      prototypes.push_back(std::move(e));
    } else {
      prototypes.push_back(random_unit(channels, rng));
    }
  }

  std::normal_distribution<double> normal(0.0, noise);
  const std::size_t cells = width * height;
  Dataset data(classes, channels, height, width);
  std::vector<double> x(channels * cells);
  std::vector<std::uint32_t> y(cells);
  for (std::size_t s = 0; s < n; ++s) {
    // Each class owns one site on a distinct random cell.
    const auto sites = permutation(cells, rng);
    for (std::size_t c = 0; c < cells; ++c) {
      const double ci = static_cast<double>(c / width), cj = static_cast<double>(c % width);
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t label = 0;
      for (std::size_t k = 0; k < classes; ++k) {
        const double si = static_cast<double>(sites[k] / width);
        const double sj = static_cast<double>(sites[k] % width);
        const double d = (ci - si) * (ci - si) + (cj - sj) * (cj - sj);
        if (d < best) {
          best = d;
          label = static_cast<std::uint32_t>(k);
        }
      }
      y[c] = label;
    }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      for (std::size_t c = 0; c < cells; ++c) {
        x[ch * cells + c] = prototypes[y[c]][ch] + normal(rng);
      }
    }
    data.add(x, y);
  }
  return data;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) throw ConfigError("test fraction not in [0,1)");
  Rng rng = make_rng(seed, Stream::data, 2);
  auto order = permutation(data.size(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * data.size()));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(test)};
}

namespace {

constexpr char kMagic[4] = {'O', 'I', 'S', 'D'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ConfigError("dataset file truncated");
  return value;
}

}  // namespace

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(kMagic, 4);
  put<std::uint8_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.classes()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.channels()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(data.width()));
  put<std::uint64_t>(out, data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (double v : data.input(i)) put<double>(out, v);
    for (auto l : data.labels(i)) put<std::uint32_t>(out, l);
  }
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw ConfigError("not a dataset file");
  if (get<std::uint8_t>(in) != kVersion) throw ConfigError("unsupported dataset version");
  const auto classes = get<std::uint32_t>(in);
  const auto channels = get<std::uint32_t>(in);
  const auto height = get<std::uint32_t>(in);
  const auto width = get<std::uint32_t>(in);
  const auto count = get<std::uint64_t>(in);
  Dataset data(classes, channels, height, width);
  std::vector<double> x(static_cast<std::size_t>(channels) * height * width);
  std::vector<std::uint32_t> y(static_cast<std::size_t>(height) * width);
  for (std::uint64_t i = 0; i < count; ++i) {
    for (double& v : x) v = get<double>(in);
    for (auto& l : y) l = get<std::uint32_t>(in);
    data.add(x, y);
  }
  return data;
}

}  // namespace omniisr
