#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qnt/error.hpp"
#include "qnt/rng.hpp"

namespace qnt {

/// Row-major feature matrix with integer class labels.
struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<double> features;
  std::vector<std::int32_t> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }

  Dataset subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.dim = dim;
    out.num_classes = num_classes;
    out.features.reserve(indices.size() * dim);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
      const auto r = row(i);
      out.features.insert(out.features.end(), r.begin(), r.end());
      out.labels.push_back(labels[i]);
    }
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct DataSplit {
  Dataset train;
  Dataset test;
};

enum class DatasetKind { gaussian_blobs, two_spirals, file };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::gaussian_blobs: return "gaussian_blobs";
    case DatasetKind::two_spirals: return "two_spirals";
    case DatasetKind::file: return "file";
  }
  return "?";
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  std::size_t num_classes = 10;
  std::size_t dim = 20;
  std::size_t samples_per_class = 200;
  double class_separation = 3.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 2018;
  double train_fraction = 0.8;
  std::string path;         // kind == file
  bool has_header = false;  // kind == file

  void validate() const {
    if (kind != DatasetKind::file) {
      if (num_classes < 2) throw InvalidInput("data.num_classes must be >= 2");
      if (dim < 2) throw InvalidInput("data.dim must be >= 2");
      if (samples_per_class < 1) throw InvalidInput("data.samples_per_class must be >= 1");
      if (!(class_separation > 0.0)) throw InvalidInput("data.class_separation must be > 0");
      if (!(noise_sigma > 0.0)) throw InvalidInput("data.noise_sigma must be > 0");
    } else if (path.empty()) {
      throw InvalidInput("data.path is required when data.kind = file");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
      throw InvalidInput("data.train_fraction must lie in (0, 1)");
    }
  }
};

/// Seeded shuffle followed by a prefix split; the train part gets
/// round(n * train_fraction) samples.
inline DataSplit split_dataset(const Dataset& all, double train_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 1));
  rng.shuffle(order.begin(), order.end());
  const auto n_train =
      static_cast<std::size_t>(std::llround(static_cast<double>(all.size()) * train_fraction));
  if (n_train == 0 || n_train == all.size()) {
    throw InvalidInput("train/test split leaves one side empty (" + std::to_string(all.size()) +
                       " samples, train_fraction " + std::to_string(train_fraction) + ")");
  }
  const std::span<const std::size_t> idx(order);
  return {all.subset(idx.first(n_train)), all.subset(idx.subspan(n_train))};
}

namespace detail {

// Gaussian blobs: with dim >= K the centers are separation * e_c (pairwise
// equidistant); otherwise they sit on a circle in the first two coordinates.
inline Dataset make_blobs(const DatasetSpec& spec) {
  Dataset ds;
  ds.dim = spec.dim;
  ds.num_classes = spec.num_classes;
  Rng rng(derive_seed(spec.seed, 0));
  std::vector<double> center(spec.dim);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    std::fill(center.begin(), center.end(), 0.0);
    if (spec.dim >= spec.num_classes) {
      center[c] = spec.class_separation;
    } else {
      const double angle =
          2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(spec.num_classes);
      center[0] = spec.class_separation * std::cos(angle);
      center[1] = spec.class_separation * std::sin(angle);
    }
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      for (std::size_t k = 0; k < spec.dim; ++k) {
        ds.features.push_back(center[k] + spec.noise_sigma * rng.normal());
      }
      ds.labels.push_back(static_cast<std::int32_t>(c));
    }
  }
  return ds;
}

// K interleaved spiral arms in the first two coordinates, 1.75 turns each;
// the remaining coordinates carry noise only.
inline Dataset make_spirals(const DatasetSpec& spec) {
  Dataset ds;
  ds.dim = spec.dim;
  ds.num_classes = spec.num_classes;
  Rng rng(derive_seed(spec.seed, 0));
  const auto k = static_cast<double>(spec.num_classes);
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
      const double r = static_cast<double>(i + 1) / static_cast<double>(spec.samples_per_class);
      const double theta = 2.0 * std::numbers::pi * (1.75 * r + static_cast<double>(c) / k);
      for (std::size_t d = 0; d < spec.dim; ++d) {
        double base = 0.0;
        if (d == 0) base = spec.class_separation * r * std::cos(theta);
        if (d == 1) base = spec.class_separation * r * std::sin(theta);
        ds.features.push_back(base + spec.noise_sigma * rng.normal());
      }
      ds.labels.push_back(static_cast<std::int32_t>(c));
    }
  }
  return ds;
}

}  // namespace detail

/// Parses `d` feature columns followed by an integer label per line. With
/// `num_classes` set, labels must lie in [0, num_classes); otherwise the class
/// count is max label + 1.
inline Dataset load_csv(const std::string& path, bool has_header = false,
                        std::optional<std::size_t> num_classes = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file '" + path + "'");

  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::int32_t max_label = -1;
  auto fail = [&](const std::string& why) {
    throw InvalidInput(path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() < 2) fail("expected at least one feature and a label");

    const std::size_t d = cells.size() - 1;
    if (ds.dim == 0) {
      ds.dim = d;
    } else if (d != ds.dim) {
      fail("expected " + std::to_string(ds.dim) + " features, found " + std::to_string(d));
    }
    for (std::size_t k = 0; k < d; ++k) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cells[k].size() && (cells[k][used] == ' ' || cells[k][used] == '\t')) ++used;
      if (used == 0 || used != cells[k].size() || !std::isfinite(v)) {
        fail("non-numeric feature '" + cells[k] + "' in column " + std::to_string(k + 1));
      }
      ds.features.push_back(v);
    }
    long label = -1;
    std::size_t used = 0;
    try {
      label = std::stol(cells.back(), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    while (used < cells.back().size() && cells.back()[used] == ' ') ++used;
    if (used == 0 || used != cells.back().size()) fail("label '" + cells.back() + "' is not an integer");
    if (label < 0 || (num_classes && static_cast<std::size_t>(label) >= *num_classes)) {
      fail("label " + std::to_string(label) + " out of range");
    }
    ds.labels.push_back(static_cast<std::int32_t>(label));
    max_label = std::max(max_label, static_cast<std::int32_t>(label));
  }
  if (ds.empty()) throw InvalidInput(path + ": empty dataset");
  ds.num_classes = num_classes ? *num_classes : static_cast<std::size_t>(max_label) + 1;
  return ds;
}

/// Builds the train/test split described by `spec`; pure in `spec`.
inline DataSplit generate(const DatasetSpec& spec) {
  spec.validate();
  Dataset all;
  switch (spec.kind) {
    case DatasetKind::gaussian_blobs: all = detail::make_blobs(spec); break;
    case DatasetKind::two_spirals: all = detail::make_spirals(spec); break;
    case DatasetKind::file: all = load_csv(spec.path, spec.has_header); break;
  }
  return split_dataset(all, spec.train_fraction, spec.seed);
}

}  // namespace qnt
