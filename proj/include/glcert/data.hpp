#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "glcert/core.hpp"

namespace glcert {

/// Points with real labels and a labeled mask. Labels of unlabeled points are
/// retained for scoring; the solver only reads labels where the mask is set.
struct Dataset {
  PointSet points;
  std::vector<double> labels;
  std::vector<bool> labeled_mask;
  std::string name;
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return points.size(); }
  std::size_t dim() const noexcept { return points.dim(); }

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count(labeled_mask.begin(), labeled_mask.end(), true));
  }

  double labeling_rate() const {
    return size() == 0 ? 0.0 : static_cast<double>(labeled_count()) / static_cast<double>(size());
  }

  std::vector<std::size_t> labeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_mask.size(); ++i)
      if (labeled_mask[i]) out.push_back(i);
    return out;
  }

  std::vector<std::size_t> unlabeled_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labeled_mask.size(); ++i)
      if (!labeled_mask[i]) out.push_back(i);
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset out;
    out.points = points.subset(idx);
    out.labels.reserve(idx.size());
    out.labeled_mask.reserve(idx.size());
    for (auto i : idx) {
      out.labels.push_back(labels[i]);
      out.labeled_mask.push_back(labeled_mask[i]);
    }
    out.name = name;
    out.metadata = metadata;
    return out;
  }

  /// Only the labeled rows.
  Dataset labeled_part() const {
    auto idx = labeled_indices();
    return subset(idx);
  }

  /// Throws InvalidArgument if a structural invariant is broken.
  void validate(bool for_solver = false) const {
    detail::require(size() >= 1, "Dataset '" + name + "': empty");
    detail::require(labels.size() == size() && labeled_mask.size() == size(),
                    "Dataset '" + name + "': points/labels/mask length mismatch");
    detail::require(dim() >= 1, "Dataset '" + name + "': dim must be positive");
    for (double v : points.raw())
      detail::require(std::isfinite(v), "Dataset '" + name + "': non-finite coordinate");
    for (std::size_t i = 0; i < size(); ++i)
      if (labeled_mask[i])
        detail::require(std::isfinite(labels[i]), "Dataset '" + name + "': non-finite label at " + std::to_string(i));
    if (for_solver) detail::require(labeled_count() >= 1, "Dataset '" + name + "': no labeled points");
  }
};

/// Training rows (as given) followed by query rows marked unlabeled. This is
/// the transductive SSL problem the GL classifier solves.
inline Dataset transductive_union(const Dataset& train, const Dataset& queries) {
  detail::require(train.dim() == queries.dim() || train.size() == 0 || queries.size() == 0,
                  "transductive_union: dimension mismatch");
  Dataset out;
  out.points = train.points;
  out.labels = train.labels;
  out.labeled_mask = train.labeled_mask;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    out.points.push_back(queries.points[i]);
    out.labels.push_back(queries.labels[i]);
    out.labeled_mask.push_back(false);
  }
  out.name = train.name;
  out.metadata = train.metadata;
  return out;
}

struct SplitSpec {
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t validation_count = 0;
  std::uint64_t seed = 0;

  std::size_t total() const { return train_count + test_count + validation_count; }
};

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

namespace detail {

// Class 0: upper unit half-circle centred at the origin. Class 1: lower unit
// half-circle centred at (1, 0.5). Same construction as scikit-learn's
// make_moons, with random angles.
inline Dataset halfmoon_sample(std::size_t n, double noise_std, Rng& rng, const std::string& name) {
  if (n == 0) {
    Dataset empty;
    empty.points = PointSet(0, 2);
    empty.name = name;
    return empty;
  }
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t n0 = n - n / 2;
  Dataset ds;
  ds.points = PointSet(n, 2);
  ds.labels.resize(n);
  ds.labeled_mask.assign(n, true);
  ds.name = name;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = angle(rng);
    auto p = ds.points[i];
    if (i < n0) {
      p[0] = std::cos(t);
      p[1] = std::sin(t);
      ds.labels[i] = 0.0;
    } else {
      p[0] = 1.0 - std::cos(t);
      p[1] = 0.5 - std::sin(t);
      ds.labels[i] = 1.0;
    }
  }
  if (noise_std > 0.0)
    for (double& v : ds.points.raw()) v += noise_std * gauss(rng);
  auto order = iota_indices(n);
  seeded_shuffle(order, rng);
  Dataset shuffled = ds.subset(order);
  return shuffled;
}

}  // namespace detail

/// Two interleaved half-circles with isotropic Gaussian noise. Train and test
/// are drawn from independent streams of the same seed. All points labeled.
/// n_test may be 0 (empty test set).
inline std::pair<Dataset, Dataset> gen_halfmoon(std::size_t n_train, std::size_t n_test, double noise_std,
                                                std::uint64_t seed) {
  detail::require(n_train >= 1, "gen_halfmoon: n_train must be positive");
  detail::require(noise_std >= 0.0 && std::isfinite(noise_std), "gen_halfmoon: noise_std must be >= 0");
  Rng train_rng(mix_seed(seed, 1));
  Rng test_rng(mix_seed(seed, 2));
  auto train = detail::halfmoon_sample(n_train, noise_std, train_rng, "halfmoon");
  auto test = detail::halfmoon_sample(n_test, noise_std, test_rng, "halfmoon");
  for (auto* ds : {&train, &test}) {
    std::ostringstream os;
    os << std::setprecision(17) << noise_std;
    ds->metadata["noise_std"] = os.str();
    ds->metadata["seed"] = std::to_string(seed);
  }
  return {std::move(train), std::move(test)};
}

/// Uniform samples in [0,1]^dim labeled by `label_fn` (all points labeled).
inline Dataset gen_uniform(std::size_t n, std::size_t dim, std::uint64_t seed,
                           const std::function<double(std::span<const double>)>& label_fn) {
  detail::require(n >= 1 && dim >= 1, "gen_uniform: n and dim must be positive");
  Rng rng(mix_seed(seed, 3));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset ds;
  ds.points = PointSet(n, dim);
  for (double& v : ds.points.raw()) v = u(rng);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = label_fn(ds.points[i]);
  ds.labeled_mask.assign(n, true);
  ds.name = "uniform";
  ds.metadata["seed"] = std::to_string(seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Label masks
// ---------------------------------------------------------------------------

/// Marks exactly `labeled_count` points as labeled, resampling (bounded) until
/// both classes appear among them.
inline Dataset apply_label_mask(const Dataset& ds, std::size_t labeled_count, std::uint64_t seed,
                                int max_retries = 100) {
  detail::require(labeled_count >= 1 && labeled_count <= ds.size(),
                  "apply_label_mask: labeled_count must be in [1, N]");
  Rng rng(mix_seed(seed, 4));
  for (int attempt = 0; attempt < max_retries; ++attempt) {
    auto chosen = sample_without_replacement(ds.size(), labeled_count, rng);
    bool has0 = false, has1 = false;
    for (auto i : chosen) (label_class(ds.labels[i]) ? has1 : has0) = true;
    if (!(has0 && has1)) continue;
    Dataset out = ds;
    out.labeled_mask.assign(ds.size(), false);
    for (auto i : chosen) out.labeled_mask[i] = true;
    out.metadata["labeled_count"] = std::to_string(labeled_count);
    out.metadata["mask_seed"] = std::to_string(seed);
    return out;
  }
  throw Error("apply_label_mask: could not cover both classes with " + std::to_string(labeled_count) +
              " labeled points after " + std::to_string(max_retries) + " attempts");
}

// ---------------------------------------------------------------------------
// Abalone (UCI layout: Sex,Length,Diameter,Height,Whole,Shucked,Viscera,Shell,Rings)
// ---------------------------------------------------------------------------

enum class SexEncoding { one_hot, drop };

struct AbaloneOptions {
  bool header = false;
  SexEncoding sex = SexEncoding::one_hot;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    s = b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct AbaloneRow {
  char sex;
  std::array<double, 7> numeric;
  double rings;
};

}  // namespace detail

/// Loads the UCI Abalone CSV and returns (train, test, validation). Numeric
/// features are standardized with train-split statistics; the binary label is
/// rings > median(train rings). Both choices are recorded in metadata.
inline std::tuple<Dataset, Dataset, Dataset> load_abalone(const std::string& path, const SplitSpec& split,
                                                          const AbaloneOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw LoadError("load_abalone: cannot open '" + path + "'");
  std::vector<detail::AbaloneRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && opts.header) continue;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv_line(line);
    if (f.size() != 9) throw LoadError("load_abalone: line " + std::to_string(line_no) + ": expected 9 fields");
    if (f[0] != "M" && f[0] != "F" && f[0] != "I")
      throw LoadError("load_abalone: line " + std::to_string(line_no) + ": bad sex value '" + f[0] + "'");
    detail::AbaloneRow row{f[0][0], {}, 0.0};
    for (int j = 0; j < 8; ++j) {
      auto v = detail::parse_double(f[static_cast<std::size_t>(j + 1)]);
      if (!v) throw LoadError("load_abalone: line " + std::to_string(line_no) + ": non-numeric field");
      if (j < 7)
        row.numeric[static_cast<std::size_t>(j)] = *v;
      else
        row.rings = *v;
    }
    rows.push_back(row);
  }
  if (split.train_count == 0) throw LoadError("load_abalone: train_count must be positive");
  if (split.total() > rows.size())
    throw LoadError("load_abalone: requested " + std::to_string(split.total()) + " rows but file has " +
                    std::to_string(rows.size()));

  Rng rng(mix_seed(split.seed, 5));
  auto order = sample_without_replacement(rows.size(), split.total(), rng);
  std::span<const std::size_t> all(order);
  auto tr = all.subspan(0, split.train_count);
  auto te = all.subspan(split.train_count, split.test_count);
  auto va = all.subspan(split.train_count + split.test_count, split.validation_count);

  std::array<double, 7> mu{}, sd{};
  for (int j = 0; j < 7; ++j) {
    double s = 0.0;
    for (auto i : tr) s += rows[i].numeric[static_cast<std::size_t>(j)];
    mu[static_cast<std::size_t>(j)] = s / static_cast<double>(tr.size());
    double v = 0.0;
    for (auto i : tr) {
      const double t = rows[i].numeric[static_cast<std::size_t>(j)] - mu[static_cast<std::size_t>(j)];
      v += t * t;
    }
    v /= static_cast<double>(tr.size());
    sd[static_cast<std::size_t>(j)] = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  std::vector<double> train_rings;
  for (auto i : tr) train_rings.push_back(rows[i].rings);
  const double threshold = median(train_rings);

  const std::size_t dim = opts.sex == SexEncoding::one_hot ? 10 : 7;
  auto build = [&](std::span<const std::size_t> idx) {
    Dataset ds;
    ds.points = PointSet(idx.size(), dim);
    ds.labels.resize(idx.size());
    ds.labeled_mask.assign(idx.size(), true);
    ds.name = "abalone";
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto& row = rows[idx[r]];
      auto p = ds.points[r];
      for (std::size_t j = 0; j < 7; ++j) p[j] = (row.numeric[j] - mu[j]) / sd[j];
      if (opts.sex == SexEncoding::one_hot) {
        p[7] = row.sex == 'M' ? 1.0 : 0.0;
        p[8] = row.sex == 'F' ? 1.0 : 0.0;
        p[9] = row.sex == 'I' ? 1.0 : 0.0;
      }
      ds.labels[r] = row.rings > threshold ? 1.0 : 0.0;
    }
    std::ostringstream os;
    os << std::setprecision(17) << threshold;
    ds.metadata["rings_threshold"] = os.str();
    ds.metadata["label_rule"] = "label = 1 iff rings > train median";
    ds.metadata["sex_encoding"] = opts.sex == SexEncoding::one_hot ? "one_hot" : "drop";
    ds.metadata["standardization"] = "per-coordinate z-score using train-split mean and population std";
    ds.metadata["split_seed"] = std::to_string(split.seed);
    return ds;
  };
  return {build(tr), build(te), build(va)};
}

// ---------------------------------------------------------------------------
// MNIST 1 vs 7 (IDX files)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw LoadError(what + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace detail

/// Digit 1 -> label 0, digit 7 -> label 1, pixels scaled to [0,1]. Train and
/// test each hold `per_class` images of each digit, disjoint.
inline std::pair<Dataset, Dataset> load_mnist_1v7(const std::string& images_path, const std::string& labels_path,
                                                  std::size_t per_class, std::uint64_t seed) {
  if (per_class == 0) throw LoadError("load_mnist_1v7: per_class must be positive");
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);
  if (detail::read_be32(img, 0, "images") != 0x00000803u) throw LoadError("load_mnist_1v7: bad image magic number");
  if (detail::read_be32(lab, 0, "labels") != 0x00000801u) throw LoadError("load_mnist_1v7: bad label magic number");
  const std::size_t n = detail::read_be32(img, 4, "images");
  const std::size_t rows = detail::read_be32(img, 8, "images");
  const std::size_t cols = detail::read_be32(img, 12, "images");
  const std::size_t nl = detail::read_be32(lab, 4, "labels");
  if (n != nl) throw LoadError("load_mnist_1v7: image/label count mismatch");
  const std::size_t dim = rows * cols;
  if (dim == 0) throw LoadError("load_mnist_1v7: zero image size");
  if (img.size() < 16 + n * dim) throw LoadError("load_mnist_1v7: truncated image file");
  if (lab.size() < 8 + n) throw LoadError("load_mnist_1v7: truncated label file");

  std::vector<std::size_t> ones, sevens;
  for (std::size_t i = 0; i < n; ++i) {
    if (lab[8 + i] == 1) ones.push_back(i);
    if (lab[8 + i] == 7) sevens.push_back(i);
  }
  if (ones.size() < 2 * per_class || sevens.size() < 2 * per_class)
    throw LoadError("load_mnist_1v7: not enough images of digit 1 or 7 for per_class=" + std::to_string(per_class));
  Rng rng(mix_seed(seed, 6));
  seeded_shuffle(ones, rng);
  seeded_shuffle(sevens, rng);

  auto build = [&](std::size_t offset) {
    Dataset ds;
    ds.points = PointSet(2 * per_class, dim);
    ds.labels.resize(2 * per_class);
    ds.labeled_mask.assign(2 * per_class, true);
    ds.name = "mnist_1v7";
    for (std::size_t r = 0; r < 2 * per_class; ++r) {
      const bool seven = r >= per_class;
      const std::size_t src = seven ? sevens[offset + r - per_class] : ones[offset + r];
      auto p = ds.points[r];
      for (std::size_t j = 0; j < dim; ++j) p[j] = static_cast<double>(img[16 + src * dim + j]) / 255.0;
      ds.labels[r] = seven ? 1.0 : 0.0;
    }
    auto order = iota_indices(2 * per_class);
    seeded_shuffle(order, rng);
    return ds.subset(order);
  };
  auto train = build(0);
  auto test = build(per_class);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// CSV export: x0..x{d-1},label,labeled[,provenance]
// ---------------------------------------------------------------------------

inline void write_dataset_csv(std::ostream& os, const Dataset& ds, bool header = true,
                              const std::vector<std::string>* provenance = nullptr) {
  if (header) {
    for (std::size_t j = 0; j < ds.dim(); ++j) os << 'x' << j << ',';
    os << "label,labeled";
    if (provenance) os << ",provenance";
    os << '\n';
  }
  os << std::setprecision(17);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.points[i]) os << v << ',';
    os << ds.labels[i] << ',' << (ds.labeled_mask[i] ? 1 : 0);
    if (provenance) os << ',' << (*provenance)[i];
    os << '\n';
  }
}

inline void write_dataset_csv(const std::string& path, const Dataset& ds, bool header = true,
                              const std::vector<std::string>* provenance = nullptr) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  write_dataset_csv(os, ds, header, provenance);
}

/// Reads the export format. With a header, a trailing `provenance` column is
/// recognised and skipped.
inline Dataset read_dataset_csv(const std::string& path, bool header = true) {
  std::ifstream in(path);
  if (!in) throw LoadError("read_dataset_csv: cannot open '" + path + "'");
  Dataset ds;
  ds.name = path;
  std::string line;
  std::size_t line_no = 0;
  bool has_provenance = false;
  std::size_t dim = 0;
  std::vector<double> coords;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto f = detail::split_csv_line(line);
    if (line_no == 1 && header) {
      has_provenance = !f.empty() && f.back() == "provenance";
      continue;
    }
    const std::size_t ncols = f.size() - (has_provenance ? 1 : 0);
    if (ncols < 3) throw LoadError("read_dataset_csv: line " + std::to_string(line_no) + ": too few columns");
    if (dim == 0) dim = ncols - 2;
    if (ncols - 2 != dim) throw LoadError("read_dataset_csv: line " + std::to_string(line_no) + ": ragged row");
    coords.clear();
    for (std::size_t j = 0; j < ncols; ++j) {
      auto v = detail::parse_double(f[j]);
      if (!v) throw LoadError("read_dataset_csv: line " + std::to_string(line_no) + ": bad number '" + f[j] + "'");
      coords.push_back(*v);
    }
    ds.points.push_back(std::span<const double>(coords.data(), dim));
    ds.labels.push_back(coords[dim]);
    ds.labeled_mask.push_back(coords[dim + 1] != 0.0);
  }
  if (ds.size() == 0) throw LoadError("read_dataset_csv: no rows in '" + path + "'");
  return ds;
}

}  // namespace glcert
