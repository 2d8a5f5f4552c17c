#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace glcert {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

/// An unlabeled connected component with no path to a labeled node.
class UnsolvableComponent : public Error {
 public:
  UnsolvableComponent(const std::string& what, std::size_t node)
      : Error(what), node_(node) {}
  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

class HypothesisViolation : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// PointSet: n points in R^d, row-major.
// ---------------------------------------------------------------------------

class PointSet {
 public:
  PointSet() = default;
  PointSet(std::size_t n, std::size_t dim) : n_(n), dim_(dim), data_(n * dim, 0.0) {}
  PointSet(std::size_t dim, std::vector<double> data) : dim_(dim), data_(std::move(data)) {
    detail::require(dim_ > 0, "PointSet: dim must be positive");
    detail::require(data_.size() % dim_ == 0, "PointSet: data size is not a multiple of dim");
    n_ = data_.size() / dim_;
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return n_ == 0; }

  std::span<const double> operator[](std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<double> operator[](std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  const std::vector<double>& raw() const noexcept { return data_; }
  std::vector<double>& raw() noexcept { return data_; }

  void push_back(std::span<const double> p) {
    if (n_ == 0 && dim_ == 0) dim_ = p.size();
    detail::require(p.size() == dim_, "PointSet::push_back: dimension mismatch");
    data_.insert(data_.end(), p.begin(), p.end());
    ++n_;
  }

  PointSet subset(std::span<const std::size_t> idx) const {
    PointSet out(idx.size(), dim_);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = (*this)[idx[i]];
      std::copy(src.begin(), src.end(), out[i].begin());
    }
    return out;
  }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

inline double norm2(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Binary class of a real label; the GL threshold convention (>= 1/2 is class 1).
inline int label_class(double label) { return label >= 0.5 ? 1 : 0; }

// ---------------------------------------------------------------------------
// Randomness. All generators are seeded explicitly; derived seeds mix a base
// seed with a stream id so parallel cells never share a stream.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// Fisher-Yates with an explicit uniform draw so results don't depend on the
// standard library's shuffle implementation.
template <class T>
void seeded_shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng) {
  detail::require(k <= n, "sample_without_replacement: k > n");
  auto idx = iota_indices(n);
  seeded_shuffle(idx, rng);
  idx.resize(k);
  return idx;
}

inline std::vector<double> random_unit_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (auto& x : v) x = g(rng);
    n = norm2(v);
  }
  for (auto& x : v) x /= n;
  return v;
}

// ---------------------------------------------------------------------------
// Small statistics helpers.
// ---------------------------------------------------------------------------

inline double mean(std::span<const double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// Average ranks (1-based), ties share the mean rank.
inline std::vector<double> average_ranks(std::span<const double> v) {
  auto idx = iota_indices(v.size());
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[idx[t]] = r;
    i = j + 1;
  }
  return rank;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

/// Spearman rank correlation. NaN when undefined (fewer than two points or a
/// constant series).
inline double spearman(std::span<const double> a, std::span<const double> b) {
  detail::require(a.size() == b.size(), "spearman: length mismatch");
  if (a.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  auto ra = average_ranks(a);
  auto rb = average_ranks(b);
  return pearson(ra, rb);
}

// ---------------------------------------------------------------------------
// Parallel execution. GLCERT_THREADS caps the worker count.
// ---------------------------------------------------------------------------

inline std::size_t worker_count() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("GLCERT_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(cap));
  }
  return n;
}

namespace detail {
inline bool& inside_pool() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// Runs fn(i) for i in [0, n). Exceptions from workers are rethrown (the one
// with the smallest index wins, so failures are reported deterministically).
// Nested calls from a worker run serially.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         std::size_t max_workers = 0) {
  std::size_t workers = max_workers ? std::min(max_workers, worker_count()) : worker_count();
  workers = std::min(workers, n);
  if (detail::inside_pool()) workers = 1;
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      detail::inside_pool() = true;
      for (std::size_t i = w; i < n; i += workers) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace glcert
