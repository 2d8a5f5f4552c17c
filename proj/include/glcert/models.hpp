#pragma once

#include <bit>
#include <fstream>
#include <sstream>

#include "glcert/data.hpp"

namespace glcert {

enum class ModelKind { logistic, mlp, kernel };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::kernel: return "kernel";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logistic" || s == "lr") return ModelKind::logistic;
  if (s == "mlp" || s == "nn") return ModelKind::mlp;
  if (s == "kernel") return ModelKind::kernel;
  throw InvalidArgument("unknown model kind '" + s + "'");
}

struct TrainConfig {
  double learning_rate = 0.0;  // 0: 1/L for full-batch models, 0.1 for the MLP
  std::size_t epochs = 500;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  double l2 = 1e-4;
  std::size_t hidden = 64;
  std::size_t max_centers = 1000;
  // Full-batch optimizer: automatic = plain GD for logistic, Nesterov for kernel.
  enum class Optimizer { automatic, gd, nesterov } optimizer = Optimizer::automatic;
};

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + e^z) without overflow.
inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Binary classifier with a real-valued logit f(x); P(y=1|x) = sigmoid(f(x)).
///
/// Parameter layout:
///   logistic: [w (d), b]
///   mlp:      [W1 (H x d, row-major), b1 (H), w2 (H), b2]
///   kernel:   [alpha (m), b], with RBF centres and bandwidth stored alongside
struct SurrogateModel {
  ModelKind kind = ModelKind::logistic;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  std::vector<double> params;
  PointSet centers;
  double bandwidth = 1.0;
  TrainConfig train_config;

  double logit(std::span<const double> x) const {
    check_dim(x);
    const std::size_t d = input_dim;
    switch (kind) {
      case ModelKind::logistic: {
        double f = params[d];
        for (std::size_t j = 0; j < d; ++j) f += params[j] * x[j];
        return f;
      }
      case ModelKind::mlp: {
        const std::size_t h = hidden;
        const double* w1 = params.data();
        const double* b1 = w1 + h * d;
        const double* w2 = b1 + h;
        double f = w2[h];
        for (std::size_t u = 0; u < h; ++u) {
          double a = b1[u];
          for (std::size_t j = 0; j < d; ++j) a += w1[u * d + j] * x[j];
          f += w2[u] * std::tanh(a);
        }
        return f;
      }
      case ModelKind::kernel: {
        const std::size_t m = centers.size();
        const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
        double f = params[m];
        for (std::size_t c = 0; c < m; ++c) f += params[c] * std::exp(-squared_distance(x, centers[c]) * inv);
        return f;
      }
    }
    return 0.0;
  }

  /// ∇_x f(x)
  std::vector<double> logit_gradient(std::span<const double> x) const {
    check_dim(x);
    const std::size_t d = input_dim;
    std::vector<double> g(d, 0.0);
    switch (kind) {
      case ModelKind::logistic:
        std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(d), g.begin());
        break;
      case ModelKind::mlp: {
        const std::size_t h = hidden;
        const double* w1 = params.data();
        const double* b1 = w1 + h * d;
        const double* w2 = b1 + h;
        for (std::size_t u = 0; u < h; ++u) {
          double a = b1[u];
          for (std::size_t j = 0; j < d; ++j) a += w1[u * d + j] * x[j];
          const double t = std::tanh(a);
          const double back = w2[u] * (1.0 - t * t);
          for (std::size_t j = 0; j < d; ++j) g[j] += back * w1[u * d + j];
        }
        break;
      }
      case ModelKind::kernel: {
        const double s2 = bandwidth * bandwidth;
        for (std::size_t c = 0; c < centers.size(); ++c) {
          auto ctr = centers[c];
          const double k = params[c] * std::exp(-squared_distance(x, ctr) / (2.0 * s2));
          for (std::size_t j = 0; j < d; ++j) g[j] -= k * (x[j] - ctr[j]) / s2;
        }
        break;
      }
    }
    return g;
  }

  double predict_proba(std::span<const double> x) const {
    return std::clamp(sigmoid(logit(x)), 1e-300, std::nextafter(1.0, 0.0));
  }

  int predict(std::span<const double> x) const { return logit(x) >= 0.0 ? 1 : 0; }

  /// Cross-entropy of (x, y).
  double loss(std::span<const double> x, double y) const {
    const double f = logit(x);
    return softplus(f) - y * f;
  }

  /// ∇_x of the cross-entropy loss at (x, y).
  std::vector<double> gradient_wrt_input(std::span<const double> x, double y) const {
    const double s = sigmoid(logit(x)) - y;
    auto g = logit_gradient(x);
    for (double& v : g) v *= s;
    return g;
  }

 private:
  void check_dim(std::span<const double> x) const {
    detail::require(x.size() == input_dim, "SurrogateModel: input dimension mismatch");
  }
};

inline std::vector<double> gradient_wrt_input(const SurrogateModel& m, std::span<const double> x, double y) {
  return m.gradient_wrt_input(x, y);
}

namespace detail {

inline void check_training_data(const Dataset& train) {
  detail::require(train.size() >= 2, "train_surrogate: need at least 2 labeled points");
  bool has0 = false, has1 = false;
  for (double l : train.labels) (label_class(l) ? has1 : has0) = true;
  if (!(has0 && has1)) throw TrainingError("train_surrogate: training data has a single class");
}

inline void check_finite(double loss, const char* what) {
  if (!std::isfinite(loss)) throw TrainingError(std::string(what) + ": loss diverged");
}

// Largest eigenvalue of AᵀA / n for the design matrix A (n x p, row-major) by power iteration.
inline double gram_top_eigenvalue(const std::vector<double>& a, std::size_t n, std::size_t p, Rng& rng) {
  std::vector<double> v(p), av(n), w(p);
  std::normal_distribution<double> z;
  for (auto& x : v) x = z(rng);
  double lambda = 0.0;
  for (int it = 0; it < 100; ++it) {
    double nv = 0.0;
    for (double x : v) nv += x * x;
    nv = std::sqrt(nv);
    for (auto& x : v) x /= nv;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += a[i * p + j] * v[j];
      av[i] = s;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) w[j] += a[i * p + j] * av[i];
    double next = 0.0;
    for (std::size_t j = 0; j < p; ++j) next += w[j] * v[j];
    next /= static_cast<double>(n);
    v = w;
    if (std::abs(next - lambda) <= 1e-6 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

// Full-batch gradient descent for a linear logit over fixed features (bias is the
// last column, unpenalized). Step 1/L, so the objective never increases.
inline std::vector<double> fit_linear_logit(const std::vector<double>& feats, std::size_t n, std::size_t p,
                                            const std::vector<double>& y, const TrainConfig& cfg, bool accelerated,
                                            std::vector<double>* loss_trace) {
  Rng rng(mix_seed(cfg.seed, 11));
  double step = cfg.learning_rate;
  if (step <= 0.0) step = 1.0 / (0.25 * gram_top_eigenvalue(feats, n, p, rng) * 1.01 + cfg.l2);
  std::vector<double> w(p, 0.0), grad(p), f(n);
  auto objective = [&] {
    double l = 0.0;
    for (std::size_t i = 0; i < n; ++i) l += softplus(f[i]) - y[i] * f[i];
    l /= static_cast<double>(n);
    for (std::size_t j = 0; j + 1 < p; ++j) l += 0.5 * cfg.l2 * w[j] * w[j];
    return l;
  };
  auto refresh = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < p; ++j) s += feats[i * p + j] * w[j];
      f[i] = s;
    }
  };
  std::vector<double> prev = w, look = w;
  refresh();
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    if (accelerated) {
      // Gradient at the extrapolated point; f holds the logits of `look`.
      const double mom = static_cast<double>(e) / static_cast<double>(e + 3);
      for (std::size_t j = 0; j < p; ++j) look[j] = w[j] + mom * (w[j] - prev[j]);
      prev = w;
      w = look;
      refresh();
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = (sigmoid(f[i]) - y[i]) / static_cast<double>(n);
      for (std::size_t j = 0; j < p; ++j) grad[j] += r * feats[i * p + j];
    }
    for (std::size_t j = 0; j + 1 < p; ++j) grad[j] += cfg.l2 * w[j];
    for (std::size_t j = 0; j < p; ++j) w[j] -= step * grad[j];
    refresh();
    const double l = objective();
    check_finite(l, "train_surrogate");
    if (loss_trace) loss_trace->push_back(l);
  }
  return w;
}

inline SurrogateModel train_logistic(const Dataset& train, const TrainConfig& cfg, std::vector<double>* trace) {
  const std::size_t n = train.size(), d = train.dim(), p = d + 1;
  std::vector<double> feats(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(train.points[i].begin(), train.points[i].end(), feats.begin() + static_cast<std::ptrdiff_t>(i * p));
    feats[i * p + d] = 1.0;
  }
  SurrogateModel m;
  m.kind = ModelKind::logistic;
  m.input_dim = d;
  m.train_config = cfg;
  m.params = fit_linear_logit(feats, n, p, train.labels, cfg, cfg.optimizer == TrainConfig::Optimizer::nesterov, trace);
  return m;
}

inline SurrogateModel train_kernel(const Dataset& train, const TrainConfig& cfg, std::vector<double>* trace) {
  const std::size_t n = train.size(), d = train.dim();
  SurrogateModel m;
  m.kind = ModelKind::kernel;
  m.input_dim = d;
  m.train_config = cfg;
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) dists.push_back(distance(train.points[i], train.points[j]));
  m.bandwidth = median(std::move(dists));
  if (!(m.bandwidth > 0.0)) m.bandwidth = 1.0;
  Rng rng(mix_seed(cfg.seed, 12));
  if (n > cfg.max_centers) {
    auto idx = sample_without_replacement(n, cfg.max_centers, rng);
    std::sort(idx.begin(), idx.end());
    m.centers = train.points.subset(idx);
  } else {
    m.centers = train.points;
  }
  const std::size_t c = m.centers.size(), p = c + 1;
  const double inv = 1.0 / (2.0 * m.bandwidth * m.bandwidth);
  std::vector<double> feats(n * p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) feats[i * p + j] = std::exp(-squared_distance(train.points[i], m.centers[j]) * inv);
    feats[i * p + c] = 1.0;
  }
  m.params = fit_linear_logit(feats, n, p, train.labels, cfg, cfg.optimizer != TrainConfig::Optimizer::gd, trace);
  return m;
}

inline SurrogateModel train_mlp(const Dataset& train, const TrainConfig& cfg, std::vector<double>* trace) {
  const std::size_t n = train.size(), d = train.dim(), h = cfg.hidden;
  detail::require(h >= 1, "train_surrogate: hidden must be >= 1");
  SurrogateModel m;
  m.kind = ModelKind::mlp;
  m.input_dim = d;
  m.hidden = h;
  m.train_config = cfg;
  m.params.assign(h * d + 2 * h + 1, 0.0);
  Rng rng(mix_seed(cfg.seed, 13));
  std::normal_distribution<double> z;
  double* w1 = m.params.data();
  double* b1 = w1 + h * d;
  double* w2 = b1 + h;
  for (std::size_t t = 0; t < h * d; ++t) w1[t] = z(rng) / std::sqrt(static_cast<double>(d));
  for (std::size_t u = 0; u < h; ++u) w2[u] = z(rng) / std::sqrt(static_cast<double>(h));

  const double lr = cfg.learning_rate > 0.0 ? cfg.learning_rate : 0.1;
  const std::size_t bs = std::max<std::size_t>(1, std::min(cfg.batch_size, n));
  std::vector<double> grad(m.params.size()), act(h);
  auto order = iota_indices(n);
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    seeded_shuffle(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t t = start; t < stop; ++t) {
        const std::size_t i = order[t];
        auto x = train.points[i];
        double f = w2[h];
        for (std::size_t u = 0; u < h; ++u) {
          double a = b1[u];
          for (std::size_t j = 0; j < d; ++j) a += w1[u * d + j] * x[j];
          act[u] = std::tanh(a);
          f += w2[u] * act[u];
        }
        epoch_loss += softplus(f) - train.labels[i] * f;
        const double r = sigmoid(f) - train.labels[i];
        double* gw1 = grad.data();
        double* gb1 = gw1 + h * d;
        double* gw2 = gb1 + h;
        gw2[h] += r;
        for (std::size_t u = 0; u < h; ++u) {
          gw2[u] += r * act[u];
          const double back = r * w2[u] * (1.0 - act[u] * act[u]);
          gb1[u] += back;
          for (std::size_t j = 0; j < d; ++j) gw1[u * d + j] += back * x[j];
        }
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (std::size_t t = 0; t < h * d; ++t) grad[t] += cfg.l2 * m.params[t] / scale;
      for (std::size_t u = 0; u < h; ++u) grad[h * d + h + u] += cfg.l2 * w2[u] / scale;
      for (std::size_t t = 0; t < m.params.size(); ++t) m.params[t] -= lr * scale * grad[t];
    }
    epoch_loss /= static_cast<double>(n);
    check_finite(epoch_loss, "train_surrogate");
    if (trace) trace->push_back(epoch_loss);
  }
  for (double v : m.params) check_finite(v, "train_surrogate");
  return m;
}

}  // namespace detail

/// Fits a surrogate on the labeled rows of `train`. Deterministic given cfg.seed.
/// `loss_trace`, if given, receives the training objective after each epoch.
inline SurrogateModel train_surrogate(ModelKind kind, const Dataset& train, const TrainConfig& cfg = {},
                                      std::vector<double>* loss_trace = nullptr) {
  const Dataset lab = train.labeled_part();
  detail::check_training_data(lab);
  switch (kind) {
    case ModelKind::logistic: return detail::train_logistic(lab, cfg, loss_trace);
    case ModelKind::mlp: return detail::train_mlp(lab, cfg, loss_trace);
    case ModelKind::kernel: return detail::train_kernel(lab, cfg, loss_trace);
  }
  throw InvalidArgument("train_surrogate: unknown kind");
}

inline double surrogate_accuracy(const SurrogateModel& m, const Dataset& ds) {
  std::size_t right = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) right += m.predict(ds.points[i]) == label_class(ds.labels[i]) ? 1 : 0;
  return static_cast<double>(right) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------
// Substitute training with Jacobian-sign dataset augmentation
// ---------------------------------------------------------------------------

/// Black-box label oracle: classes for a batch of points.
using LabelOracle = std::function<std::vector<int>(const PointSet&)>;

struct SubstituteResult {
  SurrogateModel model;
  std::size_t victim_queries = 0;
  std::size_t pool_size = 0;  // after the last augmentation step
  std::size_t rounds = 0;
};

/// Each round queries the victim on unlabeled pool points, fits the surrogate,
/// and then doubles the pool with x + step * sign(∇_x P(assigned class | x)).
/// The returned model is the fit of the last round; the pool is capped by a
/// seeded reservoir of `pool_cap` points.
inline SubstituteResult substitute_train_loop(const LabelOracle& victim, const PointSet& seed_points,
                                              std::size_t rounds, double aug_step, ModelKind kind,
                                              const TrainConfig& cfg = {}, std::size_t pool_cap = 10000) {
  detail::require(rounds >= 1, "substitute_train_loop: rounds must be >= 1");
  detail::require(seed_points.size() >= 2, "substitute_train_loop: need at least 2 seed points");
  SubstituteResult out;
  Rng rng(mix_seed(cfg.seed, 14));
  Dataset pool;
  pool.points = seed_points;
  pool.name = "substitute_pool";
  std::size_t labeled_upto = 0;
  for (std::size_t r = 0; r < rounds; ++r) {
    if (labeled_upto < pool.size()) {
      std::vector<std::size_t> fresh(pool.size() - labeled_upto);
      std::iota(fresh.begin(), fresh.end(), labeled_upto);
      auto answers = victim(pool.points.subset(fresh));
      if (answers.size() != fresh.size()) throw Error("substitute_train_loop: victim returned wrong batch size");
      out.victim_queries += fresh.size();
      for (int a : answers) {
        pool.labels.push_back(static_cast<double>(a));
        pool.labeled_mask.push_back(true);
      }
      labeled_upto = pool.size();
    }
    TrainConfig round_cfg = cfg;
    round_cfg.seed = mix_seed(cfg.seed, 100 + r);
    out.model = train_surrogate(kind, pool, round_cfg);

    // Augment: every current pool point spawns one synthetic neighbour.
    const std::size_t cur = pool.size();
    PointSet extra(cur, pool.dim());
    for (std::size_t i = 0; i < cur; ++i) {
      auto g = out.model.logit_gradient(pool.points[i]);
      const double dir = pool.labels[i] >= 0.5 ? 1.0 : -1.0;  // ∇P(y=0) = -∇P(y=1)
      auto x = pool.points[i];
      auto dst = extra[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double s = dir * g[j];
        dst[j] = x[j] + aug_step * static_cast<double>((s > 0) - (s < 0));
      }
    }
    for (std::size_t i = 0; i < cur; ++i) pool.points.push_back(extra[i]);
    if (pool.size() > pool_cap) {
      // Keep the labeled prefix ordering: labeled rows first, then unlabeled synthetic rows.
      auto keep = sample_without_replacement(pool.size(), pool_cap, rng);
      std::sort(keep.begin(), keep.end());
      PointSet pts = pool.points.subset(keep);
      std::vector<double> labels;
      std::size_t kept_labeled = 0;
      for (auto k : keep)
        if (k < labeled_upto) {
          labels.push_back(pool.labels[k]);
          ++kept_labeled;
        }
      pool.points = std::move(pts);
      pool.labels = std::move(labels);
      pool.labeled_mask.assign(kept_labeled, true);
      labeled_upto = kept_labeled;
    }
  }
  out.pool_size = pool.size();
  out.rounds = rounds;
  return out;
}

// ---------------------------------------------------------------------------
// Persistence: text header terminated by "end\n", then little-endian float64
// values: params, centre coordinates (kernel only).
// ---------------------------------------------------------------------------

namespace detail {

inline void write_le_doubles(std::ostream& os, std::span<const double> v) {
  for (double x : v) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    os.write(b, 8);
  }
}

inline std::vector<double> read_le_doubles(std::istream& is, std::size_t count) {
  std::vector<double> v(count);
  for (auto& x : v) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw LoadError("load_model: truncated payload");
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= std::uint64_t{b[k]} << (8 * k);
    x = std::bit_cast<double>(bits);
  }
  return v;
}

}  // namespace detail

inline void save_model(std::ostream& os, const SurrogateModel& m) {
  std::ostringstream hdr;
  hdr << std::hexfloat;
  hdr << "glcert-surrogate 1\n"
      << "kind=" << to_string(m.kind) << '\n'
      << "input_dim=" << m.input_dim << '\n'
      << "hidden=" << m.hidden << '\n'
      << "n_params=" << m.params.size() << '\n'
      << "n_centers=" << m.centers.size() << '\n'
      << "bandwidth=" << m.bandwidth << '\n'
      << "learning_rate=" << m.train_config.learning_rate << '\n'
      << "epochs=" << m.train_config.epochs << '\n'
      << "batch_size=" << m.train_config.batch_size << '\n'
      << "seed=" << m.train_config.seed << '\n'
      << "l2=" << m.train_config.l2 << '\n'
      << "max_centers=" << m.train_config.max_centers << '\n'
      << "end\n";
  os << hdr.str();
  detail::write_le_doubles(os, m.params);
  detail::write_le_doubles(os, m.centers.raw());
}

inline void save_model(const std::string& path, const SurrogateModel& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot write '" + path + "'");
  save_model(os, m);
}

inline SurrogateModel load_model(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "glcert-surrogate 1") throw LoadError("load_model: bad header");
  std::map<std::string, std::string> kv;
  while (std::getline(is, line) && line != "end") {
    auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("load_model: malformed header line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (line != "end") throw LoadError("load_model: header not terminated");
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw LoadError("load_model: missing '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) { return std::strtod(get(k).c_str(), nullptr); };
  auto count = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };
  SurrogateModel m;
  m.kind = model_kind_from_string(get("kind"));
  m.input_dim = count("input_dim");
  m.hidden = count("hidden");
  m.bandwidth = num("bandwidth");
  m.train_config.learning_rate = num("learning_rate");
  m.train_config.epochs = count("epochs");
  m.train_config.batch_size = count("batch_size");
  m.train_config.seed = std::stoull(get("seed"));
  m.train_config.l2 = num("l2");
  m.train_config.max_centers = count("max_centers");
  m.train_config.hidden = m.hidden ? m.hidden : m.train_config.hidden;
  m.params = detail::read_le_doubles(is, count("n_params"));
  const std::size_t nc = count("n_centers");
  if (nc > 0) m.centers = PointSet(m.input_dim, detail::read_le_doubles(is, nc * m.input_dim));
  return m;
}

inline SurrogateModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("load_model: cannot open '" + path + "'");
  return load_model(is);
}

}  // namespace glcert
