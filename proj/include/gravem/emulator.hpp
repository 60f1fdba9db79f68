#pragma once

// Gaussian-process emulator of the distance surface D(Theta).
//
//   D = X beta + eps,  eps ~ N(0, Sigma),
//   Sigma_ij = sigma2 exp(-phi^2 |u_i - u_j|^2) + [i == j] tau2
//
// where X has rows (1, Theta) and u is Theta rescaled to [0,1] per axis using
// the prior box.

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "gravem/design.hpp"
#include "gravem/error.hpp"
#include "gravem/hash.hpp"
#include "gravem/model.hpp"
#include "gravem/parallel.hpp"
#include "gravem/rng.hpp"

namespace gravem {

inline constexpr std::size_t kTrendTerms = kGravityAxes + 1;

struct GpHyper {
  double sigma2 = 1.0;  // partial sill
  double nugget = 0.0;  // tau^2
  double phi = 1.0;     // inverse range

  void validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw NumericError("GP sigma2 must be positive");
    if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw NumericError("GP nugget must be nonnegative");
    if (!(phi > 0.0) || !std::isfinite(phi)) throw NumericError("GP phi must be positive");
  }
};

/// Intercept followed by one slope per gravity parameter.
struct TrendCoeffs {
  std::array<double, kTrendTerms> beta{};

  double intercept() const { return beta[0]; }
  double slope(std::size_t axis) const { return beta[axis + 1]; }
  double operator()(const GravityParams& g) const {
    double v = beta[0];
    for (std::size_t a = 0; a < kGravityAxes; ++a) v += beta[a + 1] * g[a];
    return v;
  }
};

/// Affine map from parameter space to the kernel's input space.
struct InputScaling {
  std::array<double, kGravityAxes> offset{0.0, 0.0, 0.0, 0.0};
  std::array<double, kGravityAxes> scale{1.0, 1.0, 1.0, 1.0};

  static InputScaling from_box(const PriorBox& b) {
    InputScaling s;
    for (std::size_t a = 0; a < kGravityAxes; ++a) {
      s.offset[a] = b.lo[a];
      s.scale[a] = b.side(a);
    }
    return s;
  }
  Eigen::Vector4d apply(const GravityParams& g) const {
    Eigen::Vector4d u;
    for (std::size_t a = 0; a < kGravityAxes; ++a) u[static_cast<Eigen::Index>(a)] = (g[a] - offset[a]) / scale[a];
    return u;
  }
};

/// Covariance between two inputs already in kernel coordinates.
inline double gp_covariance(const Eigen::Ref<const Eigen::VectorXd>& ui, const Eigen::Ref<const Eigen::VectorXd>& uj,
                            const GpHyper& h, bool same_index) {
  if (same_index) return h.sigma2 + h.nugget;
  return h.sigma2 * std::exp(-h.phi * h.phi * (ui - uj).squaredNorm());
}

inline double gp_covariance(const GravityParams& a, const GravityParams& b, const GpHyper& h, bool same_index,
                            const InputScaling& scaling = {}) {
  return gp_covariance(scaling.apply(a), scaling.apply(b), h, same_index);
}

namespace detail {

inline Eigen::MatrixXd scaled_inputs(const std::vector<GravityParams>& pts, const InputScaling& s) {
  Eigen::MatrixXd U(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(kGravityAxes));
  for (std::size_t i = 0; i < pts.size(); ++i) U.row(static_cast<Eigen::Index>(i)) = s.apply(pts[i]).transpose();
  return U;
}

inline Eigen::MatrixXd trend_design(const std::vector<GravityParams>& pts) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(pts.size()), static_cast<Eigen::Index>(kTrendTerms));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    X(r, 0) = 1.0;
    for (std::size_t a = 0; a < kGravityAxes; ++a) X(r, static_cast<Eigen::Index>(a + 1)) = pts[i][a];
  }
  return X;
}

/// exp(-phi^2 |u_i - u_j|^2) for all pairs, unit diagonal.
inline Eigen::MatrixXd correlation(const Eigen::MatrixXd& U, double phi) {
  const Eigen::Index p = U.rows();
  Eigen::MatrixXd R(p, p);
  const double phi2 = phi * phi;
  for (Eigen::Index i = 0; i < p; ++i) {
    R(i, i) = 1.0;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = std::exp(-phi2 * (U.row(i) - U.row(j)).squaredNorm());
      R(i, j) = v;
      R(j, i) = v;
    }
  }
  return R;
}

inline double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace detail

/// Gaussian log-density of D under the model with the given hyperparameters
/// and trend. `jitter` (in units of sigma2) is added to the diagonal.
inline double gp_log_likelihood(const std::vector<GravityParams>& points, const std::vector<double>& D, const GpHyper& hyper,
                                const TrendCoeffs& trend, const InputScaling& scaling = {}, double jitter = 0.0) {
  hyper.validate();
  detail::require(points.size() == D.size() && !points.empty(), "design and response sizes differ");
  const Eigen::MatrixXd U = detail::scaled_inputs(points, scaling);
  const auto p = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd S = hyper.sigma2 * detail::correlation(U, hyper.phi);
  S.diagonal().array() += hyper.nugget + jitter * hyper.sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("GP covariance is not positive definite; raise the nugget");
  Eigen::VectorXd r(p);
  for (Eigen::Index i = 0; i < p; ++i) r[i] = D[static_cast<std::size_t>(i)] - trend(points[static_cast<std::size_t>(i)]);
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(p) * std::log(2.0 * std::numbers::pi) + detail::log_det(llt) + quad);
}

struct FitOptions {
  std::size_t starts = 8;
  std::uint64_t seed = 0x6770666974ULL;
  /// Search box for log(phi) and log(nugget / sigma2).
  double log_phi_lo = std::log(0.25), log_phi_hi = std::log(100.0);
  double log_ratio_lo = std::log(1e-10), log_ratio_hi = std::log(10.0);
  std::size_t max_iterations = 2000;
  double simplex_tolerance = 1e-5;
  /// Diagonal floor, as a multiple of sigma2.
  double jitter = 1e-8;
  std::size_t workers = 1;
};

struct FitDiagnostics {
  std::size_t starts = 0;
  std::size_t converged = 0;
  std::vector<double> start_nll;  // best negative log-likelihood reached per start
  std::vector<bool> start_converged;
  double best_nll = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;  // D explained exactly by the trend
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

class TrainedEmulator;
TrainedEmulator condition_emulator(const TrainingSet&, const GpHyper&, double jitter);

/// Fitted GP; immutable and safe to share between threads.
class TrainedEmulator {
public:
  TrainedEmulator() = default;

  const std::vector<GravityParams>& points() const { return points_; }
  const std::vector<double>& responses() const { return D_; }
  const GpHyper& hyper() const { return hyper_; }
  const TrendCoeffs& trend() const { return trend_; }
  const InputScaling& scaling() const { return scaling_; }
  const PriorBox& bounds() const { return bounds_; }
  const PinnedAxes& pinned() const { return pinned_; }
  const FitDiagnostics& diagnostics() const { return diag_; }
  double jitter() const { return jitter_; }
  std::size_t size() const { return points_.size(); }
  const std::string& observed_hash() const { return observed_hash_; }
  const std::string& simulator_hash() const { return simulator_hash_; }
  SummaryKind statistic() const { return kind_; }
  /// Which trend columns were estimated; the rest are held at zero.
  const std::array<bool, kTrendTerms>& active_terms() const { return active_; }

  /// Conditional normal law of D at theta given the training data.
  Prediction predict(const GravityParams& theta) const {
    const double total = hyper_.sigma2 + hyper_.nugget;
    if (degenerate_) return {trend_(theta), std::max(total, kVarianceFloor)};
    const Eigen::Vector4d u = scaling_.apply(theta);
    const Eigen::Index p = U_.rows();
    Eigen::VectorXd k(p);
    const double phi2 = hyper_.phi * hyper_.phi;
    for (Eigen::Index i = 0; i < p; ++i) k[i] = hyper_.sigma2 * std::exp(-phi2 * (U_.row(i).transpose() - u).squaredNorm());
    const double mean = trend_(theta) + k.dot(alpha_);
    const Eigen::VectorXd w = llt_.matrixL().solve(k);
    const double var = total - w.squaredNorm();
    return {mean, std::clamp(var, kVarianceFloor * std::max(1.0, total), total)};
  }

  /// Closed-form leave-one-out residuals D_i - mean_{-i} and their variances
  /// (trend and hyperparameters held fixed).
  std::vector<Prediction> leave_one_out() const {
    std::vector<Prediction> out(points_.size());
    if (degenerate_) return out;
    const Eigen::MatrixXd inv = llt_.solve(Eigen::MatrixXd::Identity(U_.rows(), U_.rows()));
    for (Eigen::Index i = 0; i < U_.rows(); ++i) {
      const double q = inv(i, i);
      out[static_cast<std::size_t>(i)] = {alpha_[i] / q, 1.0 / q};
    }
    return out;
  }

  std::uint64_t content_hash() const {
    std::ostringstream s;
    save(s);
    return fnv1a(s.str());
  }

  void save(std::ostream& out) const;
  static TrainedEmulator load(std::istream& in);

  static constexpr double kVarianceFloor = 1e-12;

private:
  friend TrainedEmulator condition_emulator(const TrainingSet&, const GpHyper&, double);
  friend TrainedEmulator fit_emulator(const TrainingSet&, const FitOptions&);

  static TrainedEmulator assemble(const TrainingSet& ts, const GpHyper& hyper, double jitter);
  void factorize();

  std::vector<GravityParams> points_;
  std::vector<double> D_;
  Eigen::MatrixXd U_;
  Eigen::MatrixXd X_;
  std::array<bool, kTrendTerms> active_{};
  GpHyper hyper_;
  TrendCoeffs trend_;
  InputScaling scaling_;
  PriorBox bounds_;
  PinnedAxes pinned_{};
  double jitter_ = 1e-8;
  bool degenerate_ = false;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  FitDiagnostics diag_;
  std::string observed_hash_, simulator_hash_;
  SummaryKind kind_ = SummaryKind::zero_proportion;
};

namespace detail {

/// Trend columns that vary over the design; the intercept is always kept.
inline std::array<bool, kTrendTerms> active_trend_terms(const std::vector<GravityParams>& pts) {
  std::array<bool, kTrendTerms> active{};
  active[0] = true;
  for (std::size_t a = 0; a < kGravityAxes; ++a)
    for (const auto& p : pts)
      if (p[a] != pts.front()[a]) {
        active[a + 1] = true;
        break;
      }
  return active;
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::array<bool, kTrendTerms>& active) {
  const auto n = std::count(active.begin(), active.end(), true);
  Eigen::MatrixXd Xa(X.rows(), n);
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < kTrendTerms; ++j)
    if (active[j]) Xa.col(c++) = X.col(static_cast<Eigen::Index>(j));
  return Xa;
}

inline TrendCoeffs expand_trend(const Eigen::VectorXd& b, const std::array<bool, kTrendTerms>& active) {
  TrendCoeffs t;
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < kTrendTerms; ++j) t.beta[j] = active[j] ? b[c++] : 0.0;
  return t;
}

/// Generalized least squares of D on Xa under covariance factor `llt`.
inline Eigen::VectorXd gls(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::MatrixXd& Xa, const Eigen::VectorXd& D) {
  const Eigen::MatrixXd CiX = llt.solve(Xa);
  const Eigen::MatrixXd A = Xa.transpose() * CiX;
  return A.ldlt().solve(CiX.transpose() * D);
}

struct Profile {
  bool ok = false;
  double nll = std::numeric_limits<double>::infinity();
  double sigma2 = 0.0;
  Eigen::VectorXd beta;
};

/// Negative log-likelihood with the trend and sigma2 profiled out, for
/// correlation parameters phi and g = nugget / sigma2.
inline Profile profile(const Eigen::MatrixXd& U, const Eigen::MatrixXd& Xa, const Eigen::VectorXd& D, double phi, double g,
                       double jitter) {
  Profile out;
  Eigen::MatrixXd C = correlation(U, phi);
  C.diagonal().array() += g + jitter;
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() != Eigen::Success) return out;
  out.beta = gls(llt, Xa, D);
  const Eigen::VectorXd r = D - Xa * out.beta;
  const double p = static_cast<double>(D.size());
  out.sigma2 = r.dot(llt.solve(r)) / p;
  if (!(out.sigma2 > 0.0) || !std::isfinite(out.sigma2)) return out;
  out.nll = 0.5 * (p * std::log(2.0 * std::numbers::pi * out.sigma2) + log_det(llt) + p);
  out.ok = std::isfinite(out.nll);
  return out;
}

struct SearchContext {
  const Eigen::MatrixXd* U;
  const Eigen::MatrixXd* Xa;
  const Eigen::VectorXd* D;
  const FitOptions* opt;
};

inline double search_objective(const gsl_vector* x, void* params) {
  const auto* ctx = static_cast<const SearchContext*>(params);
  const double lp = gsl_vector_get(x, 0), lg = gsl_vector_get(x, 1);
  const FitOptions& o = *ctx->opt;
  if (lp < o.log_phi_lo || lp > o.log_phi_hi || lg < o.log_ratio_lo || lg > o.log_ratio_hi) return GSL_POSINF;
  const Profile pr = profile(*ctx->U, *ctx->Xa, *ctx->D, std::exp(lp), std::exp(lg), o.jitter);
  return pr.ok ? pr.nll : GSL_POSINF;
}

struct StartResult {
  double nll = std::numeric_limits<double>::infinity();
  double log_phi = 0.0, log_ratio = 0.0;
  bool converged = false;
};

inline StartResult run_start(const SearchContext& ctx, double lp0, double lg0) {
  const FitOptions& o = *ctx.opt;
  gsl_multimin_function f{&search_objective, 2, const_cast<SearchContext*>(&ctx)};
  gsl_vector* x = gsl_vector_alloc(2);
  gsl_vector* step = gsl_vector_alloc(2);
  gsl_vector_set(x, 0, lp0);
  gsl_vector_set(x, 1, lg0);
  gsl_vector_set(step, 0, 0.1 * (o.log_phi_hi - o.log_phi_lo));
  gsl_vector_set(step, 1, 0.1 * (o.log_ratio_hi - o.log_ratio_lo));
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, 2);
  StartResult res;
  if (gsl_multimin_fminimizer_set(s, &f, x, step) == GSL_SUCCESS) {
    for (std::size_t it = 0; it < o.max_iterations; ++it) {
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), o.simplex_tolerance) == GSL_SUCCESS) {
        res.converged = true;
        break;
      }
    }
    res.nll = gsl_multimin_fminimizer_minimum(s);
    res.log_phi = gsl_vector_get(gsl_multimin_fminimizer_x(s), 0);
    res.log_ratio = gsl_vector_get(gsl_multimin_fminimizer_x(s), 1);
    if (!std::isfinite(res.nll)) res.converged = false;
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  return res;
}

/// Stratified draw: one point per row/column of an n x n partition of [0,1]^2.
inline std::vector<std::array<double, 2>> latin_hypercube(std::size_t n, std::uint64_t seed) {
  Substream rng(seed);
  std::vector<std::array<double, 2>> pts(n);
  for (std::size_t d = 0; d < 2; ++d) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i) pts[i][d] = (static_cast<double>(perm[i]) + rng.uniform()) / static_cast<double>(n);
  }
  return pts;
}

inline void check_training(const TrainingSet& ts) {
  detail::require(ts.points.size() == ts.distances.size(), "training set sizes differ");
  detail::require(ts.size() >= 2, "training set needs at least two design points");
  bool distinct = false;
  for (const auto& p : ts.points)
    if (!(p == ts.points.front())) distinct = true;
  detail::require(distinct, "training set needs at least two distinct design points");
  for (double d : ts.distances) detail::require(std::isfinite(d), "training distances must be finite");
  ts.bounds.validate();
}

}  // namespace detail

inline TrainedEmulator TrainedEmulator::assemble(const TrainingSet& ts, const GpHyper& hyper, double jitter) {
  TrainedEmulator em;
  em.points_ = ts.points;
  em.D_ = ts.distances;
  em.bounds_ = ts.bounds;
  em.pinned_ = ts.pinned;
  em.scaling_ = InputScaling::from_box(ts.bounds);
  em.U_ = detail::scaled_inputs(ts.points, em.scaling_);
  em.X_ = detail::trend_design(ts.points);
  em.active_ = detail::active_trend_terms(ts.points);
  const auto terms = static_cast<std::size_t>(std::count(em.active_.begin(), em.active_.end(), true));
  detail::require(ts.size() > terms, "training set needs more design points than active trend terms");
  em.hyper_ = hyper;
  em.jitter_ = jitter;
  em.observed_hash_ = ts.observed_hash;
  em.simulator_hash_ = ts.simulator_hash;
  em.kind_ = ts.kind;
  return em;
}

/// Cholesky of Sigma and alpha = Sigma^-1 (D - X beta) for the stored state.
inline void TrainedEmulator::factorize() {
  if (degenerate_) return;
  hyper_.validate();
  Eigen::MatrixXd S = hyper_.sigma2 * detail::correlation(U_, hyper_.phi);
  S.diagonal().array() += hyper_.nugget + jitter_ * hyper_.sigma2;
  llt_.compute(S);
  if (llt_.info() != Eigen::Success) throw NumericError("GP covariance factorization failed; raise the nugget");
  const Eigen::Map<const Eigen::VectorXd> D(D_.data(), static_cast<Eigen::Index>(D_.size()));
  Eigen::VectorXd r = D;
  for (std::size_t i = 0; i < points_.size(); ++i) r[static_cast<Eigen::Index>(i)] -= trend_(points_[i]);
  alpha_ = llt_.solve(r);
}

namespace detail {

/// Whether the trend alone reproduces D to rounding error.
inline bool trend_explains(const Eigen::MatrixXd& Xa, const Eigen::VectorXd& D, Eigen::VectorXd& beta) {
  beta = Xa.colPivHouseholderQr().solve(D);
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  return (D - Xa * beta).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace detail

/// Emulator at fixed hyperparameters; the trend is the GLS estimate.
inline TrainedEmulator condition_emulator(const TrainingSet& ts, const GpHyper& hyper, double jitter = 1e-8) {
  detail::check_training(ts);
  hyper.validate();
  TrainedEmulator em = TrainedEmulator::assemble(ts, hyper, jitter);
  const Eigen::MatrixXd Xa = detail::select_columns(em.X_, em.active_);
  const Eigen::Map<const Eigen::VectorXd> D(em.D_.data(), static_cast<Eigen::Index>(em.D_.size()));
  Eigen::MatrixXd S = hyper.sigma2 * detail::correlation(em.U_, hyper.phi);
  S.diagonal().array() += hyper.nugget + jitter * hyper.sigma2;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) throw NumericError("GP covariance factorization failed; raise the nugget");
  em.trend_ = detail::expand_trend(detail::gls(llt, Xa, D), em.active_);
  em.factorize();
  return em;
}

/// Maximum-likelihood fit: trend and sigma2 profiled in closed form, phi and
/// the nugget ratio found by multi-start Nelder-Mead over a log-box.
inline TrainedEmulator fit_emulator(const TrainingSet& ts, const FitOptions& opt = {}) {
  detail::check_training(ts);
  detail::require(opt.starts >= 1, "fit needs at least one start");
  TrainedEmulator em = TrainedEmulator::assemble(ts, GpHyper{}, opt.jitter);
  const Eigen::MatrixXd Xa = detail::select_columns(em.X_, em.active_);
  const Eigen::VectorXd D = Eigen::Map<const Eigen::VectorXd>(em.D_.data(), static_cast<Eigen::Index>(em.D_.size()));

  Eigen::VectorXd beta;
  if (detail::trend_explains(Xa, D, beta)) {
    // Nothing left for the GP: keep the trend and a token, nugget-dominated
    // variance so the predictive law stays proper.
    em.degenerate_ = true;
    em.trend_ = detail::expand_trend(beta, em.active_);
    const double s = 1e-12 * std::max(1.0, D.cwiseAbs().maxCoeff());
    em.hyper_ = {s, s * std::exp(opt.log_ratio_hi), std::exp(opt.log_phi_lo)};
    em.diag_.degenerate = true;
    em.diag_.best_nll = -std::numeric_limits<double>::infinity();
    return em;
  }

  gsl_set_error_handler_off();
  const detail::SearchContext ctx{&em.U_, &Xa, &D, &opt};
  const auto starts = detail::latin_hypercube(opt.starts, opt.seed);
  std::vector<detail::StartResult> results(opt.starts);
  parallel_for(opt.starts, opt.workers, [&](std::size_t i) {
    const double lp = opt.log_phi_lo + starts[i][0] * (opt.log_phi_hi - opt.log_phi_lo);
    const double lg = opt.log_ratio_lo + starts[i][1] * (opt.log_ratio_hi - opt.log_ratio_lo);
    results[i] = detail::run_start(ctx, lp, lg);
  });

  FitDiagnostics& diag = em.diag_;
  diag.starts = opt.starts;
  std::size_t best = opt.starts;
  for (std::size_t i = 0; i < opt.starts; ++i) {
    diag.start_nll.push_back(results[i].nll);
    diag.start_converged.push_back(results[i].converged);
    if (!results[i].converged) continue;
    ++diag.converged;
    if (best == opt.starts || results[i].nll < results[best].nll) best = i;
  }
  if (best == opt.starts) throw NumericError("GP fit failed: no optimizer start converged");

  const double phi = std::exp(results[best].log_phi), g = std::exp(results[best].log_ratio);
  const detail::Profile pr = detail::profile(em.U_, Xa, D, phi, g, opt.jitter);
  if (!pr.ok) throw NumericError("GP fit failed at the selected optimum");
  diag.best_nll = pr.nll;
  em.hyper_ = {pr.sigma2, g * pr.sigma2, phi};
  em.trend_ = detail::expand_trend(pr.beta, em.active_);
  em.factorize();
  return em;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr const char* kEmulatorFormat = "gravem-emulator/1";

inline void TrainedEmulator::save(std::ostream& out) const {
  out << kEmulatorFormat << '\n';
  out << "statistic " << to_string(kind_) << '\n';
  out << "observed_hash " << (observed_hash_.empty() ? "-" : observed_hash_) << '\n';
  out << "simulator_hash " << (simulator_hash_.empty() ? "-" : simulator_hash_) << '\n';
  out << "prior_box " << detail::box_to_string(bounds_) << '\n';
  out << "pinned " << (detail::pinned_to_string(pinned_).empty() ? "-" : detail::pinned_to_string(pinned_)) << '\n';
  out << "hyper " << format_double(hyper_.sigma2) << ' ' << format_double(hyper_.nugget) << ' ' << format_double(hyper_.phi)
      << '\n';
  out << "jitter " << format_double(jitter_) << '\n';
  out << "degenerate " << (degenerate_ ? 1 : 0) << '\n';
  out << "trend";
  for (double b : trend_.beta) out << ' ' << format_double(b);
  out << '\n';
  out << "fit_starts " << diag_.starts << " converged " << diag_.converged << " nll " << format_double(diag_.best_nll) << '\n';
  out << "points " << points_.size() << '\n';
  for (std::size_t i = 0; i < points_.size(); ++i) {
    for (std::size_t a = 0; a < kGravityAxes; ++a) out << format_double(points_[i][a]) << ' ';
    out << format_double(D_[i]) << '\n';
  }
}

inline TrainedEmulator TrainedEmulator::load(std::istream& in) {
  auto fail = [](const std::string& what) -> DataError { return DataError("emulator file: " + what); };
  std::string line;
  if (!std::getline(in, line) || line != kEmulatorFormat) throw fail("unsupported format header");
  auto field = [&](const char* key) {
    std::string l;
    if (!std::getline(in, l)) throw fail(std::string("missing ") + key);
    std::istringstream s(l);
    std::string k;
    s >> k;
    if (k != key) throw fail(std::string("expected ") + key + ", found '" + k + "'");
    std::string rest;
    std::getline(s >> std::ws, rest);
    return rest;
  };
  TrainedEmulator em;
  em.kind_ = summary_kind_from_string(field("statistic"));
  em.observed_hash_ = field("observed_hash");
  if (em.observed_hash_ == "-") em.observed_hash_.clear();
  em.simulator_hash_ = field("simulator_hash");
  if (em.simulator_hash_ == "-") em.simulator_hash_.clear();
  em.bounds_ = detail::box_from_string(field("prior_box"));
  const std::string pinned = field("pinned");
  em.pinned_ = pinned == "-" ? PinnedAxes{} : detail::pinned_from_string(pinned);
  {
    std::istringstream s(field("hyper"));
    if (!(s >> em.hyper_.sigma2 >> em.hyper_.nugget >> em.hyper_.phi)) throw fail("bad hyper line");
  }
  em.jitter_ = std::stod(field("jitter"));
  em.degenerate_ = field("degenerate") == "1";
  {
    std::istringstream s(field("trend"));
    for (double& b : em.trend_.beta)
      if (!(s >> b)) throw fail("bad trend line");
  }
  {
    std::istringstream s(field("fit_starts"));
    std::string word, nll;
    s >> em.diag_.starts >> word >> em.diag_.converged >> word >> nll;
    em.diag_.best_nll = std::stod(nll);
    em.diag_.degenerate = em.degenerate_;
  }
  const std::size_t n = std::stoul(field("points"));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw fail("truncated design table");
    std::istringstream s(line);
    GravityParams g;
    double d;
    if (!(s >> g.theta_prime >> g.tau1 >> g.tau2 >> g.rho >> d)) throw fail("bad design row " + std::to_string(i + 1));
    em.points_.push_back(g);
    em.D_.push_back(d);
  }
  em.scaling_ = InputScaling::from_box(em.bounds_);
  em.U_ = detail::scaled_inputs(em.points_, em.scaling_);
  em.X_ = detail::trend_design(em.points_);
  em.active_ = detail::active_trend_terms(em.points_);
  em.factorize();
  return em;
}

}  // namespace gravem
