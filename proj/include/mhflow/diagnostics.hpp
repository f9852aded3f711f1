#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "mhflow/mat.hpp"
#include "mhflow/mh.hpp"
#include "mhflow/objectives.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"

namespace mhflow::diag {

using LogDensity = std::function<double(const double*)>;

// Trapezoid rule on a 1-D or 2-D tensor grid. Densities handed to the
// quadrature routines below are renormalized on the grid, so unnormalized
// log-densities are fine as long as the box captures the mass.
class GridOracle {
 public:
  explicit GridOracle(const targets::GridSpec& spec);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return nodes_.rows; }
  const Mat& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return w_; }

  double integrate(const LogDensity& logf) const;
  // log of the grid-normalized density at every node; all entries finite
  std::vector<double> normalized_log(const LogDensity& logf) const;

 private:
  std::size_t dim_ = 0;
  Mat nodes_;              // size x dim
  std::vector<double> w_;  // trapezoid weight per node
};

// 1/2 * integral of |p(x)q(x') - p(x')q(x)| dx dx', both densities
// grid-normalized first. One-dimensional densities only; the cost of the
// tensor-product joint grows too fast beyond that.
double quad_tv_joint(const LogDensity& logp, const LogDensity& logq,
                     const targets::GridSpec& grid);

// Same integral computed by sorting the density ratio instead of summing
// all pairs; O(n log n) and equal to quad_tv_joint up to roundoff.
double swap_tv_sorted(const std::vector<double>& weights,
                      const std::vector<double>& log_p,
                      const std::vector<double>& log_q);

// KL(p||q) + KL(q||p) with both densities grid-normalized. 1-D or 2-D.
double quad_sym_kl(const LogDensity& logp, const LogDensity& logq,
                   const targets::GridSpec& grid);

// D(p,q) = integral of |p(x)q(y) - p(y)q(x)| dx dy (no 1/2), 1-D.
double semimetric_quad(const LogDensity& logp, const LogDensity& logq,
                       const targets::GridSpec& grid);

// Density taking the value vals[i] on [knots[i], knots[i+1]).
struct PiecewiseUniform {
  std::vector<double> knots;
  std::vector<double> vals;
};

// Exact evaluation of D for piecewise-constant densities: merge the two
// breakpoint sets and sum |p_i q_j - p_j q_i| over cell pairs.
double semimetric_exact(const PiecewiseUniform& p, const PiecewiseUniform& q);

// Monte Carlo acceptance rate mean(exp(min(0, r))) over n proposals drawn
// from q against exact-sample x ~ p, with r the independence-sampler ratio.
double mc_acceptance_rate(const std::function<void(Rng&, double*)>& draw_p,
                          const LogDensity& logp,
                          const mh::ExplicitProposal& q, std::size_t dim,
                          std::size_t n, Rng& rng);

struct EssEstimate {
  std::vector<double> ess;                  // per dimension
  std::vector<std::size_t> truncation_lag;  // first lag with rho < 0.05
  std::vector<std::vector<double>> rho;     // included autocorrelations
  double min_ess = 0;                       // headline number
  double mean_ess = 0;
};

// Autocorrelation-based effective sample size. Reference moments must come
// from somewhere trustworthy (analytic moments or a much longer chain), not
// from the chain being scored; ref_sd entries must be positive.
EssEstimate ess(const Mat& chain, const std::vector<double>& ref_mean,
                const std::vector<double>& ref_sd);

// KL between a sample histogram and the target density, both discretized
// to bins cells per axis over the target's quadrature box (1-D or 2-D).
// Samples outside the box are clamped into the boundary cells so the
// empirical mass always sums to one; empty cells contribute zero.
double grid_kl(const Mat& samples, const targets::TargetDensity& target,
               std::size_t bins = 40);

// Index of the nearest mode (Euclidean) for each sample.
std::vector<int> assign_modes(const Mat& samples, const Mat& modes);

// Fraction of samples landing nearest to each mode; sums to one.
std::vector<double> mode_coverage(const Mat& samples, const Mat& modes);

// Running squared error of per-component sample means against the true
// means: entry (n, m) uses the first n+1 samples; NaN until component m
// has been seen.
Mat component_mean_error(const Mat& chain, const std::vector<int>& assign,
                         const Mat& true_means);

struct LandscapeScan {
  std::vector<double> mu, sigma;  // axis values, inclusive linspace
  Mat value;                      // mu index by sigma index
  std::size_t argmax_mu = 0, argmax_sigma = 0;
};

// Objective surface for Gaussian proposals N(mu, sigma^2) against a 1-D
// target, evaluated by quadrature on the target's box: acceptance rate
// 1 - TV for LossKind::AR, the bound 1 - sqrt(symKL/2) for LossKind::ARLB.
LandscapeScan landscape_scan(const targets::TargetDensity& target,
                             double mu_lo, double mu_hi, double sd_lo,
                             double sd_hi, std::size_t resolution,
                             objectives::LossKind objective,
                             std::size_t quad_points = 2001);

void write_landscape_csv(const LandscapeScan& scan, const std::string& path);

}  // namespace mhflow::diag
