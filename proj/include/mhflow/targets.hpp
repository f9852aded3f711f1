#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mhflow/ad.hpp"
#include "mhflow/mat.hpp"

namespace mhflow::targets {

// Per-dimension quadrature box. Resolution counts grid points.
struct GridSpec {
  std::vector<double> lo, hi;
  std::vector<std::size_t> points;
  bool empty() const { return lo.empty(); }
  std::size_t dims() const { return lo.size(); }
};

struct Moments {
  std::vector<double> mean, var;
};

// An unnormalized target log-density with an optional tape builder
// (batch node B x dim -> B x 1 log-density node) for gradient-based
// training, plus quadrature metadata.
struct TargetDensity {
  std::string name;
  std::size_t dim = 0;
  bool normalized = false;
  std::function<double(const double*)> log_unnorm;
  std::function<int(ad::Tape&, int)> tape_logp;
  GridSpec grid;
  std::optional<Moments> moments;
  std::optional<Mat> modes;  // one row per mode, for coverage diagnostics

  double logp(const std::vector<double>& x) const {
    return log_unnorm(x.data());
  }
  Mat logp_batch(const Mat& x) const {
    Mat out(x.rows, 1);
    for (std::size_t i = 0; i < x.rows; ++i)
      out(i, 0) = log_unnorm(x.row_ptr(i));
    return out;
  }
};

struct MixtureSpec {
  Mat means;                 // M x D
  std::vector<double> sds;   // one isotropic standard deviation per component
  std::vector<double> weights;
};

double mog_logp(const double* x, std::size_t dim, const MixtureSpec& spec);
double ring_logp(const double* x);
double ring5_logp(const double* x);
double rough_well_logp(const double* x, std::size_t dim, double eta);
double bimodal1d_logp(double x);

struct LogisticDataset {
  std::string name;
  Mat covariates;           // N x d, standardized per column
  std::vector<int> labels;  // in {0,1}
  std::size_t n() const { return covariates.rows; }
  std::size_t d() const { return covariates.cols; }
};

// CSV with a header row; the last column is the label. Known dataset
// names enforce their expected shape.
LogisticDataset load_dataset(const std::string& path, const std::string& name);

// theta = (weights..., bias). The logit is -x^T w + b; pass
// flip_bias_sign to use -(x^T w + b) instead.
double logistic_posterior_logp(const double* theta, const LogisticDataset& data,
                               bool flip_bias_sign = false);

TargetDensity make_ring();
TargetDensity make_mog2();
TargetDensity make_mog6();
TargetDensity make_mog_pair();  // the close two-mode pair at +-[2,0]
TargetDensity make_ring5();
TargetDensity make_icg();
TargetDensity make_scg();
TargetDensity make_rough_well();
TargetDensity make_bimodal1d();
TargetDensity make_logistic_posterior(LogisticDataset data,
                                      bool flip_bias_sign = false);

// Synthetic targets by config name: ring, mog2, mog6, mog, ring5, icg,
// scg, rough_well, bimodal1d. Throws on unknown names.
TargetDensity by_name(const std::string& name);

}  // namespace mhflow::targets
