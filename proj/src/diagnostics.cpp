#include "mhflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "mhflow/check.hpp"

namespace mhflow::diag {

GridOracle::GridOracle(const targets::GridSpec& spec) {
  dim_ = spec.dims();
  check(dim_ == 1 || dim_ == 2, "GridOracle: expected a 1-D or 2-D grid");
  std::vector<std::vector<double>> axis(dim_), axis_w(dim_);
  for (std::size_t d = 0; d < dim_; ++d) {
    std::size_t n = spec.points[d];
    check(n >= 2, "GridOracle: need at least two points per axis");
    check(spec.hi[d] > spec.lo[d], "GridOracle: empty box");
    double h = (spec.hi[d] - spec.lo[d]) / double(n - 1);
    axis[d].resize(n);
    axis_w[d].assign(n, h);
    for (std::size_t i = 0; i < n; ++i) axis[d][i] = spec.lo[d] + h * double(i);
    axis_w[d].front() = axis_w[d].back() = h * 0.5;
  }
  if (dim_ == 1) {
    nodes_ = Mat(axis[0].size(), 1);
    w_ = axis_w[0];
    for (std::size_t i = 0; i < axis[0].size(); ++i) nodes_(i, 0) = axis[0][i];
  } else {
    std::size_t n0 = axis[0].size(), n1 = axis[1].size();
    nodes_ = Mat(n0 * n1, 2);
    w_.resize(n0 * n1);
    for (std::size_t i = 0; i < n0; ++i)
      for (std::size_t j = 0; j < n1; ++j) {
        std::size_t k = i * n1 + j;
        nodes_(k, 0) = axis[0][i];
        nodes_(k, 1) = axis[1][j];
        w_[k] = axis_w[0][i] * axis_w[1][j];
      }
  }
}

double GridOracle::integrate(const LogDensity& logf) const {
  double acc = 0;
  for (std::size_t k = 0; k < size(); ++k)
    acc += w_[k] * std::exp(logf(nodes_.row_ptr(k)));
  return acc;
}

std::vector<double> GridOracle::normalized_log(const LogDensity& logf) const {
  std::size_t n = size();
  std::vector<double> lv(n);
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    lv[k] = logf(nodes_.row_ptr(k));
    check(!std::isnan(lv[k]), "GridOracle: log-density is NaN on the grid");
    shift = std::max(shift, lv[k]);
  }
  check(std::isfinite(shift), "GridOracle: log-density is -inf everywhere");
  double z = 0;
  for (std::size_t k = 0; k < n; ++k) z += w_[k] * std::exp(lv[k] - shift);
  double log_z = shift + std::log(z);
  for (std::size_t k = 0; k < n; ++k) lv[k] -= log_z;
  return lv;
}

double quad_tv_joint(const LogDensity& logp, const LogDensity& logq,
                     const targets::GridSpec& grid) {
  GridOracle g(grid);
  check(g.dim() == 1, "quad_tv_joint: the joint quadrature is 1-D only");
  std::vector<double> lp = g.normalized_log(logp);
  std::vector<double> lq = g.normalized_log(logq);
  const std::vector<double>& w = g.weights();
  std::size_t n = g.size();
  std::vector<double> p(n), q(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(lp[i]);
    q[i] = std::exp(lq[i]);
  }
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double wi_p = w[i] * p[i], wi_q = w[i] * q[i];
    for (std::size_t j = 0; j < n; ++j)
      acc += std::abs(wi_p * w[j] * q[j] - w[j] * p[j] * wi_q);
  }
  return 0.5 * acc;
}

double swap_tv_sorted(const std::vector<double>& weights,
                      const std::vector<double>& log_p,
                      const std::vector<double>& log_q) {
  std::size_t n = weights.size();
  check(log_p.size() == n && log_q.size() == n,
        "swap_tv_sorted: length mismatch");
  // |p q' - p' q| = q q' |r - r'| with r = p/q wherever q > 0, so sorting
  // by the ratio turns the pair sum into prefix sums. Nodes where q
  // underflowed to zero only contribute through |p q'| cross terms.
  struct Node {
    double r, a;  // ratio and q-mass w * q
  };
  std::vector<Node> pos;
  pos.reserve(n);
  double zero_p_mass = 0, q_mass = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double p = std::exp(log_p[i]), q = std::exp(log_q[i]);
    // near-denormal q makes p/q overflow; such nodes carry no q-mass and
    // are folded into the cross term exactly like q = 0
    if (q >= 1e-290) {
      pos.push_back({p / q, weights[i] * q});
      q_mass += weights[i] * q;
    } else {
      zero_p_mass += weights[i] * p;
    }
  }
  std::sort(pos.begin(), pos.end(),
            [](const Node& a, const Node& b) { return a.r < b.r; });
  double acc = 0, pref_a = 0, pref_b = 0;
  for (const Node& nd : pos) {
    acc += nd.a * (nd.r * pref_a - pref_b);
    pref_a += nd.a;
    pref_b += nd.a * nd.r;
  }
  return acc + zero_p_mass * q_mass;
}

double quad_sym_kl(const LogDensity& logp, const LogDensity& logq,
                   const targets::GridSpec& grid) {
  GridOracle g(grid);
  std::vector<double> lp = g.normalized_log(logp);
  std::vector<double> lq = g.normalized_log(logq);
  const std::vector<double>& w = g.weights();
  double acc = 0;
  for (std::size_t k = 0; k < g.size(); ++k)
    acc += w[k] * (std::exp(lp[k]) - std::exp(lq[k])) * (lp[k] - lq[k]);
  return acc;
}

double semimetric_quad(const LogDensity& logp, const LogDensity& logq,
                       const targets::GridSpec& grid) {
  return 2.0 * quad_tv_joint(logp, logq, grid);
}

double semimetric_exact(const PiecewiseUniform& p, const PiecewiseUniform& q) {
  check(p.knots.size() == p.vals.size() + 1 &&
            q.knots.size() == q.vals.size() + 1,
        "semimetric_exact: knots must be one longer than vals");
  std::set<double> cuts(p.knots.begin(), p.knots.end());
  cuts.insert(q.knots.begin(), q.knots.end());
  std::vector<double> edges(cuts.begin(), cuts.end());
  auto value_at = [](const PiecewiseUniform& f, double x) {
    auto it = std::upper_bound(f.knots.begin(), f.knots.end(), x);
    if (it == f.knots.begin() || it == f.knots.end()) return 0.0;
    return f.vals[std::size_t(it - f.knots.begin()) - 1];
  };
  std::size_t m = edges.size() - 1;
  std::vector<double> pv(m), qv(m), wv(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mid = 0.5 * (edges[i] + edges[i + 1]);
    pv[i] = value_at(p, mid);
    qv[i] = value_at(q, mid);
    wv[i] = edges[i + 1] - edges[i];
  }
  double acc = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      acc += wv[i] * wv[j] * std::abs(pv[i] * qv[j] - pv[j] * qv[i]);
  return acc;
}

double mc_acceptance_rate(const std::function<void(Rng&, double*)>& draw_p,
                          const LogDensity& logp,
                          const mh::ExplicitProposal& q, std::size_t dim,
                          std::size_t n, Rng& rng) {
  check(n > 0, "mc_acceptance_rate: need at least one draw");
  std::vector<double> x(dim), xp(dim);
  double acc = 0;
  for (std::size_t k = 0; k < n; ++k) {
    draw_p(rng, x.data());
    double lq_new;
    if (q.draw_with_logq) {
      lq_new = q.draw_with_logq(rng, xp.data());
    } else {
      q.draw(rng, xp.data());
      lq_new = q.logq(xp.data());
    }
    double r = (logp(xp.data()) - lq_new) + (q.logq(x.data()) - logp(x.data()));
    if (std::isfinite(r)) acc += std::exp(std::min(0.0, r));
  }
  return acc / double(n);
}

EssEstimate ess(const Mat& chain, const std::vector<double>& ref_mean,
                const std::vector<double>& ref_sd) {
  std::size_t n = chain.rows, dim = chain.cols;
  check(n >= 2, "ess: need at least two samples");
  check(ref_mean.size() == dim && ref_sd.size() == dim,
        "ess: reference moment length mismatch");
  EssEstimate out;
  out.ess.resize(dim);
  out.truncation_lag.resize(dim);
  out.rho.resize(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    double mu = ref_mean[d], sd = ref_sd[d];
    check(sd > 0, "ess: reference standard deviation must be positive");
    std::vector<double> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = chain(i, d) - mu;
    double var = sd * sd, acc = 0;
    std::size_t s = 1;
    for (; s < n; ++s) {
      double cov = 0;
      for (std::size_t i = s; i < n; ++i) cov += c[i] * c[i - s];
      double rho = cov / (var * double(n - s));
      if (rho < 0.05) break;
      out.rho[d].push_back(rho);
      acc += (1.0 - double(s) / double(n)) * rho;
    }
    out.truncation_lag[d] = s;
    out.ess[d] = double(n) / (1.0 + 2.0 * acc);
  }
  out.min_ess = *std::min_element(out.ess.begin(), out.ess.end());
  out.mean_ess =
      std::accumulate(out.ess.begin(), out.ess.end(), 0.0) / double(dim);
  return out;
}

double grid_kl(const Mat& samples, const targets::TargetDensity& target,
               std::size_t bins) {
  const std::size_t dim = target.dim;
  check(dim == 1 || dim == 2, "grid_kl: only 1-D and 2-D targets");
  check(samples.cols == dim, "grid_kl: sample dimension mismatch");
  check(samples.rows > 0, "grid_kl: need samples");
  check(bins >= 2, "grid_kl: need at least two bins per axis");
  check(!target.grid.empty() && target.grid.dims() == dim,
        "grid_kl: target has no quadrature box");

  const std::vector<double>& lo = target.grid.lo;
  const std::vector<double>& hi = target.grid.hi;
  auto cell_of = [&](double v, std::size_t d) {
    double u = (v - lo[d]) / (hi[d] - lo[d]) * double(bins);
    long c = long(std::floor(u));
    if (c < 0) c = 0;
    if (c >= long(bins)) c = long(bins) - 1;
    return std::size_t(c);
  };

  const std::size_t cells = dim == 1 ? bins : bins * bins;
  std::vector<double> freq(cells, 0.0);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    std::size_t c = cell_of(samples(i, 0), 0);
    if (dim == 2) c = c * bins + cell_of(samples(i, 1), 1);
    freq[c] += 1.0;
  }
  for (double& f : freq) f /= double(samples.rows);

  std::vector<double> lt(cells);
  std::vector<double> x(dim);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t c0 = dim == 1 ? c : c / bins;
    x[0] = lo[0] + (double(c0) + 0.5) * (hi[0] - lo[0]) / double(bins);
    if (dim == 2)
      x[1] = lo[1] + (double(c % bins) + 0.5) * (hi[1] - lo[1]) / double(bins);
    lt[c] = target.log_unnorm(x.data());
  }
  double shift = *std::max_element(lt.begin(), lt.end());
  check(std::isfinite(shift), "grid_kl: target log-density is not finite");
  double z = 0;
  for (double v : lt) z += std::exp(v - shift);
  double log_z = shift + std::log(z);

  double kl = 0;
  for (std::size_t c = 0; c < cells; ++c)
    if (freq[c] > 0) kl += freq[c] * (std::log(freq[c]) - (lt[c] - log_z));
  return kl;
}

std::vector<int> assign_modes(const Mat& samples, const Mat& modes) {
  check(samples.cols == modes.cols, "assign_modes: dimension mismatch");
  check(modes.rows > 0, "assign_modes: need at least one mode");
  std::vector<int> idx(samples.rows);
  for (std::size_t i = 0; i < samples.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < modes.rows; ++m) {
      double d2 = 0;
      for (std::size_t c = 0; c < samples.cols; ++c) {
        double diff = samples(i, c) - modes(m, c);
        d2 += diff * diff;
      }
      if (d2 < best) {
        best = d2;
        idx[i] = int(m);
      }
    }
  }
  return idx;
}

std::vector<double> mode_coverage(const Mat& samples, const Mat& modes) {
  check(samples.rows > 0, "mode_coverage: no samples");
  std::vector<int> idx = assign_modes(samples, modes);
  std::vector<double> frac(modes.rows, 0.0);
  for (int m : idx) frac[std::size_t(m)] += 1.0;
  for (double& f : frac) f /= double(samples.rows);
  return frac;
}

Mat component_mean_error(const Mat& chain, const std::vector<int>& assign,
                         const Mat& true_means) {
  check(assign.size() == chain.rows, "component_mean_error: label mismatch");
  check(chain.cols == true_means.cols,
        "component_mean_error: dimension mismatch");
  std::size_t m = true_means.rows, dim = chain.cols;
  Mat out(chain.rows, m);
  Mat sums(m, dim);
  std::vector<std::size_t> counts(m, 0);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < chain.rows; ++i) {
    std::size_t k = std::size_t(assign[i]);
    check(k < m, "component_mean_error: label out of range");
    ++counts[k];
    for (std::size_t c = 0; c < dim; ++c) sums(k, c) += chain(i, c);
    for (std::size_t j = 0; j < m; ++j) {
      if (counts[j] == 0) {
        out(i, j) = nan;
        continue;
      }
      double e2 = 0;
      for (std::size_t c = 0; c < dim; ++c) {
        double diff = sums(j, c) / double(counts[j]) - true_means(j, c);
        e2 += diff * diff;
      }
      out(i, j) = e2;
    }
  }
  return out;
}

LandscapeScan landscape_scan(const targets::TargetDensity& target,
                             double mu_lo, double mu_hi, double sd_lo,
                             double sd_hi, std::size_t resolution,
                             objectives::LossKind objective,
                             std::size_t quad_points) {
  check(target.dim == 1, "landscape_scan: 1-D targets only");
  check(!target.grid.empty(), "landscape_scan: target has no quadrature box");
  check(resolution >= 2, "landscape_scan: resolution must be at least 2");
  check(sd_lo > 0, "landscape_scan: sigma range must be positive");
  check(objective != objectives::LossKind::VI,
        "landscape_scan: objective must be AR or ARLB");
  targets::GridSpec spec = target.grid;
  spec.points = {quad_points};
  GridOracle g(spec);
  std::vector<double> lp = g.normalized_log(target.log_unnorm);
  const std::vector<double>& w = g.weights();
  std::size_t n = g.size();

  LandscapeScan out;
  out.mu.resize(resolution);
  out.sigma.resize(resolution);
  for (std::size_t i = 0; i < resolution; ++i) {
    double t = double(i) / double(resolution - 1);
    out.mu[i] = mu_lo + (mu_hi - mu_lo) * t;
    out.sigma[i] = sd_lo + (sd_hi - sd_lo) * t;
  }
  out.value = Mat(resolution, resolution);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> lq_raw(n), lq(n);
  for (std::size_t i = 0; i < resolution; ++i) {
    for (std::size_t j = 0; j < resolution; ++j) {
      double mu = out.mu[i], sd = out.sigma[j];
      double shift = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < n; ++k) {
        double z = (g.nodes()(k, 0) - mu) / sd;
        lq_raw[k] = -0.5 * z * z;
        shift = std::max(shift, lq_raw[k]);
      }
      double mass = 0;
      for (std::size_t k = 0; k < n; ++k)
        mass += w[k] * std::exp(lq_raw[k] - shift);
      double log_z = shift + std::log(mass);
      for (std::size_t k = 0; k < n; ++k) lq[k] = lq_raw[k] - log_z;
      double v;
      if (objective == objectives::LossKind::AR) {
        v = 1.0 - swap_tv_sorted(w, lp, lq);
      } else {
        double sym = 0;
        for (std::size_t k = 0; k < n; ++k)
          sym += w[k] * (std::exp(lp[k]) - std::exp(lq[k])) * (lp[k] - lq[k]);
        v = 1.0 - std::sqrt(0.5 * sym);
      }
      out.value(i, j) = v;
      if (v > best) {
        best = v;
        out.argmax_mu = i;
        out.argmax_sigma = j;
      }
    }
  }
  return out;
}

void write_landscape_csv(const LandscapeScan& scan, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  check(f != nullptr, "write_landscape_csv: cannot open " + path);
  std::fprintf(f, "mu,sigma,value\n");
  for (std::size_t i = 0; i < scan.mu.size(); ++i)
    for (std::size_t j = 0; j < scan.sigma.size(); ++j)
      std::fprintf(f, "%.17g,%.17g,%.17g\n", scan.mu[i], scan.sigma[j],
                   scan.value(i, j));
  std::fclose(f);
}

}  // namespace mhflow::diag
