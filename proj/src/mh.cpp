#include "mhflow/mh.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>

#include "mhflow/check.hpp"

namespace mhflow::mh {

namespace {

double gauss_logpdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double logsumexp2(double a, double b) {
  double m = std::max(a, b);
  if (!std::isfinite(m)) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

ExplicitProposal ExplicitProposal::from_flow(const flows::FlowProposal& f) {
  ExplicitProposal p;
  p.dim = f.config().dim;
  p.draw = [&f](Rng& rng, double* out) {
    std::vector<double> z(f.config().dim);
    for (double& v : z) v = rng.normal();
    f.forward(z.data(), out, nullptr);
  };
  p.logq = [&f](const double* x) { return f.log_prob(x); };
  p.draw_with_logq = [&f](Rng& rng, double* out) {
    std::size_t d = f.config().dim;
    std::vector<double> z(d);
    for (double& v : z) v = rng.normal();
    double ld = 0;
    f.forward(z.data(), out, &ld);
    return flows::FlowProposal::base_logp(z.data(), d) - ld;
  };
  return p;
}

ExplicitProposal ExplicitProposal::gaussian(std::vector<double> mu,
                                            std::vector<double> sd) {
  check(mu.size() == sd.size(), "gaussian proposal mu/sd size mismatch");
  ExplicitProposal p;
  p.dim = mu.size();
  auto mu_s = std::make_shared<std::vector<double>>(std::move(mu));
  auto sd_s = std::make_shared<std::vector<double>>(std::move(sd));
  p.draw = [mu_s, sd_s](Rng& rng, double* out) {
    for (std::size_t j = 0; j < mu_s->size(); ++j)
      out[j] = rng.normal((*mu_s)[j], (*sd_s)[j]);
  };
  p.logq = [mu_s, sd_s](const double* x) {
    double acc = 0;
    for (std::size_t j = 0; j < mu_s->size(); ++j)
      acc += gauss_logpdf(x[j], (*mu_s)[j], (*sd_s)[j]);
    return acc;
  };
  return p;
}

bool Sampler::accept_decision(double log_ratio, Rng& rng) const {
  return std::log(rng.uniform()) < std::min(0.0, log_ratio);
}

IndependentSampler::IndependentSampler(const targets::TargetDensity& target,
                                       ExplicitProposal proposal)
    : target_(&target), q_(std::move(proposal)) {
  check(target.dim == q_.dim, "proposal dimension does not match target");
  x_.assign(q_.dim, 0.0);
}

double IndependentSampler::log_accept_ratio(const double* x,
                                            const double* xp) const {
  return (target_->log_unnorm(xp) - q_.logq(xp)) -
         (target_->log_unnorm(x) - q_.logq(x));
}

void IndependentSampler::init_state(Rng& rng) {
  double lq;
  if (q_.draw_with_logq) {
    lq = q_.draw_with_logq(rng, x_.data());
  } else {
    q_.draw(rng, x_.data());
    lq = q_.logq(x_.data());
  }
  cur_w_ = target_->log_unnorm(x_.data()) - lq;
}

void IndependentSampler::set_state(const double* x) {
  x_.assign(x, x + q_.dim);
  cur_w_ = target_->log_unnorm(x) - q_.logq(x);
}

bool IndependentSampler::step(Rng& rng, double* log_ratio_out) {
  std::vector<double> xp(q_.dim);
  double lq;
  if (q_.draw_with_logq) {
    lq = q_.draw_with_logq(rng, xp.data());
  } else {
    q_.draw(rng, xp.data());
    lq = q_.logq(xp.data());
  }
  double wp = target_->log_unnorm(xp.data()) - lq;
  double r = wp - cur_w_;
  if (log_ratio_out) *log_ratio_out = r;
  if (!std::isfinite(r)) {
    ++nonfinite_;
    return false;
  }
  if (!accept_decision(r, rng)) return false;
  x_ = std::move(xp);
  cur_w_ = wp;
  return true;
}

RandomWalkSampler::RandomWalkSampler(const targets::TargetDensity& target,
                                     std::vector<double> sigma)
    : target_(&target), sigma_(std::move(sigma)) {
  check(target.dim == sigma_.size(), "step size dimension mismatch");
  x_.assign(sigma_.size(), 0.0);
  cur_logp_ = target_->log_unnorm(x_.data());
}

double RandomWalkSampler::log_accept_ratio(const double* x,
                                           const double* xp) const {
  return target_->log_unnorm(xp) - target_->log_unnorm(x);
}

void RandomWalkSampler::init_state(Rng& rng) {
  for (double& v : x_) v = rng.normal();
  cur_logp_ = target_->log_unnorm(x_.data());
}

void RandomWalkSampler::set_state(const double* x) {
  x_.assign(x, x + sigma_.size());
  cur_logp_ = target_->log_unnorm(x);
}

bool RandomWalkSampler::step(Rng& rng, double* log_ratio_out) {
  std::vector<double> xp(sigma_.size());
  for (std::size_t j = 0; j < sigma_.size(); ++j)
    xp[j] = x_[j] + sigma_[j] * rng.normal();
  double lp = target_->log_unnorm(xp.data());
  double r = lp - cur_logp_;
  if (log_ratio_out) *log_ratio_out = r;
  if (!std::isfinite(r)) {
    ++nonfinite_;
    return false;
  }
  if (!accept_decision(r, rng)) return false;
  x_ = std::move(xp);
  cur_logp_ = lp;
  return true;
}

MixtureSampler::MixtureSampler(const targets::TargetDensity& target,
                               ExplicitProposal proposal, double lambda,
                               std::vector<double> sigma)
    : target_(&target),
      q_(std::move(proposal)),
      lambda_(lambda),
      sigma_(std::move(sigma)) {
  check(lambda >= 0.0 && lambda <= 1.0, "mixture weight must be in [0,1]");
  check(target.dim == sigma_.size() && target.dim == q_.dim,
        "mixture kernel dimension mismatch");
  x_.assign(sigma_.size(), 0.0);
}

double MixtureSampler::mix_logq(const double* to, const double* from) const {
  double rw = 0;
  for (std::size_t j = 0; j < sigma_.size(); ++j)
    rw += gauss_logpdf(to[j], from[j], sigma_[j]);
  if (lambda_ >= 1.0) return q_.logq(to);
  if (lambda_ <= 0.0) return rw;
  return logsumexp2(std::log(lambda_) + q_.logq(to),
                    std::log1p(-lambda_) + rw);
}

double MixtureSampler::log_accept_ratio(const double* x,
                                        const double* xp) const {
  return (target_->log_unnorm(xp) + mix_logq(x, xp)) -
         (target_->log_unnorm(x) + mix_logq(xp, x));
}

void MixtureSampler::init_state(Rng& rng) {
  q_.draw(rng, x_.data());
  cur_logp_ = target_->log_unnorm(x_.data());
  cur_logq_ = q_.logq(x_.data());
}

void MixtureSampler::set_state(const double* x) {
  x_.assign(x, x + sigma_.size());
  cur_logp_ = target_->log_unnorm(x);
  cur_logq_ = q_.logq(x);
}

bool MixtureSampler::step(Rng& rng, double* log_ratio_out) {
  std::vector<double> xp(sigma_.size());
  if (rng.uniform() < lambda_) {
    q_.draw(rng, xp.data());
  } else {
    for (std::size_t j = 0; j < sigma_.size(); ++j)
      xp[j] = x_[j] + sigma_[j] * rng.normal();
  }
  double lp = target_->log_unnorm(xp.data());
  double lq = q_.logq(xp.data());

  double rw = 0;
  for (std::size_t j = 0; j < sigma_.size(); ++j)
    rw += gauss_logpdf(xp[j], x_[j], sigma_[j]);
  double fwd, bwd;
  if (lambda_ >= 1.0) {
    fwd = lq;
    bwd = cur_logq_;
  } else if (lambda_ <= 0.0) {
    fwd = rw;
    bwd = rw;
  } else {
    fwd = logsumexp2(std::log(lambda_) + lq, std::log1p(-lambda_) + rw);
    bwd = logsumexp2(std::log(lambda_) + cur_logq_,
                     std::log1p(-lambda_) + rw);
  }
  double r = (lp + bwd) - (cur_logp_ + fwd);
  if (log_ratio_out) *log_ratio_out = r;
  if (!std::isfinite(r)) {
    ++nonfinite_;
    return false;
  }
  if (!accept_decision(r, rng)) return false;
  x_ = std::move(xp);
  cur_logp_ = lp;
  cur_logq_ = lq;
  return true;
}

RatioImhSampler::RatioImhSampler(std::size_t dim,
                                 std::function<void(Rng&, double*)> draw,
                                 std::function<double(const double*)> ratio_fn)
    : dim_(dim), draw_(std::move(draw)), ratio_(std::move(ratio_fn)) {
  x_.assign(dim_, 0.0);
}

double RatioImhSampler::log_accept_ratio(const double* x,
                                         const double* xp) const {
  return ratio_(xp) - ratio_(x);
}

void RatioImhSampler::init_state(Rng& rng) {
  draw_(rng, x_.data());
  cur_r_ = ratio_(x_.data());
}

void RatioImhSampler::set_state(const double* x) {
  x_.assign(x, x + dim_);
  cur_r_ = ratio_(x);
}

bool RatioImhSampler::step(Rng& rng, double* log_ratio_out) {
  std::vector<double> xp(dim_);
  draw_(rng, xp.data());
  double rp = ratio_(xp.data());
  double r = rp - cur_r_;
  if (log_ratio_out) *log_ratio_out = r;
  if (!std::isfinite(r)) {
    ++nonfinite_;
    return false;
  }
  if (!accept_decision(r, rng)) return false;
  x_ = std::move(xp);
  cur_r_ = rp;
  return true;
}

ChainRecord run_chain(Sampler& sampler, std::size_t steps, std::size_t burn_in,
                      const double* init, Rng& rng) {
  check(steps >= 1, "chain needs at least one step");
  auto t0 = std::chrono::steady_clock::now();
  if (init)
    sampler.set_state(init);
  else
    sampler.init_state(rng);
  for (std::size_t i = 0; i < burn_in; ++i) sampler.step(rng);

  ChainRecord rec;
  rec.states = Mat(steps, sampler.dim());
  rec.accepted.resize(steps);
  rec.log_ratio.resize(steps);
  std::size_t n_acc = 0;
  for (std::size_t i = 0; i < steps; ++i) {
    bool acc = sampler.step(rng, &rec.log_ratio[i]);
    rec.accepted[i] = acc ? 1 : 0;
    n_acc += acc ? 1 : 0;
    const auto& x = sampler.state();
    std::copy(x.begin(), x.end(), rec.states.row_ptr(i));
  }
  rec.empirical_ar = double(n_acc) / double(steps);
  rec.nonfinite_rejects = sampler.nonfinite_rejects();
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return rec;
}

void write_chain_csv(const ChainRecord& rec, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  check(f != nullptr, "cannot open " + path + " for writing");
  std::fprintf(f, "step,accepted");
  for (std::size_t j = 0; j < rec.states.cols; ++j)
    std::fprintf(f, ",dim%zu", j);
  std::fprintf(f, "\n");
  for (std::size_t i = 0; i < rec.states.rows; ++i) {
    std::fprintf(f, "%zu,%d", i, int(rec.accepted[i]));
    for (std::size_t j = 0; j < rec.states.cols; ++j)
      std::fprintf(f, ",%.17g", rec.states(i, j));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

RejectionResult rejection_sample(const targets::TargetDensity& target,
                                 const ExplicitProposal& proposal, double m,
                                 std::size_t n_proposals, Rng& rng,
                                 bool check_envelope) {
  check(m > 0, "envelope constant must be positive");
  check(target.dim == proposal.dim, "proposal dimension does not match target");

  if (check_envelope && !target.grid.points.empty() && target.dim <= 2) {
    // subsample large grids; this is a sanity warning, not a proof
    double sup = -std::numeric_limits<double>::infinity();
    const auto& g = target.grid;
    std::size_t n0 = g.points[0];
    std::size_t stride0 = std::max<std::size_t>(1, n0 / 64);
    std::vector<double> x(target.dim);
    if (target.dim == 1) {
      double h = (g.hi[0] - g.lo[0]) / double(n0 - 1);
      for (std::size_t i = 0; i < n0; i += stride0) {
        x[0] = g.lo[0] + h * double(i);
        sup = std::max(sup, target.log_unnorm(x.data()) - proposal.logq(x.data()));
      }
    } else {
      std::size_t n1 = g.points[1];
      std::size_t stride1 = std::max<std::size_t>(1, n1 / 64);
      double h0 = (g.hi[0] - g.lo[0]) / double(n0 - 1);
      double h1 = (g.hi[1] - g.lo[1]) / double(n1 - 1);
      for (std::size_t i = 0; i < n0; i += stride0)
        for (std::size_t j = 0; j < n1; j += stride1) {
          x[0] = g.lo[0] + h0 * double(i);
          x[1] = g.lo[1] + h1 * double(j);
          sup = std::max(sup,
                         target.log_unnorm(x.data()) - proposal.logq(x.data()));
        }
    }
    if (sup > std::log(m))
      std::fprintf(stderr,
                   "warning: envelope constant %g is below the grid density "
                   "ratio supremum %g\n",
                   m, std::exp(sup));
  }

  std::vector<double> accepted_flat;
  std::vector<double> xp(target.dim);
  std::size_t n_acc = 0, violations = 0;
  const double log_m = std::log(m);
  for (std::size_t i = 0; i < n_proposals; ++i) {
    double lq;
    if (proposal.draw_with_logq) {
      lq = proposal.draw_with_logq(rng, xp.data());
    } else {
      proposal.draw(rng, xp.data());
      lq = proposal.logq(xp.data());
    }
    double log_accept = target.log_unnorm(xp.data()) - log_m - lq;
    if (log_accept > 0) ++violations;
    if (std::log(rng.uniform()) < std::min(0.0, log_accept)) {
      ++n_acc;
      accepted_flat.insert(accepted_flat.end(), xp.begin(), xp.end());
    }
  }
  if (violations > 0)
    std::fprintf(stderr,
                 "warning: %zu of %zu rejection draws exceeded the envelope\n",
                 violations, n_proposals);

  RejectionResult res;
  res.samples = Mat(n_acc, target.dim);
  std::copy(accepted_flat.begin(), accepted_flat.end(),
            res.samples.data.begin());
  res.acceptance_fraction = double(n_acc) / double(n_proposals);
  res.envelope_violations = violations;
  return res;
}

}  // namespace mhflow::mh
