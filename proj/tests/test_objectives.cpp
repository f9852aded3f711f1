#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mhflow/objectives.hpp"
#include "mhflow/rng.hpp"

using namespace mhflow;
using objectives::LossKind;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double gauss_logpdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

targets::TargetDensity std_normal_target(std::size_t dim) {
  targets::TargetDensity t;
  t.name = "stdnormal";
  t.dim = dim;
  t.normalized = true;
  t.log_unnorm = [dim](const double* x) {
    return flows::FlowProposal::base_logp(x, dim);
  };
  t.tape_logp = [dim](ad::Tape& tp, int x) {
    return flows::FlowProposal::base_logp_node(tp, x, dim);
  };
  return t;
}

targets::TargetDensity diag_gauss_target(std::vector<double> mu,
                                         std::vector<double> sd) {
  targets::TargetDensity t;
  t.name = "diaggauss";
  t.dim = mu.size();
  t.normalized = true;
  auto mu_c = mu;
  auto sd_c = sd;
  t.log_unnorm = [mu_c, sd_c](const double* x) {
    double acc = 0;
    for (std::size_t j = 0; j < mu_c.size(); ++j)
      acc += gauss_logpdf(x[j], mu_c[j], sd_c[j]);
    return acc;
  };
  Mat neg_mu(1, mu.size()), inv_sd(1, mu.size());
  double norm_const = 0;
  for (std::size_t j = 0; j < mu.size(); ++j) {
    neg_mu(0, j) = -mu[j];
    inv_sd(0, j) = 1.0 / sd[j];
    norm_const -= std::log(sd[j]) + kHalfLog2Pi;
  }
  t.tape_logp = [neg_mu, inv_sd, norm_const](ad::Tape& tp, int x) {
    int zn = tp.mul_row_const(tp.add_row_const(x, neg_mu), inv_sd);
    return tp.add_const(tp.scale(tp.sum_cols(tp.square(zn)), -0.5),
                        norm_const);
  };
  return t;
}

// one coupling layer with constant nets: shifts the second coordinate by
// t0 and scales it by exp(s0)
flows::FlowProposal affine_flow(double s0, double t0) {
  Rng rng(71);
  auto f = flows::FlowProposal::create({2, 1, 16, 5.0}, rng);
  auto& pv = f.params();
  for (const char* net : {"s", "t"}) {
    for (const char* leaf : {"w1", "b1"}) {
      std::string name = std::string("flow.l0.") + net + "." + leaf;
      Mat m = pv.get(name);
      for (double& v : m.data) v = 0;
      pv.set(name, m);
    }
  }
  if (s0 != 0.0) {
    Mat b2s = pv.get("flow.l0.s.b2");
    b2s(0, 0) = 5.0 * std::atanh(s0 / 5.0);
    pv.set("flow.l0.s.b2", b2s);
  }
  Mat b2t = pv.get("flow.l0.t.b2");
  b2t(0, 0) = t0;
  pv.set("flow.l0.t.b2", b2t);
  return f;
}

double tape_loss_value(LossKind kind, const targets::TargetDensity& target,
                       const flows::FlowProposal& flow, const Mat& z,
                       const Mat& xbuf) {
  ad::Tape t;
  return t.val(
      objectives::build_flow_loss(t, kind, target, flow, flow.params(), z,
                                  xbuf))(0, 0);
}

// 1 - AR for a pair of 1-D gaussians, by swapped-joint quadrature
double quad_one_minus_ar(double mu_p, double sd_p, double mu_q, double sd_q) {
  const int n = 1200;
  const double lo = std::min(mu_p - 8 * sd_p, mu_q - 8 * sd_q);
  const double hi = std::max(mu_p + 8 * sd_p, mu_q + 8 * sd_q);
  std::vector<double> p(n), q(n), w(n);
  const double h = (hi - lo) / double(n - 1);
  for (int i = 0; i < n; ++i) {
    double x = lo + h * i;
    p[i] = std::exp(gauss_logpdf(x, mu_p, sd_p));
    q[i] = std::exp(gauss_logpdf(x, mu_q, sd_q));
    w[i] = (i == 0 || i == n - 1) ? 0.5 : 1.0;
  }
  double acc = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      acc += w[i] * w[j] * std::fabs(p[i] * q[j] - p[j] * q[i]);
  return 0.5 * acc * h * h;
}

double quad_sym_kl_gauss(double mu_p, double sd_p, double mu_q, double sd_q) {
  const int n = 20000;
  const double lo = std::min(mu_p - 10 * sd_p, mu_q - 10 * sd_q);
  const double hi = std::max(mu_p + 10 * sd_p, mu_q + 10 * sd_q);
  const double h = (hi - lo) / double(n - 1);
  double acc = 0;
  for (int i = 0; i < n; ++i) {
    double x = lo + h * i;
    double wt = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    double lp = gauss_logpdf(x, mu_p, sd_p), lq = gauss_logpdf(x, mu_q, sd_q);
    acc += wt * (std::exp(lp) - std::exp(lq)) * (lp - lq);
  }
  return acc * h;
}

}  // namespace

TEST_CASE("matched proposal sits at the loss optima exactly") {
  Rng rng(72);
  auto flow = flows::FlowProposal::create({2, 4, 16, 5.0}, rng);
  auto target = std_normal_target(2);
  Mat z(32, 2), xbuf(32, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : xbuf.data) v = rng.normal();

  CHECK(tape_loss_value(LossKind::AR, target, flow, z, xbuf) == -1.0);
  CHECK(tape_loss_value(LossKind::ARLB, target, flow, z, xbuf) == 0.0);
  CHECK(tape_loss_value(LossKind::VI, target, flow, z, xbuf) == 0.0);
  CHECK(objectives::eval_flow_loss(LossKind::AR, target, flow, z, xbuf) ==
        -1.0);
  CHECK(objectives::eval_flow_loss(LossKind::ARLB, target, flow, z, xbuf) ==
        0.0);
  CHECK(objectives::eval_flow_loss(LossKind::VI, target, flow, z, xbuf) ==
        0.0);
}

TEST_CASE("single-sample ratios clip and pass through as designed") {
  auto flow = affine_flow(0.0, 1.0);
  auto target = std_normal_target(2);
  // with a unit shift of the second coordinate, r = xbuf_1 - 1
  Mat z = Mat::row_vector({0.0, 0.0});

  Mat above = Mat::row_vector({0.0, 1.0 + std::log(4.0)});
  CHECK(tape_loss_value(LossKind::AR, target, flow, z, above) ==
        doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(tape_loss_value(LossKind::ARLB, target, flow, z, above) ==
        doctest::Approx(-std::log(4.0)).epsilon(1e-12));

  Mat below = Mat::row_vector({0.0, 0.0});
  CHECK(tape_loss_value(LossKind::AR, target, flow, z, below) ==
        doctest::Approx(-std::exp(-1.0)).epsilon(1e-12));
  CHECK(tape_loss_value(LossKind::ARLB, target, flow, z, below) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tape and plain loss paths agree") {
  Rng rng(73);
  auto flow = flows::FlowProposal::create({2, 4, 8, 5.0}, rng);
  for (double& v : flow.params().flat()) v += 0.2 * rng.normal();
  auto target = targets::make_mog2();
  Mat z(16, 2), xbuf(16, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : xbuf.data) v = rng.normal(1.0, 2.0);
  for (LossKind kind : {LossKind::AR, LossKind::ARLB, LossKind::VI}) {
    double a = tape_loss_value(kind, target, flow, z, xbuf);
    double b = objectives::eval_flow_loss(kind, target, flow, z, xbuf);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }
}

TEST_CASE("population acceptance loss matches quadrature") {
  auto flow = affine_flow(0.0, 1.0);
  auto target = std_normal_target(2);
  const std::size_t k = 1000000;
  Rng rng(74);
  Mat z(k, 2), xbuf(k, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : xbuf.data) v = rng.normal();

  double ar_mc = -objectives::eval_flow_loss(LossKind::AR, target, flow, z,
                                             xbuf);
  double ar_quad = 1.0 - quad_one_minus_ar(0, 1, 1, 1);
  CHECK(std::fabs(ar_mc - ar_quad) < 5e-3);
  CHECK(ar_mc > 0.0);
  CHECK(ar_mc < 1.0);

  // the symmetrized KL of a unit mean shift is exactly 1; the bound
  // 1 - sqrt(symKL/2) must sit below the quadrature acceptance rate
  double sym_mc = -(-objectives::eval_flow_loss(LossKind::ARLB, target, flow,
                                                z, xbuf));
  CHECK(std::fabs(sym_mc - 1.0) < 3.0 * std::sqrt(2.0 / double(k)));
  CHECK(1.0 - std::sqrt(sym_mc / 2.0) <= ar_quad + 1e-6);
}

TEST_CASE("pinsker ordering holds for random gaussian pairs") {
  Rng rng(75);
  for (int trial = 0; trial < 20; ++trial) {
    double mu_p = rng.normal(0, 1.5), mu_q = rng.normal(0, 1.5);
    double sd_p = 0.4 + 2.0 * rng.uniform(), sd_q = 0.4 + 2.0 * rng.uniform();
    double sym = quad_sym_kl_gauss(mu_p, sd_p, mu_q, sd_q);
    double ar = 1.0 - quad_one_minus_ar(mu_p, sd_p, mu_q, sd_q);
    CHECK(ar >= 0.0);
    CHECK(ar <= 1.0 + 1e-9);
    CHECK(1.0 - std::sqrt(std::max(0.0, sym) / 2.0) <= ar + 1e-6);
  }
  // matched pair: zero divergence, full acceptance
  CHECK(quad_sym_kl_gauss(0.3, 1.1, 0.3, 1.1) ==
        doctest::Approx(0.0).epsilon(1e-10));
  CHECK(1.0 - quad_one_minus_ar(0.3, 1.1, 0.3, 1.1) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(76);
  auto flow = flows::FlowProposal::create({2, 2, 8, 5.0}, rng);
  for (double& v : flow.params().flat()) v += 0.2 * rng.normal();
  auto target = targets::make_mog2();
  Mat z(8, 2), xbuf(8, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : xbuf.data) v = rng.normal(0.5, 2.0);

  for (LossKind kind : {LossKind::AR, LossKind::ARLB, LossKind::VI}) {
    auto prog = [&](ad::Tape& t, const ParamVector& p) {
      return objectives::build_flow_loss(t, kind, target, flow, p, z, xbuf);
    };
    auto rec = ad::value_and_grad(prog, flow.params());
    auto fd = ad::finite_diff_grad(
        [&](const ParamVector& p) {
          ad::Tape t;
          return t.val(prog(t, p))(0, 0);
        },
        flow.params(), 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      double denom = std::max({1.0, std::fabs(fd[i]), std::fabs(rec.grad[i])});
      CHECK(std::fabs(rec.grad[i] - fd[i]) / denom < 1e-4);
    }
  }
}

TEST_CASE("variational loss recovers an exactly representable gaussian") {
  std::vector<double> mu = {1.5, -0.7}, sd = {0.8, 1.3};
  auto target = diag_gauss_target(mu, sd);
  Rng rng(77);
  auto flow = flows::FlowProposal::create({2, 4, 32, 5.0}, rng);
  ad::AdamState opt;
  ad::AdamConfig cfg;
  Rng noise(78);
  for (int it = 0; it < 10000; ++it) {
    cfg.lr = it < 4000 ? 1e-3 : (it < 7000 ? 2e-4 : 5e-5);
    Mat z(128, 2);
    for (double& v : z.data) v = noise.normal();
    auto rec = ad::value_and_grad(
        [&](ad::Tape& t, const ParamVector& p) {
          return objectives::build_flow_loss(t, LossKind::VI, target, flow, p,
                                             z, z);
        },
        flow.params());
    ad::adam_step(flow.params(), rec.grad, opt, cfg);
  }

  Rng srng(79);
  const std::size_t n = 100000;
  Mat x = flow.sample(n, srng);
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
    mean /= double(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = x(i, j) - mean;
      var += d * d;
    }
    var /= double(n);
    CHECK(std::fabs(mean - mu[j]) / std::max(1.0, std::fabs(mu[j])) < 0.01);
    CHECK(std::fabs(var - sd[j] * sd[j]) / std::max(1.0, sd[j] * sd[j]) <
          0.01);
  }
}

TEST_CASE("bayes objective with no data reduces to prior cross entropy") {
  targets::LogisticDataset empty;
  empty.name = "empty";
  empty.covariates = Mat(0, 1);
  Rng rng(80);
  auto flow = flows::FlowProposal::create({2, 4, 16, 5.0}, rng);

  const std::size_t k = 4000, j = 4000;
  Mat z(k, 2), post(j, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : post.data) v = rng.normal();

  ad::Tape t;
  double obj = t.val(objectives::build_bayes_objective(
      t, flow, flow.params(), empty, {}, z, post))(0, 0);

  // the identity flow reproduces the prior, so only the cross-entropy
  // term survives and equals the prior entropy up to monte carlo noise
  double manual = 0;
  for (std::size_t i = 0; i < j; ++i)
    manual -= flows::FlowProposal::base_logp(post.row_ptr(i), 2) / double(j);
  CHECK(obj == doctest::Approx(manual).epsilon(1e-12));
  double entropy = 1.0 + 2.0 * kHalfLog2Pi;
  CHECK(std::fabs(obj - entropy) < 3.0 * std::sqrt(2.0 / double(j)) + 0.05);
}

TEST_CASE("full-batch equals the complete minibatch") {
  targets::LogisticDataset data;
  data.name = "toy6";
  data.covariates = Mat(6, 2);
  Rng rng(81);
  for (double& v : data.covariates.data) v = rng.normal();
  data.labels = {1, 0, 1, 1, 0, 1};

  auto flow = flows::FlowProposal::create({3, 2, 8, 5.0}, rng);
  for (double& v : flow.params().flat()) v += 0.1 * rng.normal();
  Mat z(10, 3), post(5, 3);
  for (double& v : z.data) v = rng.normal();
  for (double& v : post.data) v = rng.normal();

  ad::Tape t1, t2;
  double full = t1.val(objectives::build_bayes_objective(
      t1, flow, flow.params(), data, {}, z, post))(0, 0);
  double listed = t2.val(objectives::build_bayes_objective(
      t2, flow, flow.params(), data, {0, 1, 2, 3, 4, 5}, z, post))(0, 0);
  CHECK(full == listed);
}

TEST_CASE("bayes objective gradients match finite differences") {
  targets::LogisticDataset data;
  data.name = "toy3";
  data.covariates = Mat(3, 1);
  data.covariates(0, 0) = 0.8;
  data.covariates(1, 0) = -0.4;
  data.covariates(2, 0) = 1.6;
  data.labels = {1, 0, 1};

  Rng rng(82);
  auto flow = flows::FlowProposal::create({2, 2, 8, 5.0}, rng);
  for (double& v : flow.params().flat()) v += 0.2 * rng.normal();
  Mat z(6, 2), post(4, 2);
  for (double& v : z.data) v = rng.normal();
  for (double& v : post.data) v = rng.normal();

  auto prog = [&](ad::Tape& t, const ParamVector& p) {
    return objectives::build_bayes_objective(t, flow, p, data, {0, 2}, z,
                                             post);
  };
  auto rec = ad::value_and_grad(prog, flow.params());
  auto fd = ad::finite_diff_grad(
      [&](const ParamVector& p) {
        ad::Tape t;
        return t.val(prog(t, p))(0, 0);
      },
      flow.params(), 1e-5);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    double denom = std::max({1.0, std::fabs(fd[i]), std::fabs(rec.grad[i])});
    CHECK(std::fabs(rec.grad[i] - fd[i]) / denom < 1e-4);
  }
}

TEST_CASE("single-point objective matches term-by-term quadrature") {
  targets::LogisticDataset data;
  data.name = "one";
  data.covariates = Mat(1, 1);
  data.covariates(0, 0) = 0.8;
  data.labels = {1};

  Rng rng(83);
  auto flow = flows::FlowProposal::create({2, 2, 8, 5.0}, rng);
  for (double& v : flow.params().flat()) v += 0.2 * rng.normal();

  auto loglik = [&](double w, double b) {
    double lin = -0.8 * w + b;
    double sp = std::max(lin, 0.0) + std::log1p(std::exp(-std::fabs(lin)));
    return lin - sp;
  };
  auto logprior = [](double w, double b) {
    return -0.5 * (w * w + b * b) - 2.0 * kHalfLog2Pi;
  };

  // quadrature of all three terms over the (w, b) plane
  const int n = 500;
  const double lo = -7, hi = 7;
  const double h = (hi - lo) / double(n - 1);
  double term1 = 0, term2 = 0, term3 = 0, post_z = 0;
  for (int i = 0; i < n; ++i) {
    double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    for (int jj = 0; jj < n; ++jj) {
      double wj = (jj == 0 || jj == n - 1) ? 0.5 : 1.0;
      double w = lo + h * i, b = lo + h * jj;
      double theta[2] = {w, b};
      double lq = flow.log_prob(theta);
      double q = std::exp(lq);
      double post = std::exp(logprior(w, b) + loglik(w, b));
      term1 += wi * wj * q * (-loglik(w, b));
      term2 += wi * wj * q * (lq - logprior(w, b));
      term3 += wi * wj * post * (-lq);
      post_z += wi * wj * post;
    }
  }
  term1 *= h * h;
  term2 *= h * h;
  term3 = term3 / post_z;
  double want = term1 + term2 + term3;

  // monte carlo estimate: reparameterized draws for the first two terms,
  // exact rejection draws from the posterior for the third
  const std::size_t k = 50000;
  Mat z(k, 2);
  for (double& v : z.data) v = rng.normal();
  std::vector<double> post_flat;
  while (post_flat.size() < 2 * 20000) {
    double w = rng.normal(), b = rng.normal();
    if (std::log(rng.uniform()) < loglik(w, b)) {
      post_flat.push_back(w);
      post_flat.push_back(b);
    }
  }
  Mat post_samples(post_flat.size() / 2, 2);
  std::copy(post_flat.begin(), post_flat.end(), post_samples.data.begin());

  ad::Tape t;
  double got = t.val(objectives::build_bayes_objective(
      t, flow, flow.params(), data, {}, z, post_samples))(0, 0);

  // standard errors of the two monte carlo pieces, measured on the samples
  std::vector<double> ld;
  Mat theta = flow.forward_batch(z, &ld);
  double m12 = 0, s12 = 0;
  for (std::size_t i = 0; i < k; ++i) {
    double w = theta(i, 0), b = theta(i, 1);
    double lq = flows::FlowProposal::base_logp(z.row_ptr(i), 2) - ld[i];
    double v = -loglik(w, b) + lq - logprior(w, b);
    m12 += v;
    s12 += v * v;
  }
  m12 /= double(k);
  double se12 = std::sqrt((s12 / double(k) - m12 * m12) / double(k));
  double m3 = 0, s3 = 0;
  for (std::size_t i = 0; i < post_samples.rows; ++i) {
    double v = -flow.log_prob(post_samples.row_ptr(i));
    m3 += v;
    s3 += v * v;
  }
  m3 /= double(post_samples.rows);
  double se3 = std::sqrt(
      (s3 / double(post_samples.rows) - m3 * m3) / double(post_samples.rows));

  CHECK(std::fabs(got - want) < 3.0 * (se12 + se3) + 1e-3);
}
