#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "mhflow/ad.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"

using namespace mhflow;
using namespace mhflow::targets;

namespace {

double quad_1d(const TargetDensity& t) {
  const auto& g = t.grid;
  const std::size_t n = g.points[0];
  const double h = (g.hi[0] - g.lo[0]) / double(n - 1);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double x = g.lo[0] + h * double(i);
    double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    acc += w * std::exp(t.log_unnorm(&x));
  }
  return acc * h;
}

double quad_2d(const TargetDensity& t) {
  const auto& g = t.grid;
  const std::size_t n = g.points[0];
  const double hx = (g.hi[0] - g.lo[0]) / double(n - 1);
  const double hy = (g.hi[1] - g.lo[1]) / double(n - 1);
  double acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double wx = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    double x[2];
    x[0] = g.lo[0] + hx * double(i);
    double row = 0;
    for (std::size_t j = 0; j < n; ++j) {
      double wy = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      x[1] = g.lo[1] + hy * double(j);
      row += wy * std::exp(t.log_unnorm(x));
    }
    acc += wx * row;
  }
  return acc * hx * hy;
}

std::string write_temp_csv(const char* name, const std::string& body) {
  std::string path = std::string("/tmp/") + name;
  std::ofstream out(path);
  out << body;
  return path;
}

void check_tape_matches_plain(const TargetDensity& t, double spread) {
  Rng rng(99);
  Mat x(7, t.dim);
  for (double& e : x.data) e = spread * rng.normal();
  Mat plain = t.logp_batch(x);
  ad::Tape tape;
  int node = t.tape_logp(tape, tape.input(x));
  const Mat& out = tape.val(node);
  REQUIRE(out.rows == 7);
  REQUIRE(out.cols == 1);
  for (std::size_t i = 0; i < 7; ++i)
    CHECK(out(i, 0) == doctest::Approx(plain(i, 0)).epsilon(1e-12));
}

void check_tape_input_gradient(const TargetDensity& t, double spread,
                               double tol = 1e-5) {
  Rng rng(101);
  ParamVector pv;
  pv.add("x", 4, t.dim);
  for (double& e : pv.flat()) e = spread * rng.normal();
  auto prog = [&](ad::Tape& tape, const ParamVector& p) {
    return tape.sum_all(t.tape_logp(tape, tape.param("x", p)));
  };
  auto rec = ad::value_and_grad(prog, pv);
  auto fd = ad::finite_diff_grad(
      [&](const ParamVector& p) {
        ad::Tape tape;
        return tape.val(prog(tape, p))(0, 0);
      },
      pv, 1e-6);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    double denom = std::max({1.0, std::fabs(fd[i]), std::fabs(rec.grad[i])});
    CHECK(std::fabs(rec.grad[i] - fd[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("ring potential zeros and a point off the ring") {
  double a[2] = {2, 0}, b[2] = {0, 2}, c[2] = {3, 0};
  CHECK(ring_logp(a) == doctest::Approx(0.0));
  CHECK(ring_logp(b) == doctest::Approx(0.0));
  CHECK(ring_logp(c) == doctest::Approx(-3.125));
}

TEST_CASE("wide two-mode mixture at a mode center") {
  auto t = make_mog2();
  double x[2] = {5, 0};
  CHECK(t.log_unnorm(x) ==
        doctest::Approx(std::log(1.0 / std::numbers::pi)).epsilon(1e-12));
}

TEST_CASE("six-mode mixture is invariant under 60 degree rotation") {
  auto t = make_mog6();
  const double c = std::cos(std::numbers::pi / 3.0);
  const double s = std::sin(std::numbers::pi / 3.0);
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    double x[2] = {rng.uniform(-8, 8), rng.uniform(-8, 8)};
    double rx[2] = {c * x[0] - s * x[1], s * x[0] + c * x[1]};
    double p = std::exp(t.log_unnorm(x));
    double pr = std::exp(t.log_unnorm(rx));
    CHECK(std::fabs(p - pr) < 1e-12);
  }
}

TEST_CASE("close two-mode pair: both components contribute equally at the origin") {
  auto t = make_mog_pair();
  double x[2] = {0, 0};
  // one component, evaluated directly, doubled
  double comp = std::log(0.5) - std::log(0.1 * 2.0 * std::numbers::pi) -
                0.5 * (4.0 / 0.1);
  CHECK(t.log_unnorm(x) == doctest::Approx(std::log(2.0) + comp).epsilon(1e-12));
}

TEST_CASE("five-ring potential values") {
  double a[2] = {3, 0}, b[2] = {0, 0}, c[2] = {1.5, 0};
  CHECK(ring5_logp(a) == doctest::Approx(0.0));
  CHECK(ring5_logp(b) == doctest::Approx(-25.0));
  CHECK(ring5_logp(c) == doctest::Approx(-6.25));
}

TEST_CASE("anisotropic diagonal gaussian peaks at the origin with zero slope") {
  auto t = make_icg();
  std::vector<double> zero(50, 0.0);
  double at_zero = t.logp(zero);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(50);
    for (double& e : x) e = rng.normal();
    CHECK(t.logp(x) < at_zero);
  }
  for (std::size_t j = 0; j < 50; ++j) {
    std::vector<double> up = zero, down = zero;
    up[j] += 1e-5;
    down[j] -= 1e-5;
    CHECK(std::fabs(t.logp(up) - t.logp(down)) / 2e-5 < 1e-6);
  }
}

TEST_CASE("rotated gaussian matches its dense covariance form") {
  auto t = make_scg();
  const double c = std::cos(std::numbers::pi / 4.0);
  const double s = std::sin(std::numbers::pi / 4.0);
  // covariance B diag(0.01, 100) B^T assembled by hand
  double cov[2][2] = {
      {c * c * 0.01 + s * s * 100.0, c * s * 0.01 - s * c * 100.0},
      {c * s * 0.01 - s * c * 100.0, s * s * 0.01 + c * c * 100.0}};
  double det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
  CHECK(det == doctest::Approx(1.0).epsilon(1e-9));
  double tr = cov[0][0] + cov[1][1];
  double disc = std::sqrt(tr * tr / 4.0 - det);
  CHECK(tr / 2.0 + disc == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(tr / 2.0 - disc == doctest::Approx(0.01).epsilon(1e-6));

  double inv[2][2] = {{cov[1][1] / det, -cov[0][1] / det},
                      {-cov[1][0] / det, cov[0][0] / det}};
  Rng rng(7);
  for (int i = 0; i < 50; ++i) {
    double x[2] = {rng.normal(0, 5), rng.normal(0, 5)};
    double quad = x[0] * (inv[0][0] * x[0] + inv[0][1] * x[1]) +
                  x[1] * (inv[1][0] * x[0] + inv[1][1] * x[1]);
    double want = -0.5 * quad - std::log(2.0 * std::numbers::pi) -
                  0.5 * std::log(det);
    CHECK(t.log_unnorm(x) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("rough well at the origin") {
  double x[2] = {0, 0};
  CHECK(rough_well_logp(x, 2, 1e-2) == doctest::Approx(-0.02));
}

TEST_CASE("two-mode 1-d target: closed form, normalization, mode masses") {
  auto t = make_bimodal1d();
  double a = -0.5 * 0.0 + std::log(0.5) - std::log(0.5) -
             0.5 * std::log(2.0 * std::numbers::pi);
  double b = -0.5 * (16.0 / 0.49) + std::log(0.5) - std::log(0.7) -
             0.5 * std::log(2.0 * std::numbers::pi);
  double want = std::max(a, b) +
                std::log(std::exp(a - std::max(a, b)) +
                         std::exp(b - std::max(a, b)));
  CHECK(bimodal1d_logp(-2.0) == doctest::Approx(want).epsilon(1e-12));

  CHECK(quad_1d(t) == doctest::Approx(1.0).epsilon(1e-6));

  // mass on each side of zero is one component's weight up to leakage
  const auto& g = t.grid;
  const double h = (g.hi[0] - g.lo[0]) / double(g.points[0] - 1);
  double left = 0;
  for (std::size_t i = 0; i < g.points[0]; ++i) {
    double x = g.lo[0] + h * double(i);
    if (x < 0) left += h * std::exp(t.log_unnorm(&x));
  }
  CHECK(left == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("normalized targets integrate to one over their grids") {
  CHECK(quad_2d(make_mog2()) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(quad_2d(make_mog6()) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(quad_2d(make_mog_pair()) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(quad_2d(make_scg()) == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("log densities stay finite on a large random cloud") {
  Rng rng(8);
  for (const char* name :
       {"ring", "mog2", "mog6", "mog", "ring5", "rough_well", "bimodal1d"}) {
    auto t = by_name(name);
    double lo = t.grid.lo[0], hi = t.grid.hi[0];
    std::size_t bad = 0;
    std::vector<double> x(t.dim);
    for (int i = 0; i < 1000000; ++i) {
      for (double& e : x) e = rng.uniform(lo, hi);
      if (!std::isfinite(t.log_unnorm(x.data()))) ++bad;
    }
    CHECK(bad == 0);
  }
  auto icg = make_icg();
  std::vector<double> x(50);
  std::size_t bad = 0;
  for (int i = 0; i < 100000; ++i) {
    for (double& e : x) e = rng.uniform(-35, 35);
    if (!std::isfinite(icg.log_unnorm(x.data()))) ++bad;
  }
  CHECK(bad == 0);
}

TEST_CASE("tape log-density agrees with the plain evaluation") {
  check_tape_matches_plain(make_ring(), 2.0);
  check_tape_matches_plain(make_mog2(), 3.0);
  check_tape_matches_plain(make_mog6(), 1.5);
  check_tape_matches_plain(make_mog_pair(), 1.5);
  check_tape_matches_plain(make_ring5(), 2.0);
  check_tape_matches_plain(make_icg(), 2.0);
  check_tape_matches_plain(make_scg(), 5.0);
  check_tape_matches_plain(make_rough_well(), 1.5);
  check_tape_matches_plain(make_bimodal1d(), 2.0);
}

TEST_CASE("tape gradients with respect to inputs match finite differences") {
  check_tape_input_gradient(make_ring(), 2.0);
  check_tape_input_gradient(make_mog2(), 3.0);
  check_tape_input_gradient(make_bimodal1d(), 2.0);
  check_tape_input_gradient(make_scg(), 5.0);
  check_tape_input_gradient(make_icg(), 2.0);
  // the rough well oscillates on the 1e-2 scale; use a matched step
  check_tape_input_gradient(make_rough_well(), 1.5, 2e-4);
}

TEST_CASE("logistic posterior at zero parameters") {
  auto path = write_temp_csv("toy4.csv",
                             "a,b,label\n1,0,0\n2,1,1\n3,4,0\n4,2,1\n");
  auto ds = load_dataset(path, "toy");
  REQUIRE(ds.n() == 4);
  REQUIRE(ds.d() == 2);
  std::vector<double> theta(3, 0.0);
  double want = 4.0 * std::log(0.5) -
                3.0 * 0.5 * std::log(2.0 * std::numbers::pi);
  CHECK(logistic_posterior_logp(theta.data(), ds) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("logistic posterior with one data point matches an independent integrand") {
  auto path = write_temp_csv("toy1.csv", "f,label\n0.7,1\n-0.7,0\n");
  auto ds = load_dataset(path, "toy");
  REQUIRE(ds.n() == 2);
  REQUIRE(ds.d() == 1);
  // quadrature of exp(log posterior) against likelihood * prior coded directly
  double z_impl = 0, z_direct = 0;
  const int n = 400;
  const double h = 12.0 / double(n - 1);
  for (int i = 0; i < n; ++i) {
    double wi = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    double w = -6.0 + h * double(i);
    for (int j = 0; j < n; ++j) {
      double wj = (j == 0 || j == n - 1) ? 0.5 : 1.0;
      double b = -6.0 + h * double(j);
      double theta[2] = {w, b};
      z_impl += wi * wj * std::exp(logistic_posterior_logp(theta, ds));
      double lik = 1.0;
      for (std::size_t k = 0; k < ds.n(); ++k) {
        double logit = -ds.covariates(k, 0) * w + b;
        double p1 = 1.0 / (1.0 + std::exp(-logit));
        lik *= ds.labels[k] == 1 ? p1 : 1.0 - p1;
      }
      double prior = std::exp(-0.5 * (w * w + b * b)) /
                     (2.0 * std::numbers::pi);
      z_direct += wi * wj * lik * prior;
    }
  }
  CHECK(z_impl * h * h == doctest::Approx(z_direct * h * h).epsilon(1e-10));
  CHECK(z_impl > 0);
}

TEST_CASE("logistic posterior gradient matches finite differences") {
  auto path = write_temp_csv(
      "toy5.csv", "a,b,c,label\n1,0,2,0\n2,1,0,1\n3,4,1,0\n4,2,2,1\n0,1,1,1\n");
  auto ds = load_dataset(path, "toy");
  auto t = make_logistic_posterior(ds);
  check_tape_matches_plain(t, 0.8);
  check_tape_input_gradient(t, 0.8);

  auto t_flipped = make_logistic_posterior(ds, true);
  check_tape_matches_plain(t_flipped, 0.8);
  std::vector<double> theta(ds.d() + 1, 0.3);
  CHECK(t.logp(theta) != doctest::Approx(t_flipped.logp(theta)));
}

TEST_CASE("dataset loading: standardization of a two-row file") {
  auto path = write_temp_csv("toy2.csv", "a,b,label\n1,10,1\n3,20,2\n");
  auto ds = load_dataset(path, "toy");
  REQUIRE(ds.n() == 2);
  REQUIRE(ds.d() == 2);
  CHECK(ds.covariates(0, 0) == doctest::Approx(-1.0));
  CHECK(ds.covariates(1, 0) == doctest::Approx(1.0));
  CHECK(ds.covariates(0, 1) == doctest::Approx(-1.0));
  CHECK(ds.covariates(1, 1) == doctest::Approx(1.0));
  CHECK(ds.labels[0] == 0);
  CHECK(ds.labels[1] == 1);
}

TEST_CASE("dataset loading: error cases") {
  auto const_col = write_temp_csv("toy_const.csv", "a,b,label\n2,1,0\n2,3,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(const_col, "toy"),
                       doctest::Contains("zero variance column"), Error);

  auto bad_cell = write_temp_csv("toy_bad.csv", "a,label\n1,0\nx,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(bad_cell, "toy"),
                       doctest::Contains("non-numeric cell"), Error);

  auto three_labels = write_temp_csv("toy_l3.csv",
                                     "a,label\n1,0\n2,1\n3,2\n");
  CHECK_THROWS_WITH_AS(load_dataset(three_labels, "toy"),
                       doctest::Contains("two distinct values"), Error);

  auto ragged = write_temp_csv("toy_rag.csv", "a,b,label\n1,2,0\n1,1\n");
  CHECK_THROWS_WITH_AS(load_dataset(ragged, "toy"),
                       doctest::Contains("column count"), Error);

  CHECK_THROWS_WITH_AS(load_dataset("/tmp/definitely_missing_9.csv", "toy"),
                       doctest::Contains("cannot open"), Error);
}

TEST_CASE("shipped datasets have the declared shapes") {
  auto heart = load_dataset("data/heart.csv", "heart");
  CHECK(heart.n() == 532);
  CHECK(heart.d() == 14);
  for (std::size_t c = 0; c < heart.d(); ++c) {
    double mean = 0, var = 0;
    for (std::size_t i = 0; i < heart.n(); ++i) mean += heart.covariates(i, c);
    mean /= double(heart.n());
    for (std::size_t i = 0; i < heart.n(); ++i)
      var += (heart.covariates(i, c) - mean) * (heart.covariates(i, c) - mean);
    var /= double(heart.n());
    CHECK(std::fabs(mean) < 1e-9);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-6);
  }
  auto german = load_dataset("data/german.csv", "german");
  CHECK(german.n() == 1000);
  CHECK(german.d() == 25);
  auto australian = load_dataset("data/australian.csv", "australian");
  CHECK(australian.n() == 690);
  CHECK(australian.d() == 15);
}
