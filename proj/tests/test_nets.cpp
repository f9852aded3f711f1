#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mhflow/nets.hpp"
#include "mhflow/rng.hpp"

using namespace mhflow;
using nets::DiscriminatorNet;
using nets::GeneratorNet;
using nets::PairDiscriminator;

namespace {

void zero_view(ParamVector& pv, const std::string& name) {
  Mat m = pv.get(name);
  for (double& v : m.data) v = 0;
  pv.set(name, m);
}

void zero_all(ParamVector& pv) {
  for (const auto& view : pv.views()) zero_view(pv, view.name);
}

double gauss_logpdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

void check_grad_vs_fd(const ad::Program& prog, const ParamVector& params,
                      double tol, double step = 1e-5) {
  GradRecord rec = ad::value_and_grad(prog, params);
  auto fd = ad::finite_diff_grad(
      [&](const ParamVector& p) {
        ad::Tape t;
        return t.val(prog(t, p))(0, 0);
      },
      params, step);
  for (std::size_t i = 0; i < fd.size(); ++i) {
    double denom = std::max({1.0, std::fabs(fd[i]), std::fabs(rec.grad[i])});
    CHECK(std::fabs(rec.grad[i] - fd[i]) / denom < tol);
  }
}

}  // namespace

TEST_CASE("generator with a zeroed final layer outputs zero") {
  Rng rng(41);
  auto g = GeneratorNet::create({8, 3, 64, 0.2}, rng);
  zero_view(g.params(), "gen.w3");
  zero_view(g.params(), "gen.b3");
  Mat x = g.generate(50, rng);
  for (double v : x.data) CHECK(v == 0.0);
}

TEST_CASE("generation is deterministic for a fixed seed") {
  Rng rng(42);
  auto g = GeneratorNet::create({8, 2, 64, 0.2}, rng);
  Rng s1(7), s2(7);
  Mat a = g.generate(16, s1);
  Mat b = g.generate(16, s2);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("generator pushforward gradients match finite differences") {
  Rng rng(43);
  auto g = GeneratorNet::create({4, 2, 8, 0.2}, rng);
  Rng zr(44);
  Mat z(12, 4);
  for (double& v : z.data) v = zr.normal();
  auto prog = [&](ad::Tape& t, const ParamVector& p) {
    int x = g.build_forward(t, t.input(z), p);
    return t.mean_all(t.square(t.add_const(x, -0.7)));
  };
  check_grad_vs_fd(prog, g.params(), 1e-4);
}

TEST_CASE("discriminator at the constant-half state") {
  Rng rng(45);
  auto d = DiscriminatorNet::create({2, 16, 0.2}, rng);
  zero_all(d.params());
  Mat real(5, 2), fake(5, 2);
  Rng xr(46);
  for (double& v : real.data) v = xr.normal();
  for (double& v : fake.data) v = xr.normal();

  double x0[2] = {0.3, -1.0};
  CHECK(d.prob(x0) == 0.5);
  CHECK(d.log_ratio(x0) == 0.0);

  double loss = nets::disc_loss(d, real, fake);
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-14));

  ad::Tape t;
  int node = nets::build_disc_loss(t, d, d.params(), real, fake);
  CHECK(t.val(node)(0, 0) == doctest::Approx(loss).epsilon(1e-14));
}

TEST_CASE("identical real and fake batches give zero gradient at the half state") {
  Rng rng(47);
  auto d = DiscriminatorNet::create({2, 16, 0.2}, rng);
  zero_view(d.params(), "disc.w3");
  zero_view(d.params(), "disc.b3");
  Mat batch(20, 2);
  Rng xr(48);
  for (double& v : batch.data) v = xr.normal();
  auto prog = [&](ad::Tape& t, const ParamVector& p) {
    return nets::build_disc_loss(t, d, p, batch, batch);
  };
  GradRecord rec = ad::value_and_grad(prog, d.params());
  for (double gr : rec.grad) CHECK(std::fabs(gr) < 1e-14);
}

TEST_CASE("discriminator loss gradients match finite differences") {
  Rng rng(49);
  auto d = DiscriminatorNet::create({2, 8, 0.2}, rng);
  Mat real(10, 2), fake(10, 2);
  Rng xr(50);
  for (double& v : real.data) v = xr.normal();
  for (double& v : fake.data) v = xr.normal(0.5, 1.0);
  auto prog = [&](ad::Tape& t, const ParamVector& p) {
    return nets::build_disc_loss(t, d, p, real, fake);
  };
  check_grad_vs_fd(prog, d.params(), 1e-4);
}

TEST_CASE("log ratio arithmetic and clamping") {
  Rng rng(51);
  auto d = DiscriminatorNet::create({1, 4, 0.2}, rng);
  zero_all(d.params());
  // route the input through one hidden unit per layer so logit(x) = x for x >= 0
  Mat w1 = d.params().get("disc.w1");
  w1(0, 0) = 1;
  d.params().set("disc.w1", w1);
  Mat w2 = d.params().get("disc.w2");
  w2(0, 0) = 1;
  d.params().set("disc.w2", w2);
  Mat w3 = d.params().get("disc.w3");
  w3(0, 0) = 1;
  d.params().set("disc.w3", w3);

  double x_new = std::log(4.0), x_old = 0.0;
  CHECK(d.prob(&x_new) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(d.prob(&x_old) == doctest::Approx(0.5).epsilon(1e-12));
  double accept_ratio = std::exp(d.log_ratio(&x_new) - d.log_ratio(&x_old));
  CHECK(accept_ratio == doctest::Approx(4.0).epsilon(1e-12));

  double huge = 1e6, tiny = -1e6;
  CHECK(d.log_ratio(&huge) == doctest::Approx(std::log((1 - 1e-6) / 1e-6)));
  CHECK(std::isfinite(std::log(d.prob(&huge))));
  CHECK(std::isfinite(std::log1p(-d.prob(&huge))));
  CHECK(std::isfinite(std::log(d.prob(&tiny))));
  CHECK(d.prob(&tiny) >= 1e-6);
}

TEST_CASE("trained discriminator approaches the closed-form optimum") {
  // p = N(0,1) vs q = N(1,1); optimal d(x) = p/(p+q) = logistic(1/2 - x)
  Rng init(52);
  auto d = DiscriminatorNet::create({1, 64, 0.2}, init);
  ad::AdamState opt;
  ad::AdamConfig cfg;
  Rng data(53);
  const std::size_t batch = 256;
  for (int it = 0; it < 1500; ++it) {
    Mat real(batch, 1), fake(batch, 1);
    for (double& v : real.data) v = data.normal();
    for (double& v : fake.data) v = data.normal(1.0, 1.0);
    auto rec = ad::value_and_grad(
        [&](ad::Tape& t, const ParamVector& p) {
          return nets::build_disc_loss(t, d, p, real, fake);
        },
        d.params());
    ad::adam_step(d.params(), rec.grad, opt, cfg);
  }
  double max_err = 0;
  for (double x = -1.0; x <= 2.0 + 1e-12; x += 0.05) {
    double want = 1.0 / (1.0 + std::exp(-(0.5 - x)));
    max_err = std::max(max_err, std::fabs(d.prob(&x) - want));
  }
  CHECK(max_err < 0.05);

  // the implied log-ratio tracks the true log p/q on the same grid
  double mae = 0;
  int cnt = 0;
  for (double x = -1.0; x <= 2.0 + 1e-12; x += 0.05) {
    double truth = gauss_logpdf(x, 0, 1) - gauss_logpdf(x, 1, 1);
    mae += std::fabs(d.log_ratio(&x) - truth);
    ++cnt;
  }
  CHECK(mae / cnt < 0.1);
}

TEST_CASE("pair discriminator symmetry holds to machine precision") {
  Rng rng(54);
  auto pd = PairDiscriminator::create({2, 32, 0.2}, rng);
  for (double& v : pd.params().flat()) v += 0.3 * rng.normal();

  double x[2] = {0.4, -0.2};
  CHECK(pd.forward(x, x) == 0.5);

  for (int i = 0; i < 10000; ++i) {
    double a[2] = {rng.normal(), rng.normal()};
    double b[2] = {rng.normal(), rng.normal()};
    double s = pd.forward(a, b) + pd.forward(b, a);
    CHECK(std::fabs(s - 1.0) <= 1e-15);
  }
}

TEST_CASE("pair discriminator gradients match finite differences") {
  Rng rng(55);
  auto pd = PairDiscriminator::create({1, 6, 0.2}, rng);
  Mat x(8, 1), xp(8, 1);
  Rng xr(56);
  for (double& v : x.data) v = xr.normal();
  for (double& v : xp.data) v = xr.normal(1.0, 1.0);
  auto prog = [&](ad::Tape& t, const ParamVector& p) {
    int dz = pd.build_pair_logit(t, t.input(x), t.input(xp), p);
    return t.mean_all(t.softplus(t.neg(dz)));
  };
  check_grad_vs_fd(prog, pd.params(), 1e-4);
}

TEST_CASE("trained pair discriminator recovers the swap log-ratio") {
  // x ~ p = N(0,1), x' ~ q = N(1,1); optimal log-ratio at (x,x') is x' - x
  Rng init(57);
  auto pd = PairDiscriminator::create({1, 64, 0.2}, init);
  ad::AdamState opt;
  ad::AdamConfig cfg;
  Rng data(58);
  const std::size_t batch = 256;
  for (int it = 0; it < 2000; ++it) {
    Mat x(batch, 1), xp(batch, 1);
    for (double& v : x.data) v = data.normal();
    for (double& v : xp.data) v = data.normal(1.0, 1.0);
    auto rec = ad::value_and_grad(
        [&](ad::Tape& t, const ParamVector& p) {
          int dz = pd.build_pair_logit(t, t.input(x), t.input(xp), p);
          return t.mean_all(t.softplus(t.neg(dz)));
        },
        pd.params());
    ad::adam_step(pd.params(), rec.grad, opt, cfg);
  }
  double mae = 0;
  int cnt = 0;
  for (double a = -0.5; a <= 1.5 + 1e-12; a += 0.25)
    for (double b = -0.5; b <= 1.5 + 1e-12; b += 0.25) {
      mae += std::fabs(pd.log_ratio(&a, &b) - (b - a));
      ++cnt;
    }
  CHECK(mae / cnt < 0.15);
}
