#include "mhflow/nets.hpp"

#include <algorithm>
#include <cmath>

#include "mhflow/check.hpp"
#include "mhflow/kernels.hpp"

namespace mhflow::nets {

namespace {

std::string leaf(const MlpSpec& spec, const char* kind, std::size_t k) {
  return spec.prefix + "." + kind + std::to_string(k);
}

double leaky(double v, double slope) { return v >= 0 ? v : slope * v; }

double stable_logistic(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

constexpr double kLogitClamp = 13.815509557963773;  // log((1-1e-6)/1e-6)

}  // namespace

void add_mlp_params(ParamVector& pv, const MlpSpec& spec, Rng& rng) {
  check(spec.widths.size() >= 2, "mlp needs at least one layer");
  for (std::size_t k = 1; k < spec.widths.size(); ++k) {
    std::size_t in = spec.widths[k - 1], out = spec.widths[k];
    Mat w(out, in), b(1, out);
    double bound = 1.0 / std::sqrt(double(in));
    for (double& v : w.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    for (double& v : b.data) v = (2.0 * rng.uniform() - 1.0) * bound;
    pv.add(leaf(spec, "w", k), out, in);
    pv.set(leaf(spec, "w", k), w);
    pv.add(leaf(spec, "b", k), 1, out);
    pv.set(leaf(spec, "b", k), b);
  }
}

Mat mlp_forward(const MlpSpec& spec, const ParamVector& pv, const Mat& x) {
  check(x.cols == spec.widths.front(),
        "mlp input width mismatch: got " + std::to_string(x.cols));
  Mat cur = x;
  for (std::size_t k = 1; k < spec.widths.size(); ++k) {
    Mat w = pv.get(leaf(spec, "w", k));
    Mat b = pv.get(leaf(spec, "b", k));
    Mat next(cur.rows, w.rows);
    for (std::size_t i = 0; i < cur.rows; ++i) {
      kern::matvec(w.data.data(), cur.row_ptr(i), next.row_ptr(i), w.rows,
                   w.cols);
      for (std::size_t j = 0; j < w.rows; ++j) {
        next(i, j) += b(0, j);
        if (k + 1 < spec.widths.size())
          next(i, j) = leaky(next(i, j), spec.leak);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

int build_mlp(ad::Tape& t, const MlpSpec& spec, int x, const ParamVector& pv) {
  int cur = x;
  for (std::size_t k = 1; k < spec.widths.size(); ++k) {
    cur = t.affine(cur, leaf(spec, "w", k), leaf(spec, "b", k), pv);
    if (k + 1 < spec.widths.size()) cur = t.leaky_relu(cur, spec.leak);
  }
  return cur;
}

GeneratorNet GeneratorNet::create(const GeneratorConfig& cfg, Rng& rng) {
  GeneratorNet g;
  g.cfg_ = cfg;
  g.spec_ = {"gen", {cfg.latent_dim, cfg.hidden, cfg.hidden, cfg.out_dim},
             cfg.leak};
  add_mlp_params(g.params_, g.spec_, rng);
  return g;
}

Mat GeneratorNet::forward(const Mat& z) const {
  return mlp_forward(spec_, params_, z);
}

Mat GeneratorNet::generate(std::size_t n, Rng& rng, Mat* z_out) const {
  Mat z(n, cfg_.latent_dim);
  for (double& v : z.data) v = rng.normal();
  Mat x = forward(z);
  if (z_out) *z_out = std::move(z);
  return x;
}

int GeneratorNet::build_forward(ad::Tape& t, int z,
                                const ParamVector& pv) const {
  return build_mlp(t, spec_, z, pv);
}

DiscriminatorNet DiscriminatorNet::create(const DiscriminatorConfig& cfg,
                                          Rng& rng) {
  DiscriminatorNet d;
  d.cfg_ = cfg;
  d.spec_ = {"disc", {cfg.in_dim, cfg.hidden, cfg.hidden, 1}, cfg.leak};
  add_mlp_params(d.params_, d.spec_, rng);
  return d;
}

double DiscriminatorNet::logit(const double* x) const {
  Mat row(1, cfg_.in_dim);
  std::copy(x, x + cfg_.in_dim, row.data.begin());
  return mlp_forward(spec_, params_, row)(0, 0);
}

Mat DiscriminatorNet::logit_batch(const Mat& x) const {
  return mlp_forward(spec_, params_, x);
}

double DiscriminatorNet::prob(const double* x) const {
  return std::clamp(stable_logistic(logit(x)), kClampEps, 1.0 - kClampEps);
}

double DiscriminatorNet::log_ratio(const double* x) const {
  return std::clamp(logit(x), -kLogitClamp, kLogitClamp);
}

int DiscriminatorNet::build_logit(ad::Tape& t, int x,
                                  const ParamVector& pv) const {
  return build_mlp(t, spec_, x, pv);
}

double disc_loss(const DiscriminatorNet& d, const Mat& real, const Mat& fake) {
  Mat zr = d.logit_batch(real);
  Mat zf = d.logit_batch(fake);
  auto softplus = [](double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
  };
  double acc = 0;
  for (double z : zr.data) acc += softplus(-z) / double(zr.rows);
  for (double z : zf.data) acc += softplus(z) / double(zf.rows);
  return acc;
}

int build_disc_loss(ad::Tape& t, const DiscriminatorNet& d,
                    const ParamVector& pv, const Mat& real, const Mat& fake) {
  int zr = d.build_logit(t, t.input(real), pv);
  int zf = d.build_logit(t, t.input(fake), pv);
  return t.add(t.mean_all(t.softplus(t.neg(zr))),
               t.mean_all(t.softplus(zf)));
}

PairDiscriminator PairDiscriminator::create(const PairDiscriminatorConfig& cfg,
                                            Rng& rng) {
  PairDiscriminator pd;
  pd.cfg_ = cfg;
  pd.spec_ = {"pair", {2 * cfg.dim, cfg.hidden, cfg.hidden, 1}, cfg.leak};
  add_mlp_params(pd.params_, pd.spec_, rng);
  return pd;
}

double PairDiscriminator::trunk(const double* x, const double* xp) const {
  Mat row(1, 2 * cfg_.dim);
  std::copy(x, x + cfg_.dim, row.data.begin());
  std::copy(xp, xp + cfg_.dim, row.data.begin() + std::ptrdiff_t(cfg_.dim));
  return mlp_forward(spec_, params_, row)(0, 0);
}

double PairDiscriminator::forward(const double* x, const double* xp) const {
  return stable_logistic(trunk(x, xp) - trunk(xp, x));
}

double PairDiscriminator::log_ratio(const double* x, const double* xp) const {
  return std::clamp(trunk(x, xp) - trunk(xp, x), -kLogitClamp, kLogitClamp);
}

int PairDiscriminator::build_pair_logit(ad::Tape& t, int x, int xp,
                                        const ParamVector& pv) const {
  int fwd = build_mlp(t, spec_, t.concat_cols(x, xp), pv);
  int rev = build_mlp(t, spec_, t.concat_cols(xp, x), pv);
  return t.sub(fwd, rev);
}

}  // namespace mhflow::nets
