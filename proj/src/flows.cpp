#include "mhflow/flows.hpp"

#include <cmath>
#include <numbers>

#include "mhflow/check.hpp"
#include "mhflow/kernels.hpp"

namespace mhflow::flows {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double soft_clamp(double v, double c) { return c * std::tanh(v / c); }
}  // namespace

std::string FlowProposal::view(std::size_t layer, const char* net,
                               const char* leaf) const {
  return "flow.l" + std::to_string(layer) + "." + net + "." + leaf;
}

FlowProposal FlowProposal::create(const FlowConfig& cfg, Rng& rng) {
  check(cfg.dim >= 2, "flow needs at least two dimensions");
  check(cfg.n_layers >= 1, "flow needs at least one coupling layer");
  check(cfg.s_clamp > 0, "scale clamp must be positive");
  FlowProposal f;
  f.cfg_ = cfg;
  const std::size_t d = cfg.dim / 2;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    LayerShape shape;
    for (std::size_t j = 0; j < cfg.dim; ++j) {
      bool first_half = j < d;
      bool passes = (l % 2 == 0) ? first_half : !first_half;
      (passes ? shape.pass : shape.trans).push_back(int(j));
    }
    f.shapes_.push_back(shape);
    const std::size_t in = shape.pass.size();
    const std::size_t out = shape.trans.size();
    for (const char* net : {"s", "t"}) {
      f.params_.add(f.view(l, net, "w1"), cfg.hidden, in);
      f.params_.add(f.view(l, net, "b1"), 1, cfg.hidden);
      f.params_.add(f.view(l, net, "w2"), out, cfg.hidden);
      f.params_.add(f.view(l, net, "b2"), 1, out);
      const double bound = 1.0 / std::sqrt(double(in));
      double* w1 = f.params_.data(f.view(l, net, "w1"));
      for (std::size_t i = 0; i < cfg.hidden * in; ++i)
        w1[i] = rng.uniform(-bound, bound);
      double* b1 = f.params_.data(f.view(l, net, "b1"));
      for (std::size_t i = 0; i < cfg.hidden; ++i)
        b1[i] = rng.uniform(-bound, bound);
      // w2 and b2 stay zero: the flow starts as the identity map.
    }
  }
  return f;
}

void FlowProposal::run_net(std::size_t layer, const char* net,
                           const double* in, double* out,
                           const ParamVector& pv) const {
  const std::size_t h = cfg_.hidden;
  const std::size_t nin = shapes_[layer].pass.size();
  const std::size_t nout = shapes_[layer].trans.size();
  std::vector<double> hidden(h);
  kern::matvec(pv.data(view(layer, net, "w1")), in, hidden.data(), h, nin);
  const double* b1 = pv.data(view(layer, net, "b1"));
  for (std::size_t i = 0; i < h; ++i) hidden[i] = std::tanh(hidden[i] + b1[i]);
  kern::matvec(pv.data(view(layer, net, "w2")), hidden.data(), out, nout, h);
  const double* b2 = pv.data(view(layer, net, "b2"));
  for (std::size_t i = 0; i < nout; ++i) out[i] += b2[i];
}

void FlowProposal::forward(const double* z, double* x, double* logdet) const {
  const std::size_t dim = cfg_.dim;
  std::vector<double> cur(z, z + dim), pass, s, t;
  double ld = 0;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const LayerShape& sh = shapes_[l];
    pass.resize(sh.pass.size());
    for (std::size_t i = 0; i < sh.pass.size(); ++i)
      pass[i] = cur[std::size_t(sh.pass[i])];
    s.resize(sh.trans.size());
    t.resize(sh.trans.size());
    run_net(l, "s", pass.data(), s.data(), params_);
    run_net(l, "t", pass.data(), t.data(), params_);
    for (std::size_t i = 0; i < sh.trans.size(); ++i) {
      double sc = soft_clamp(s[i], cfg_.s_clamp);
      double& v = cur[std::size_t(sh.trans[i])];
      v = v * std::exp(sc) + t[i];
      check(std::isfinite(v),
            "non-finite value in coupling layer " + std::to_string(l));
      ld += sc;
    }
  }
  for (std::size_t i = 0; i < dim; ++i) x[i] = cur[i];
  if (logdet) *logdet = ld;
}

void FlowProposal::inverse(const double* x, double* z, double* logdet) const {
  const std::size_t dim = cfg_.dim;
  std::vector<double> cur(x, x + dim), pass, s, t;
  double ld = 0;
  for (std::size_t li = shapes_.size(); li-- > 0;) {
    const LayerShape& sh = shapes_[li];
    pass.resize(sh.pass.size());
    for (std::size_t i = 0; i < sh.pass.size(); ++i)
      pass[i] = cur[std::size_t(sh.pass[i])];
    s.resize(sh.trans.size());
    t.resize(sh.trans.size());
    run_net(li, "s", pass.data(), s.data(), params_);
    run_net(li, "t", pass.data(), t.data(), params_);
    for (std::size_t i = 0; i < sh.trans.size(); ++i) {
      double sc = soft_clamp(s[i], cfg_.s_clamp);
      double& v = cur[std::size_t(sh.trans[i])];
      v = (v - t[i]) * std::exp(-sc);
      check(std::isfinite(v),
            "non-finite value in coupling layer " + std::to_string(li));
      ld -= sc;
    }
  }
  for (std::size_t i = 0; i < dim; ++i) z[i] = cur[i];
  if (logdet) *logdet = ld;
}

Mat FlowProposal::forward_batch(const Mat& z, std::vector<double>* logdet) const {
  check(z.cols == cfg_.dim, "forward: batch has " + std::to_string(z.cols) +
                                " columns, flow dimension is " +
                                std::to_string(cfg_.dim));
  Mat x(z.rows, z.cols);
  if (logdet) logdet->resize(z.rows);
  for (std::size_t i = 0; i < z.rows; ++i) {
    double ld;
    forward(z.row_ptr(i), x.row_ptr(i), &ld);
    if (logdet) (*logdet)[i] = ld;
  }
  return x;
}

Mat FlowProposal::inverse_batch(const Mat& x, std::vector<double>* logdet) const {
  check(x.cols == cfg_.dim, "inverse: batch has " + std::to_string(x.cols) +
                                " columns, flow dimension is " +
                                std::to_string(cfg_.dim));
  Mat z(x.rows, x.cols);
  if (logdet) logdet->resize(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double ld;
    inverse(x.row_ptr(i), z.row_ptr(i), &ld);
    if (logdet) (*logdet)[i] = ld;
  }
  return z;
}

double FlowProposal::base_logp(const double* z, std::size_t dim) {
  double quad = 0;
  for (std::size_t i = 0; i < dim; ++i) quad += z[i] * z[i];
  return -0.5 * quad - double(dim) * kHalfLog2Pi;
}

int FlowProposal::base_logp_node(ad::Tape& t, int z, std::size_t dim) {
  return t.add_const(t.scale(t.sum_cols(t.square(z)), -0.5),
                     -double(dim) * kHalfLog2Pi);
}

double FlowProposal::log_prob(const double* x) const {
  std::vector<double> z(cfg_.dim);
  double ld;
  inverse(x, z.data(), &ld);
  return base_logp(z.data(), cfg_.dim) + ld;
}

Mat FlowProposal::log_prob_batch(const Mat& x) const {
  Mat out(x.rows, 1);
  for (std::size_t i = 0; i < x.rows; ++i) out(i, 0) = log_prob(x.row_ptr(i));
  return out;
}

Mat FlowProposal::sample(std::size_t n, Rng& rng,
                         std::vector<double>* logq) const {
  Mat z(n, cfg_.dim);
  for (double& e : z.data) e = rng.normal();
  std::vector<double> logdet;
  Mat x = forward_batch(z, &logdet);
  if (logq) {
    logq->resize(n);
    for (std::size_t i = 0; i < n; ++i)
      (*logq)[i] = base_logp(z.row_ptr(i), cfg_.dim) - logdet[i];
  }
  return x;
}

int FlowProposal::build_net(ad::Tape& t, std::size_t layer, const char* net,
                            int in, const ParamVector& pv) const {
  int h = t.tanh_(t.affine(in, view(layer, net, "w1"), view(layer, net, "b1"), pv));
  return t.affine(h, view(layer, net, "w2"), view(layer, net, "b2"), pv);
}

int FlowProposal::build_forward(ad::Tape& t, int z, const ParamVector& pv,
                                int* logdet) const {
  int cur = z;
  int ld = -1;
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const LayerShape& sh = shapes_[l];
    t.set_context("coupling layer " + std::to_string(l) + " forward");
    int pass = t.gather_cols(cur, sh.pass);
    int trans = t.gather_cols(cur, sh.trans);
    int s = t.soft_clamp(build_net(t, l, "s", pass, pv), cfg_.s_clamp);
    int tt = build_net(t, l, "t", pass, pv);
    int new_trans = t.add(t.mul(trans, t.exp_(s)), tt);
    std::vector<int> inv_perm(cfg_.dim);
    for (std::size_t i = 0; i < sh.pass.size(); ++i)
      inv_perm[std::size_t(sh.pass[i])] = int(i);
    for (std::size_t i = 0; i < sh.trans.size(); ++i)
      inv_perm[std::size_t(sh.trans[i])] = int(sh.pass.size() + i);
    cur = t.gather_cols(t.concat_cols(pass, new_trans), inv_perm);
    int lsum = t.sum_cols(s);
    ld = ld < 0 ? lsum : t.add(ld, lsum);
  }
  t.set_context("");
  if (logdet) *logdet = ld;
  return cur;
}

int FlowProposal::build_inverse(ad::Tape& t, int x, const ParamVector& pv,
                                int* logdet) const {
  int cur = x;
  int ld = -1;
  for (std::size_t li = shapes_.size(); li-- > 0;) {
    const LayerShape& sh = shapes_[li];
    t.set_context("coupling layer " + std::to_string(li) + " inverse");
    int pass = t.gather_cols(cur, sh.pass);
    int trans = t.gather_cols(cur, sh.trans);
    int s = t.soft_clamp(build_net(t, li, "s", pass, pv), cfg_.s_clamp);
    int tt = build_net(t, li, "t", pass, pv);
    int new_trans = t.mul(t.sub(trans, tt), t.exp_(t.neg(s)));
    std::vector<int> inv_perm(cfg_.dim);
    for (std::size_t i = 0; i < sh.pass.size(); ++i)
      inv_perm[std::size_t(sh.pass[i])] = int(i);
    for (std::size_t i = 0; i < sh.trans.size(); ++i)
      inv_perm[std::size_t(sh.trans[i])] = int(sh.pass.size() + i);
    cur = t.gather_cols(t.concat_cols(pass, new_trans), inv_perm);
    int lsum = t.neg(t.sum_cols(s));
    ld = ld < 0 ? lsum : t.add(ld, lsum);
  }
  t.set_context("");
  if (logdet) *logdet = ld;
  return cur;
}

int FlowProposal::build_log_prob(ad::Tape& t, int x, const ParamVector& pv) const {
  int ld = -1;
  int z = build_inverse(t, x, pv, &ld);
  return t.add(base_logp_node(t, z, cfg_.dim), ld);
}

}  // namespace mhflow::flows
