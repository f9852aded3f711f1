#include "mhflow/objectives.hpp"

#include <cmath>

#include "mhflow/check.hpp"

namespace mhflow::objectives {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

// log q nodes for proposal draws x' = flow(z): base density of the noise
// minus the forward log-determinant, all with pathwise parameter grads
int build_proposal_terms(ad::Tape& t, const flows::FlowProposal& flow,
                         const ParamVector& pv, const Mat& z, int* x_out) {
  int zn = t.input(z);
  int ld = -1;
  int x = flow.build_forward(t, zn, pv, &ld);
  if (x_out) *x_out = x;
  return t.sub(flows::FlowProposal::base_logp_node(t, zn, z.cols), ld);
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::AR: return "ar";
    case LossKind::ARLB: return "arlb";
    case LossKind::VI: return "vi";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "ar") return LossKind::AR;
  if (s == "arlb") return LossKind::ARLB;
  if (s == "vi") return LossKind::VI;
  throw Error("unknown loss kind: " + s + " (expected ar, arlb or vi)");
}

int build_swap_log_ratio(ad::Tape& t, const targets::TargetDensity& target,
                         const flows::FlowProposal& flow, const ParamVector& pv,
                         const Mat& z, const Mat& xbuf) {
  check(z.rows == xbuf.rows, "proposal and buffer batch sizes differ");
  check(z.cols == xbuf.cols && z.cols == target.dim,
        "batch dimension does not match the target");
  int x_new = -1;
  int lq_new = build_proposal_terms(t, flow, pv, z, &x_new);
  int lp_new = target.tape_logp(t, x_new);
  int xb = t.input(xbuf);
  int lq_old = flow.build_log_prob(t, xb, pv);
  int lp_old = target.tape_logp(t, xb);
  return t.add(t.sub(lp_new, lq_new), t.sub(lq_old, lp_old));
}

int build_flow_loss(ad::Tape& t, LossKind kind,
                    const targets::TargetDensity& target,
                    const flows::FlowProposal& flow, const ParamVector& pv,
                    const Mat& z, const Mat& xbuf) {
  if (kind == LossKind::VI) {
    int x_new = -1;
    int lq_new = build_proposal_terms(t, flow, pv, z, &x_new);
    int lp_new = target.tape_logp(t, x_new);
    return t.mean_all(t.sub(lq_new, lp_new));
  }
  int r = build_swap_log_ratio(t, target, flow, pv, z, xbuf);
  if (kind == LossKind::ARLB) return t.neg(t.mean_all(r));
  return t.neg(t.mean_all(t.exp_(t.min0(r))));
}

double eval_flow_loss(LossKind kind, const targets::TargetDensity& target,
                      const flows::FlowProposal& flow, const Mat& z,
                      const Mat& xbuf) {
  std::vector<double> ld;
  Mat x_new = flow.forward_batch(z, &ld);
  double acc = 0;
  const std::size_t k = z.rows;
  if (kind == LossKind::VI) {
    for (std::size_t i = 0; i < k; ++i) {
      double lq = flows::FlowProposal::base_logp(z.row_ptr(i), z.cols) - ld[i];
      acc += lq - target.log_unnorm(x_new.row_ptr(i));
    }
    return acc / double(k);
  }
  check(xbuf.rows == k && xbuf.cols == z.cols,
        "proposal and buffer batch sizes differ");
  Mat lq_old = flow.log_prob_batch(xbuf);
  for (std::size_t i = 0; i < k; ++i) {
    double lq_new =
        flows::FlowProposal::base_logp(z.row_ptr(i), z.cols) - ld[i];
    double r = target.log_unnorm(x_new.row_ptr(i)) - lq_new + lq_old(i, 0) -
               target.log_unnorm(xbuf.row_ptr(i));
    acc += kind == LossKind::ARLB ? -r : -std::exp(std::min(0.0, r));
  }
  return acc / double(k);
}

int build_bayes_objective(ad::Tape& t, const flows::FlowProposal& flow,
                          const ParamVector& pv,
                          const targets::LogisticDataset& data,
                          const std::vector<std::size_t>& minibatch,
                          const Mat& z, const Mat& posterior_samples,
                          bool flip_bias_sign) {
  const std::size_t d = data.d();
  const std::size_t n = data.n();
  check(z.cols == d + 1, "noise batch must have one column per parameter");
  check(posterior_samples.cols == d + 1,
        "posterior samples must have one column per parameter");

  int theta = -1;
  int lq_theta = build_proposal_terms(t, flow, pv, z, &theta);

  // scaled negative log-likelihood on the minibatch
  std::vector<std::size_t> rows = minibatch;
  if (rows.empty())
    for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
  int neg_ll = -1;
  if (!rows.empty()) {
    Mat xs(rows.size(), d);
    Mat y_row(1, rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      check(rows[i] < n, "minibatch index out of range");
      for (std::size_t c = 0; c < d; ++c)
        xs(i, c) = data.covariates(rows[i], c);
      y_row(0, i) = double(data.labels[rows[i]]);
    }
    std::vector<int> widx(d);
    for (std::size_t c = 0; c < d; ++c) widx[c] = int(c);
    int w = t.gather_cols(theta, widx);
    int b = t.gather_cols(theta, {int(d)});
    int xw = t.linear_const(w, xs);
    int lin = flip_bias_sign ? t.neg(t.add_col_broadcast(xw, b))
                             : t.add_col_broadcast(t.neg(xw), b);
    int ll =
        t.sum_cols(t.sub(t.mul_row_const(lin, y_row), t.softplus(lin)));
    neg_ll = t.mean_all(t.scale(ll, -double(n) / double(rows.size())));
  }

  // KL(q || prior) on the reparameterized draws, standard normal prior
  int log_prior =
      t.add_const(t.scale(t.sum_cols(t.square(theta)), -0.5),
                  -double(d + 1) * kHalfLog2Pi);
  int kl = t.mean_all(t.sub(lq_theta, log_prior));

  // cross entropy of q on externally supplied posterior samples
  int lq_post = flow.build_log_prob(t, t.input(posterior_samples), pv);
  int cross = t.neg(t.mean_all(lq_post));

  int obj = t.add(kl, cross);
  if (neg_ll >= 0) obj = t.add(neg_ll, obj);
  return obj;
}

}  // namespace mhflow::objectives
