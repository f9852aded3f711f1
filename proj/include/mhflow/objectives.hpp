#pragma once

#include <string>
#include <vector>

#include "mhflow/ad.hpp"
#include "mhflow/flows.hpp"
#include "mhflow/mat.hpp"
#include "mhflow/targets.hpp"

namespace mhflow::objectives {

enum class LossKind { AR, ARLB, VI };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

// Acceptance log-ratio r_k = log p(x'_k) - log q(x'_k) + log q(x_k)
// - log p(x_k) for x' = flow(z) with pathwise gradients; z and xbuf are
// constants on the tape. Returns a K x 1 node.
int build_swap_log_ratio(ad::Tape& t, const targets::TargetDensity& target,
                         const flows::FlowProposal& flow, const ParamVector& pv,
                         const Mat& z, const Mat& xbuf);

// AR:   -(1/K) sum exp(min(0, r_k))
// ARLB: -(1/K) sum r_k
// VI:   (1/K) sum [log q(x'_k) - log p(x'_k)]   (xbuf unused)
int build_flow_loss(ad::Tape& t, LossKind kind,
                    const targets::TargetDensity& target,
                    const flows::FlowProposal& flow, const ParamVector& pv,
                    const Mat& z, const Mat& xbuf);

// Same value without a tape, for metrics and large-sample estimates.
double eval_flow_loss(LossKind kind, const targets::TargetDensity& target,
                      const flows::FlowProposal& flow, const Mat& z,
                      const Mat& xbuf);

// Minibatch surrogate for the log evidence lower bound of a Bayesian
// logistic model: scaled negative log-likelihood plus KL(q || prior)
// minus the cross entropy of q on posterior samples. The likelihood term
// is scaled by N/B so its minibatch estimate is unbiased; an empty
// minibatch list means the full dataset.
int build_bayes_objective(ad::Tape& t, const flows::FlowProposal& flow,
                          const ParamVector& pv,
                          const targets::LogisticDataset& data,
                          const std::vector<std::size_t>& minibatch,
                          const Mat& z, const Mat& posterior_samples,
                          bool flip_bias_sign = false);

}  // namespace mhflow::objectives
