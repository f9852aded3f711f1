#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mhflow/flows.hpp"
#include "mhflow/mat.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"

namespace mhflow::mh {

// A proposal the samplers can draw from and evaluate pointwise. When
// draw_with_logq is set it is used in the hot path so proposals whose
// density falls out of the draw (flows) pay for one pass, not two.
struct ExplicitProposal {
  std::size_t dim = 0;
  std::function<void(Rng&, double*)> draw;
  std::function<double(const double*)> logq;
  std::function<double(Rng&, double*)> draw_with_logq;

  static ExplicitProposal from_flow(const flows::FlowProposal& f);
  static ExplicitProposal gaussian(std::vector<double> mu,
                                   std::vector<double> sd);
};

struct ChainRecord {
  Mat states;  // one row per recorded step, burn-in excluded
  std::vector<std::uint8_t> accepted;
  std::vector<double> log_ratio;
  double empirical_ar = 0;
  double wall_seconds = 0;
  std::size_t nonfinite_rejects = 0;
};

class Sampler {
 public:
  virtual ~Sampler() = default;
  virtual std::size_t dim() const = 0;
  // acceptance log-ratio for a hypothetical move x -> xp, no state change
  virtual double log_accept_ratio(const double* x, const double* xp) const = 0;
  virtual void init_state(Rng& rng) = 0;
  virtual void set_state(const double* x) = 0;
  virtual bool step(Rng& rng, double* log_ratio_out = nullptr) = 0;
  const std::vector<double>& state() const { return x_; }
  std::size_t nonfinite_rejects() const { return nonfinite_; }

 protected:
  bool accept_decision(double log_ratio, Rng& rng) const;
  std::vector<double> x_;
  std::size_t nonfinite_ = 0;
};

// Independent-proposal MH; caches log p(x) - log q(x) of the current state.
class IndependentSampler : public Sampler {
 public:
  IndependentSampler(const targets::TargetDensity& target,
                     ExplicitProposal proposal);
  std::size_t dim() const override { return q_.dim; }
  double log_accept_ratio(const double* x, const double* xp) const override;
  void init_state(Rng& rng) override;
  void set_state(const double* x) override;
  bool step(Rng& rng, double* log_ratio_out = nullptr) override;

 private:
  const targets::TargetDensity* target_;
  ExplicitProposal q_;
  double cur_w_ = 0;
};

// Symmetric Gaussian random-walk MH; caches log p(x).
class RandomWalkSampler : public Sampler {
 public:
  RandomWalkSampler(const targets::TargetDensity& target,
                    std::vector<double> sigma);
  std::size_t dim() const override { return sigma_.size(); }
  double log_accept_ratio(const double* x, const double* xp) const override;
  void init_state(Rng& rng) override;
  void set_state(const double* x) override;
  bool step(Rng& rng, double* log_ratio_out = nullptr) override;

 private:
  const targets::TargetDensity* target_;
  std::vector<double> sigma_;
  double cur_logp_ = 0;
};

// lambda * q(x') + (1 - lambda) * N(x' | x, sigma^2); the acceptance ratio
// uses the full mixture density in both directions.
class MixtureSampler : public Sampler {
 public:
  MixtureSampler(const targets::TargetDensity& target,
                 ExplicitProposal proposal, double lambda,
                 std::vector<double> sigma);
  std::size_t dim() const override { return sigma_.size(); }
  double log_accept_ratio(const double* x, const double* xp) const override;
  void init_state(Rng& rng) override;
  void set_state(const double* x) override;
  bool step(Rng& rng, double* log_ratio_out = nullptr) override;

 private:
  double mix_logq(const double* to, const double* from) const;
  const targets::TargetDensity* target_;
  ExplicitProposal q_;
  double lambda_;
  std::vector<double> sigma_;
  double cur_logp_ = 0;
  double cur_logq_ = 0;
};

// Independent MH where log p/q is supplied directly (a discriminator
// logit); no target density evaluations at all.
class RatioImhSampler : public Sampler {
 public:
  RatioImhSampler(std::size_t dim, std::function<void(Rng&, double*)> draw,
                  std::function<double(const double*)> log_ratio_fn);
  std::size_t dim() const override { return dim_; }
  double log_accept_ratio(const double* x, const double* xp) const override;
  void init_state(Rng& rng) override;
  void set_state(const double* x) override;
  bool step(Rng& rng, double* log_ratio_out = nullptr) override;

 private:
  std::size_t dim_;
  std::function<void(Rng&, double*)> draw_;
  std::function<double(const double*)> ratio_;
  double cur_r_ = 0;
};

// Runs burn_in discarded steps then records steps rows. init == nullptr
// draws the first state from the sampler's own proposal.
ChainRecord run_chain(Sampler& sampler, std::size_t steps, std::size_t burn_in,
                      const double* init, Rng& rng);

void write_chain_csv(const ChainRecord& rec, const std::string& path);

struct RejectionResult {
  Mat samples;
  double acceptance_fraction = 0;
  std::size_t envelope_violations = 0;  // draws with p/(Mq) > 1
};

RejectionResult rejection_sample(const targets::TargetDensity& target,
                                 const ExplicitProposal& proposal, double m,
                                 std::size_t n_proposals, Rng& rng,
                                 bool check_envelope = true);

}  // namespace mhflow::mh
