#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mhflow/ad.hpp"
#include "mhflow/mat.hpp"
#include "mhflow/params.hpp"
#include "mhflow/rng.hpp"

namespace mhflow::nets {

// Fully connected stack, leaky-relu between layers, linear last layer.
// Parameter views are named <prefix>.w<k> / <prefix>.b<k>, k starting at 1.
struct MlpSpec {
  std::string prefix;
  std::vector<std::size_t> widths;
  double leak = 0.2;
};

void add_mlp_params(ParamVector& pv, const MlpSpec& spec, Rng& rng);
Mat mlp_forward(const MlpSpec& spec, const ParamVector& pv, const Mat& x);
int build_mlp(ad::Tape& t, const MlpSpec& spec, int x, const ParamVector& pv);

struct GeneratorConfig {
  std::size_t latent_dim = 8;
  std::size_t out_dim = 2;
  std::size_t hidden = 64;
  double leak = 0.2;
};

// Deterministic pushforward of N(0, I_latent); samples only, no density.
class GeneratorNet {
 public:
  static GeneratorNet create(const GeneratorConfig& cfg, Rng& rng);

  const GeneratorConfig& config() const { return cfg_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  Mat forward(const Mat& z) const;
  Mat generate(std::size_t n, Rng& rng, Mat* z_out = nullptr) const;
  int build_forward(ad::Tape& t, int z, const ParamVector& pv) const;

 private:
  GeneratorConfig cfg_;
  MlpSpec spec_;
  ParamVector params_;
};

struct DiscriminatorConfig {
  std::size_t in_dim = 2;
  std::size_t hidden = 64;
  double leak = 0.2;
};

class DiscriminatorNet {
 public:
  static constexpr double kClampEps = 1e-6;

  static DiscriminatorNet create(const DiscriminatorConfig& cfg, Rng& rng);

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  double logit(const double* x) const;
  Mat logit_batch(const Mat& x) const;
  // classification probability, clamped into [eps, 1-eps]
  double prob(const double* x) const;
  // log(d/(1-d)) with the same clamp, i.e. the density log-ratio estimate
  double log_ratio(const double* x) const;
  int build_logit(ad::Tape& t, int x, const ParamVector& pv) const;

 private:
  DiscriminatorConfig cfg_;
  MlpSpec spec_;
  ParamVector params_;
};

// binary cross-entropy with real labeled 1 and fake labeled 0
double disc_loss(const DiscriminatorNet& d, const Mat& real, const Mat& fake);
int build_disc_loss(ad::Tape& t, const DiscriminatorNet& d,
                    const ParamVector& pv, const Mat& real, const Mat& fake);

struct PairDiscriminatorConfig {
  std::size_t dim = 2;
  std::size_t hidden = 64;
  double leak = 0.2;
};

// Shared trunk applied to both argument orders; the softmax over the two
// trunk outputs makes D(x,x') + D(x',x) = 1 by construction.
class PairDiscriminator {
 public:
  static PairDiscriminator create(const PairDiscriminatorConfig& cfg, Rng& rng);

  const PairDiscriminatorConfig& config() const { return cfg_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  double trunk(const double* x, const double* xp) const;
  double forward(const double* x, const double* xp) const;
  // trunk(x,x') - trunk(x',x), clamped; estimates log p(x)q(x')/(p(x')q(x))
  double log_ratio(const double* x, const double* xp) const;
  int build_pair_logit(ad::Tape& t, int x, int xp, const ParamVector& pv) const;

 private:
  PairDiscriminatorConfig cfg_;
  MlpSpec spec_;
  ParamVector params_;
};

}  // namespace mhflow::nets
