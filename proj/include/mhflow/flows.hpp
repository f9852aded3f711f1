#pragma once

#include <cstdint>
#include <vector>

#include "mhflow/ad.hpp"
#include "mhflow/mat.hpp"
#include "mhflow/params.hpp"
#include "mhflow/rng.hpp"

namespace mhflow::flows {

struct FlowConfig {
  std::size_t dim = 2;
  std::size_t n_layers = 4;
  std::size_t hidden = 512;
  double s_clamp = 5.0;
};

// Stack of affine coupling layers over a standard-normal base.
// Layers alternate which half of the coordinates passes through
// unchanged; the other half is scaled and shifted by two-layer tanh
// MLPs of the pass-through half. Exact densities both ways.
//
// Plain (tape-free) evaluation serves the samplers; build_* mirrors the
// same computation onto a tape for gradients. The two paths are
// cross-checked in tests.
class FlowProposal {
 public:
  static FlowProposal create(const FlowConfig& cfg, Rng& rng);

  const FlowConfig& config() const { return cfg_; }
  ParamVector& params() { return params_; }
  const ParamVector& params() const { return params_; }

  // z -> x through all layers; logdet accumulates the forward scales.
  void forward(const double* z, double* x, double* logdet) const;
  void inverse(const double* x, double* z, double* logdet) const;
  Mat forward_batch(const Mat& z, std::vector<double>* logdet = nullptr) const;
  Mat inverse_batch(const Mat& x, std::vector<double>* logdet = nullptr) const;

  double log_prob(const double* x) const;
  Mat log_prob_batch(const Mat& x) const;  // B x 1

  // Draws n points; logq[i] = log_prob(x_i) computed from the base draw.
  Mat sample(std::size_t n, Rng& rng, std::vector<double>* logq = nullptr) const;

  // Tape builders. Parameters come from pv (usually this->params(), but
  // finite-difference validation passes perturbed copies). Return the
  // output node; *logdet receives a B x 1 node.
  int build_forward(ad::Tape& t, int z, const ParamVector& pv,
                    int* logdet) const;
  int build_inverse(ad::Tape& t, int x, const ParamVector& pv,
                    int* logdet) const;
  int build_log_prob(ad::Tape& t, int x, const ParamVector& pv) const;

  // log N(z | 0, I) summed per row, as a tape node.
  static int base_logp_node(ad::Tape& t, int z, std::size_t dim);
  static double base_logp(const double* z, std::size_t dim);

 private:
  struct LayerShape {
    std::vector<int> pass, trans;
  };

  std::string view(std::size_t layer, const char* net, const char* leaf) const;
  // Runs one coupling net (s or t): two affine layers with tanh between.
  void run_net(std::size_t layer, const char* net, const double* in,
               double* out, const ParamVector& pv) const;
  int build_net(ad::Tape& t, std::size_t layer, const char* net, int in,
                const ParamVector& pv) const;

  FlowConfig cfg_;
  ParamVector params_;
  std::vector<LayerShape> shapes_;
};

}  // namespace mhflow::flows
