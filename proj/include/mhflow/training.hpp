#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mhflow/ad.hpp"
#include "mhflow/flows.hpp"
#include "mhflow/mat.hpp"
#include "mhflow/nets.hpp"
#include "mhflow/objectives.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"

namespace mhflow::train {

// FIFO ring of chain states feeding the density-based loss. Pushes are
// tagged with the iteration whose proposal generated them, and a run of
// more than eight identical consecutive states is dropped so a stalled
// chain cannot flood the buffer with one point.
class SampleBuffer {
 public:
  SampleBuffer(std::size_t dim, std::size_t capacity = 10000);

  bool push(const double* x, std::int64_t tag);
  // k rows drawn uniformly without replacement; requires fill >= k
  Mat sample(std::size_t k, Rng& rng,
             std::vector<std::int64_t>* tags = nullptr) const;

  std::size_t dim() const { return dim_; }
  std::size_t capacity() const { return cap_; }
  std::size_t fill() const { return fill_; }
  const double* row(std::size_t i) const { return rows_.data() + i * dim_; }
  std::int64_t tag(std::size_t i) const { return tags_[i]; }

  void serialize(std::vector<double>& out) const;
  std::size_t deserialize(const double* data, std::size_t len);

 private:
  std::size_t dim_, cap_;
  std::size_t fill_ = 0, head_ = 0;
  std::vector<double> rows_;
  std::vector<std::int64_t> tags_;
  std::vector<double> last_;
  std::size_t consecutive_ = 0;
};

struct TrainConfig {
  objectives::LossKind loss = objectives::LossKind::ARLB;
  std::size_t iterations = 1000;
  std::size_t batch = 64;           // K, per-update sample count
  double lr = 1e-3;
  std::size_t buffer_refresh = 64;  // chain steps per iteration
  std::size_t burn_in = 100;
  std::uint64_t seed = 1;
  std::size_t k_d = 5;              // discriminator steps per iteration
  std::size_t buffer_capacity = 10000;
  std::size_t eval_every = 50;
  std::size_t checkpoint_every = 0;  // 0 = final checkpoint only
  std::string checkpoint_path;       // empty = no checkpoints
  std::string metrics_path;          // empty = in-memory metrics only
};

// One metrics row; fields that do not apply to the run stay NaN and are
// omitted from the JSON line.
struct MetricsRecord {
  std::size_t iter = 0;
  double loss = 0;
  std::string loss_kind;
  double ar_window = std::numeric_limits<double>::quiet_NaN();
  double arlb_est = std::numeric_limits<double>::quiet_NaN();
  double disc_loss = std::numeric_limits<double>::quiet_NaN();
  double disc_acc = std::numeric_limits<double>::quiet_NaN();
  double ratio_mae = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  double final_loss = 0;
  std::size_t iterations_run = 0;
};

struct CheckpointMeta {
  int version = 1;
  std::string kind;  // "flow", "generator", "discriminator"
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::size_t iter = 0;
  std::string loss_kind;
  // numeric hyperparameters needed to rebuild the model before loading
  // (layer counts, widths, clamps); keys are model-specific
  std::map<std::string, double> arch;
};

// Single file: one JSON header line (version, kind, shapes, optimizer
// step), then raw little-endian doubles for parameters, Adam moments and
// an opaque extra block. Round-trips bitwise.
void checkpoint_save(const std::string& path, const CheckpointMeta& meta,
                     const ParamVector& params, const ad::AdamState& opt,
                     const std::vector<double>& extra = {});
CheckpointMeta checkpoint_load(const std::string& path, ParamVector& params,
                               ad::AdamState& opt,
                               std::vector<double>* extra = nullptr);
// Metadata only, so callers can build a matching model before loading.
CheckpointMeta checkpoint_peek(const std::string& path);

// Density-based loop: every iteration extends an MH chain driven by the
// current flow, refreshes the buffer, and takes one Adam step on the
// configured loss over fresh proposal draws and buffered states. All
// randomness comes from per-iteration streams derived from cfg.seed, so
// a resumed run replays the interrupted one exactly.
//
// While the buffer holds fewer than batch distinct states (a fresh chain
// with near-zero acceptance), the refresh is retried a bounded number of
// times and the update then runs on the buffered rows repeated cyclically;
// the gradient through the proposal's own draws is what moves an
// immobile chain off its starting point.
TrainResult train_density_based(const targets::TargetDensity& target,
                                flows::FlowProposal& flow,
                                const TrainConfig& cfg,
                                const std::string& resume_from = "");

// Sample-based loop: per iteration draw one real and one generated batch,
// take cfg.k_d Adam steps on the discriminator's cross-entropy, then one
// generator step (ARLB: -mean logit of generated points; AR: the min-form
// surrogate against the real batch). eval_target, when given and 2-D,
// adds a coarse histogram check of the learned log-ratio to the metrics.
TrainResult train_sample_based(const Mat& data, nets::GeneratorNet& gen,
                               nets::DiscriminatorNet& disc,
                               const TrainConfig& cfg,
                               const targets::TargetDensity* eval_target = nullptr,
                               const std::string& resume_from = "");

}  // namespace mhflow::train
