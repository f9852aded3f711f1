#pragma once

#include <cstdint>
#include <string>

#include "mhflow/targets.hpp"

namespace mhflow::cli {

// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kRunFailure = 1,   // a verification check or a pipeline stage failed
  kConfigError = 2,  // bad flags, bad config document, unknown names
  kDataError = 3,    // missing or malformed input files
};

// One section per pipeline stage; a config file may set any subset of the
// keys and the remainder keep the defaults below. Unknown sections and
// unknown keys are rejected outright so typos cannot silently change runs.
struct TargetSection {
  std::string name;       // synthetic target or dataset posterior; "" = unset
  std::string data_path;  // dataset CSV override for posterior targets
};

struct DataSection {
  std::string path;  // training CSV for the sample-based loop
};

struct ProposalSection {
  std::size_t layers = 4;     // flow coupling layers
  std::size_t hidden = 64;    // net width (flow s/t nets, generator, critic)
  double s_clamp = 5.0;       // flow log-scale clamp
  std::size_t latent_dim = 8; // generator input dimension
  double leak = 0.2;          // leaky-relu slope in generator and critic
};

struct LossSection {
  std::string kind = "arlb";  // arlb | ar | vi
};

struct TrainSection {
  std::size_t iterations = 1000;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::size_t buffer_refresh = 64;
  std::size_t burn_in = 100;
  std::uint64_t seed = 1;
  std::size_t k_d = 5;
  std::size_t buffer_capacity = 10000;
  std::size_t eval_every = 50;
  std::size_t checkpoint_every = 0;
};

struct SamplerSection {
  std::string kind = "imh";  // imh | rw | mixture
  std::size_t steps = 1000;
  std::size_t burn_in = 100;
  double lambda = 0.5;    // independent-kernel weight in the mixture
  double rw_sigma = 1.0;  // random-walk step scale
};

struct DiagnosticsSection {
  double mode_threshold = 0.05;  // coverage fraction that counts as visited
  std::size_t grid_bins = 40;    // histogram resolution for grid KL
};

struct OutputSection {
  std::string dir = "out";
};

struct ExperimentConfig {
  TargetSection target;
  DataSection data;
  ProposalSection proposal;
  LossSection loss;
  TrainSection train;
  SamplerSection sampler;
  DiagnosticsSection diagnostics;
  OutputSection output;

  // Parses a JSON document; throws Error on unknown sections or keys,
  // type mismatches and out-of-range values.
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);

  // The full document with every default filled in, keys sorted. Feeding
  // it back through from_json_text reproduces the same configuration.
  std::string resolved_json() const;
};

// Builds the target a config names: synthetic families by name, or a
// logistic posterior for the shipped dataset names (heart, australian,
// german). Throws Error for unknown names and missing dataset files.
targets::TargetDensity resolve_target(const TargetSection& section);

// Subcommand bodies, exposed so tests can run them in-process. Each
// returns an ExitCode and writes its artifacts under the output directory.
int cmd_verify(const std::string& out_dir, std::uint64_t seed);
int cmd_train_db(const ExperimentConfig& cfg);
int cmd_train_sb(const ExperimentConfig& cfg);
int cmd_sample(const std::string& checkpoint, const std::string& target_name,
               std::size_t n, const std::string& sampler_kind, double lambda,
               double rw_sigma, std::size_t burn_in, std::uint64_t seed,
               const std::string& out_dir);
int cmd_diagnose(const std::string& chain_csv, const std::string& target_name,
                 double mode_threshold, const std::string& out_dir);
int cmd_landscape(const std::string& objective, std::size_t resolution,
                  const std::string& out_dir);

// Full argv dispatch used by the mhflow binary.
int run(int argc, const char* const* argv);

}  // namespace mhflow::cli
