#include "mhflow/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mhflow/check.hpp"
#include "mhflow/diagnostics.hpp"
#include "mhflow/flows.hpp"
#include "mhflow/mh.hpp"
#include "mhflow/nets.hpp"
#include "mhflow/objectives.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/training.hpp"

namespace mhflow::cli {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// distinguishes missing or malformed input files from bad configuration,
// so the dispatcher can return kDataError instead of kConfigError
struct DataError : Error {
  using Error::Error;
};

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double gauss_logpdf(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

int fail(const Error& e, int code) {
  std::fprintf(stderr, "error: %s\n", e.what());
  return code;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  check(out.good(), "cannot open " + path + " for writing");
  out << text;
  check(out.good(), "write to " + path + " failed");
}

// ---------------------------------------------------------------------
// config document

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& known) {
  check(j.is_object(), "config: section '" + section + "' must be an object");
  for (const auto& item : j.items())
    check(known.count(item.key()) != 0, "config: unknown key '" + item.key() +
                                            "' in section '" + section + "'");
}

std::string get_str(const json& j, const char* key, std::string fallback) {
  if (!j.contains(key)) return fallback;
  check(j.at(key).is_string(),
        std::string("config: '") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

double get_num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  check(j.at(key).is_number(),
        std::string("config: '") + key + "' must be a number");
  return j.at(key).get<double>();
}

std::uint64_t get_count(const json& j, const char* key,
                        std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  check(v.is_number_integer() && v.get<double>() >= 0,
        std::string("config: '") + key + "' must be a non-negative integer");
  return v.get<std::uint64_t>();
}

void parse_target(const json& j, TargetSection& s) {
  reject_unknown(j, "target", {"name", "data_path"});
  s.name = get_str(j, "name", s.name);
  s.data_path = get_str(j, "data_path", s.data_path);
}

void parse_data(const json& j, DataSection& s) {
  reject_unknown(j, "data", {"path"});
  s.path = get_str(j, "path", s.path);
}

void parse_proposal(const json& j, ProposalSection& s) {
  reject_unknown(j, "proposal",
                 {"layers", "hidden", "s_clamp", "latent_dim", "leak"});
  s.layers = std::size_t(get_count(j, "layers", s.layers));
  s.hidden = std::size_t(get_count(j, "hidden", s.hidden));
  s.s_clamp = get_num(j, "s_clamp", s.s_clamp);
  s.latent_dim = std::size_t(get_count(j, "latent_dim", s.latent_dim));
  s.leak = get_num(j, "leak", s.leak);
  check(s.layers >= 1 && s.hidden >= 1 && s.latent_dim >= 1,
        "config: proposal sizes must be at least 1");
  check(s.s_clamp > 0, "config: proposal.s_clamp must be positive");
  check(s.leak >= 0 && s.leak < 1, "config: proposal.leak must be in [0, 1)");
}

void parse_loss(const json& j, LossSection& s) {
  reject_unknown(j, "loss", {"kind"});
  s.kind = get_str(j, "kind", s.kind);
  check(s.kind == "arlb" || s.kind == "ar" || s.kind == "vi",
        "config: loss.kind must be arlb, ar or vi");
}

void parse_train(const json& j, TrainSection& s) {
  reject_unknown(j, "train",
                 {"iterations", "batch", "lr", "buffer_refresh", "burn_in",
                  "seed", "k_d", "buffer_capacity", "eval_every",
                  "checkpoint_every"});
  s.iterations = std::size_t(get_count(j, "iterations", s.iterations));
  s.batch = std::size_t(get_count(j, "batch", s.batch));
  s.lr = get_num(j, "lr", s.lr);
  s.buffer_refresh = std::size_t(get_count(j, "buffer_refresh", s.buffer_refresh));
  s.burn_in = std::size_t(get_count(j, "burn_in", s.burn_in));
  s.seed = get_count(j, "seed", s.seed);
  s.k_d = std::size_t(get_count(j, "k_d", s.k_d));
  s.buffer_capacity =
      std::size_t(get_count(j, "buffer_capacity", s.buffer_capacity));
  s.eval_every = std::size_t(get_count(j, "eval_every", s.eval_every));
  s.checkpoint_every =
      std::size_t(get_count(j, "checkpoint_every", s.checkpoint_every));
  check(s.iterations >= 1 && s.batch >= 1 && s.buffer_refresh >= 1 &&
            s.k_d >= 1 && s.eval_every >= 1,
        "config: train counts must be at least 1");
  check(s.lr > 0, "config: train.lr must be positive");
  check(s.buffer_capacity >= s.batch,
        "config: train.buffer_capacity must hold at least one batch");
}

void parse_sampler(const json& j, SamplerSection& s) {
  reject_unknown(j, "sampler",
                 {"kind", "steps", "burn_in", "lambda", "rw_sigma"});
  s.kind = get_str(j, "kind", s.kind);
  s.steps = std::size_t(get_count(j, "steps", s.steps));
  s.burn_in = std::size_t(get_count(j, "burn_in", s.burn_in));
  s.lambda = get_num(j, "lambda", s.lambda);
  s.rw_sigma = get_num(j, "rw_sigma", s.rw_sigma);
  check(s.kind == "imh" || s.kind == "rw" || s.kind == "mixture",
        "config: sampler.kind must be imh, rw or mixture");
  check(s.steps >= 1, "config: sampler.steps must be at least 1");
  check(s.lambda >= 0 && s.lambda <= 1,
        "config: sampler.lambda must be in [0, 1]");
  check(s.rw_sigma > 0, "config: sampler.rw_sigma must be positive");
}

void parse_diagnostics(const json& j, DiagnosticsSection& s) {
  reject_unknown(j, "diagnostics", {"mode_threshold", "grid_bins"});
  s.mode_threshold = get_num(j, "mode_threshold", s.mode_threshold);
  s.grid_bins = std::size_t(get_count(j, "grid_bins", s.grid_bins));
  check(s.mode_threshold >= 0 && s.mode_threshold <= 1,
        "config: diagnostics.mode_threshold must be in [0, 1]");
  check(s.grid_bins >= 2, "config: diagnostics.grid_bins must be at least 2");
}

void parse_output(const json& j, OutputSection& s) {
  reject_unknown(j, "output", {"dir"});
  s.dir = get_str(j, "dir", s.dir);
  check(!s.dir.empty(), "config: output.dir must not be empty");
}

// ---------------------------------------------------------------------
// file loaders

std::vector<double> split_numeric(const std::string& line,
                                  const std::string& where) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
      throw DataError(where + ": bad numeric cell '" + cell + "'");
    out.push_back(v);
  }
  if (out.empty()) throw DataError(where + ": empty row");
  return out;
}

bool numeric_row(const std::string& line) {
  try {
    split_numeric(line, "");
    return true;
  } catch (const Error&) {
    return false;
  }
}

Mat load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (!numeric_row(line)) continue;  // header
    }
    rows.push_back(split_numeric(line, path));
    if (rows.back().size() != rows.front().size())
      throw DataError(path + ": rows have inconsistent widths");
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  Mat m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

struct LoadedChain {
  Mat states;
  std::vector<std::uint8_t> accepted;
};

LoadedChain load_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string header;
  if (!std::getline(in, header) ||
      header.rfind("step,accepted,dim", 0) != 0)
    throw DataError(path + " is not a chain CSV (expected step,accepted,dim... header)");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_numeric(line, path));
    if (rows.back().size() < 3 || rows.back().size() != rows.front().size())
      throw DataError(path + ": rows have inconsistent widths");
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  LoadedChain out;
  std::size_t dim = rows[0].size() - 2;
  out.states = Mat(rows.size(), dim);
  out.accepted.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.accepted[i] = rows[i][1] != 0.0 ? 1 : 0;
    for (std::size_t d = 0; d < dim; ++d) out.states(i, d) = rows[i][d + 2];
  }
  return out;
}

void write_samples_csv(const Mat& samples, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  check(f != nullptr, "cannot open " + path + " for writing");
  for (std::size_t j = 0; j < samples.cols; ++j)
    std::fprintf(f, "%sdim%zu", j ? "," : "", j);
  std::fprintf(f, "\n");
  for (std::size_t i = 0; i < samples.rows; ++i) {
    for (std::size_t j = 0; j < samples.cols; ++j)
      std::fprintf(f, "%s%.17g", j ? "," : "", samples(i, j));
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

// ---------------------------------------------------------------------
// shared summary pieces

std::unique_ptr<mh::Sampler> make_chain_sampler(
    const std::string& kind, const targets::TargetDensity& target,
    const flows::FlowProposal* flow, double lambda, double rw_sigma) {
  std::vector<double> sigma(target.dim, rw_sigma);
  if (kind == "rw")
    return std::make_unique<mh::RandomWalkSampler>(target, sigma);
  check(flow != nullptr, "sampler kind '" + kind + "' needs a proposal");
  if (kind == "imh")
    return std::make_unique<mh::IndependentSampler>(
        target, mh::ExplicitProposal::from_flow(*flow));
  check(kind == "mixture", "unknown sampler kind '" + kind + "'");
  return std::make_unique<mh::MixtureSampler>(
      target, mh::ExplicitProposal::from_flow(*flow), lambda, sigma);
}

// ESS against the target's analytic moments when it has them, otherwise
// against the chain's own sample moments (flagged in moments_source).
json states_summary(const Mat& states, const targets::TargetDensity& target) {
  std::vector<double> mean(states.cols, 0.0), sd(states.cols, 0.0);
  std::string source;
  if (target.moments) {
    mean = target.moments->mean;
    for (std::size_t d = 0; d < states.cols; ++d)
      sd[d] = std::sqrt(target.moments->var[d]);
    source = "target";
  } else {
    for (std::size_t d = 0; d < states.cols; ++d) {
      for (std::size_t i = 0; i < states.rows; ++i) mean[d] += states(i, d);
      mean[d] /= double(states.rows);
      for (std::size_t i = 0; i < states.rows; ++i)
        sd[d] += (states(i, d) - mean[d]) * (states(i, d) - mean[d]);
      sd[d] = std::sqrt(sd[d] / double(states.rows));
    }
    source = "chain";
  }
  diag::EssEstimate e = diag::ess(states, mean, sd);
  json j;
  j["ess"] = {{"per_dimension", e.ess},
              {"min", e.min_ess},
              {"mean", e.mean_ess},
              {"truncation_lag", e.truncation_lag}};
  j["moments_source"] = source;
  return j;
}

json chain_summary(const mh::ChainRecord& rec,
                   const targets::TargetDensity& target) {
  json j = states_summary(rec.states, target);
  j["steps"] = rec.states.rows;
  j["empirical_ar"] = rec.empirical_ar;
  j["nonfinite_rejects"] = rec.nonfinite_rejects;
  j["wall_s"] = rec.wall_seconds;
  if (rec.wall_seconds > 0)
    j["ess_per_second"] = j["ess"]["min"].get<double>() / rec.wall_seconds;
  return j;
}

void emit(const json& j, const std::string& path) {
  std::string text = j.dump(2) + "\n";
  write_text(path, text);
  std::fputs(text.c_str(), stdout);
}

train::TrainConfig to_train_config(const ExperimentConfig& cfg,
                                   const std::string& dir) {
  train::TrainConfig tc;
  tc.loss = objectives::loss_kind_from_string(cfg.loss.kind);
  tc.iterations = cfg.train.iterations;
  tc.batch = cfg.train.batch;
  tc.lr = cfg.train.lr;
  tc.buffer_refresh = cfg.train.buffer_refresh;
  tc.burn_in = cfg.train.burn_in;
  tc.seed = cfg.train.seed;
  tc.k_d = cfg.train.k_d;
  tc.buffer_capacity = cfg.train.buffer_capacity;
  tc.eval_every = cfg.train.eval_every;
  tc.checkpoint_every = cfg.train.checkpoint_every;
  tc.metrics_path = dir + "/metrics.jsonl";
  return tc;
}

}  // namespace

// ---------------------------------------------------------------------
// config type

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw Error(std::string("config: invalid JSON: ") + e.what());
  }
  check(j.is_object(), "config: top level must be an object");
  static const std::set<std::string> sections = {
      "target", "data",    "proposal",    "loss",
      "train",  "sampler", "diagnostics", "output"};
  for (const auto& item : j.items())
    check(sections.count(item.key()) != 0,
          "config: unknown section '" + item.key() + "'");
  ExperimentConfig cfg;
  if (j.contains("target")) parse_target(j["target"], cfg.target);
  if (j.contains("data")) parse_data(j["data"], cfg.data);
  if (j.contains("proposal")) parse_proposal(j["proposal"], cfg.proposal);
  if (j.contains("loss")) parse_loss(j["loss"], cfg.loss);
  if (j.contains("train")) parse_train(j["train"], cfg.train);
  if (j.contains("sampler")) parse_sampler(j["sampler"], cfg.sampler);
  if (j.contains("diagnostics"))
    parse_diagnostics(j["diagnostics"], cfg.diagnostics);
  if (j.contains("output")) parse_output(j["output"], cfg.output);
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  j["target"] = {{"name", target.name}, {"data_path", target.data_path}};
  j["data"] = {{"path", data.path}};
  j["proposal"] = {{"layers", proposal.layers},
                   {"hidden", proposal.hidden},
                   {"s_clamp", proposal.s_clamp},
                   {"latent_dim", proposal.latent_dim},
                   {"leak", proposal.leak}};
  j["loss"] = {{"kind", loss.kind}};
  j["train"] = {{"iterations", train.iterations},
                {"batch", train.batch},
                {"lr", train.lr},
                {"buffer_refresh", train.buffer_refresh},
                {"burn_in", train.burn_in},
                {"seed", train.seed},
                {"k_d", train.k_d},
                {"buffer_capacity", train.buffer_capacity},
                {"eval_every", train.eval_every},
                {"checkpoint_every", train.checkpoint_every}};
  j["sampler"] = {{"kind", sampler.kind},
                  {"steps", sampler.steps},
                  {"burn_in", sampler.burn_in},
                  {"lambda", sampler.lambda},
                  {"rw_sigma", sampler.rw_sigma}};
  j["diagnostics"] = {{"mode_threshold", diagnostics.mode_threshold},
                      {"grid_bins", diagnostics.grid_bins}};
  j["output"] = {{"dir", output.dir}};
  return j.dump(2);
}

targets::TargetDensity resolve_target(const TargetSection& section) {
  static const std::set<std::string> posteriors = {"heart", "australian",
                                                   "german"};
  if (posteriors.count(section.name)) {
    std::string path = section.data_path.empty()
                           ? "data/" + section.name + ".csv"
                           : section.data_path;
    if (!fs::exists(path)) throw DataError("dataset file not found: " + path);
    try {
      return targets::make_logistic_posterior(
          targets::load_dataset(path, section.name));
    } catch (const Error& e) {
      throw DataError(e.what());
    }
  }
  return targets::by_name(section.name);
}

// ---------------------------------------------------------------------
// verify

int cmd_verify(const std::string& out_dir, std::uint64_t seed) {
  struct Check {
    std::string name;
    double value;
    double bound;
    bool pass;
  };
  std::vector<Check> checks;
  auto below = [&](std::string name, double value, double bound) {
    checks.push_back({std::move(name), value, bound, value < bound});
  };
  auto at_least = [&](std::string name, double value, double bound) {
    checks.push_back({std::move(name), value, bound, value >= bound});
  };

  try {
    targets::GridSpec wide{{-16.0}, {16.0}, {2001}};
    auto random_gauss = [](Rng& rng) {
      double mu = rng.uniform(-2.0, 2.0);
      double sd = rng.uniform(0.5, 2.0);
      return std::pair<double, double>(mu, sd);
    };

    // sampled acceptance rate against the quadrature swap-TV identity
    for (int k = 0; k < 5; ++k) {
      Rng rng(mix64(seed, std::uint64_t(100 + k)));
      auto [mu_p, sd_p] = random_gauss(rng);
      auto [mu_q, sd_q] = random_gauss(rng);
      diag::LogDensity logp = [mu_p, sd_p](const double* x) {
        return gauss_logpdf(x[0], mu_p, sd_p);
      };
      diag::LogDensity logq = [mu_q, sd_q](const double* x) {
        return gauss_logpdf(x[0], mu_q, sd_q);
      };
      double tv = diag::quad_tv_joint(logp, logq, wide);
      auto draw_p = [mu_p, sd_p](Rng& r, double* x) {
        x[0] = r.normal(mu_p, sd_p);
      };
      mh::ExplicitProposal q = mh::ExplicitProposal::gaussian({mu_q}, {sd_q});
      double mc = diag::mc_acceptance_rate(draw_p, logp, q, 1, 1000000, rng);
      below("acceptance_equals_one_minus_tv_" + std::to_string(k + 1),
            std::abs(mc - (1.0 - tv)), 5e-3);
    }

    {
      Rng rng(mix64(seed, 200));
      double min_margin = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 20; ++k) {
        auto [mu_p, sd_p] = random_gauss(rng);
        auto [mu_q, sd_q] = random_gauss(rng);
        diag::LogDensity logp = [mu_p, sd_p](const double* x) {
          return gauss_logpdf(x[0], mu_p, sd_p);
        };
        diag::LogDensity logq = [mu_q, sd_q](const double* x) {
          return gauss_logpdf(x[0], mu_q, sd_q);
        };
        double ar = 1.0 - diag::quad_tv_joint(logp, logq, wide);
        double sym = diag::quad_sym_kl(logp, logq, wide);
        double lb = 1.0 - std::sqrt(sym / 2.0);
        min_margin = std::min(min_margin, ar - lb);
      }
      at_least("pinsker_lower_bound_ordering", min_margin, -1e-6);
    }

    {
      diag::PiecewiseUniform p{{0.0, 2.0 / 3.0}, {1.5}};
      diag::PiecewiseUniform q{{1.0 / 3.0, 1.0}, {1.5}};
      diag::PiecewiseUniform s{{0.0, 1.0}, {1.0}};
      double split =
          diag::semimetric_exact(p, s) + diag::semimetric_exact(q, s);
      double direct = diag::semimetric_exact(p, q);
      below("overlapping_uniforms_split_sum", std::abs(split - 4.0 / 3.0),
            1e-3);
      below("overlapping_uniforms_direct", std::abs(direct - 1.5), 1e-3);
    }

    {
      Rng rng(mix64(seed, 300));
      targets::GridSpec g{{-8.0}, {8.0}, {801}};
      auto random_mixture = [&rng]() {
        double w = rng.uniform(0.2, 0.8);
        double m1 = rng.uniform(-4.0, 4.0), s1 = rng.uniform(0.3, 1.5);
        double m2 = rng.uniform(-4.0, 4.0), s2 = rng.uniform(0.3, 1.5);
        return diag::LogDensity([w, m1, s1, m2, s2](const double* x) {
          double a = std::log(w) + gauss_logpdf(x[0], m1, s1);
          double b = std::log1p(-w) + gauss_logpdf(x[0], m2, s2);
          double hi = std::max(a, b);
          return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
        });
      };
      double min_margin = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 50; ++k) {
        diag::LogDensity p = random_mixture();
        diag::LogDensity q = random_mixture();
        diag::LogDensity s = random_mixture();
        double via_s =
            diag::semimetric_quad(p, s, g) + diag::semimetric_quad(s, q, g);
        double direct = diag::semimetric_quad(p, q, g);
        min_margin = std::min(min_margin, via_s - (2.0 / 3.0) * direct);
      }
      at_least("weak_triangle_inequality_margin", min_margin, -1e-9);
    }

    {
      diag::LogDensity logp = [](const double* x) {
        return gauss_logpdf(x[0], 0.3, 1.1);
      };
      below("self_distance_tv_zero", diag::quad_tv_joint(logp, logp, wide),
            1e-12);
      below("self_distance_symkl_zero", diag::quad_sym_kl(logp, logp, wide),
            1e-12);
    }

    {
      targets::GridSpec unit{{-1.0}, {1.0}, {2001}};
      diag::LogDensity flat = [](const double*) { return 0.0; };
      double prev = 0;
      double min_drop = std::numeric_limits<double>::infinity();
      for (int k = 1; k <= 10; ++k) {
        double sd = 0.1 * double(k);
        diag::LogDensity logq = [sd](const double* x) {
          return -0.5 * (x[0] / sd) * (x[0] / sd);
        };
        double sym = diag::quad_sym_kl(flat, logq, unit);
        if (k > 1) min_drop = std::min(min_drop, prev - sym);
        prev = sym;
      }
      at_least("truncnorm_symkl_decreasing", min_drop, 1e-12);
    }

    {
      Rng rng(mix64(seed, 400));
      targets::TargetDensity p;
      p.name = "gauss";
      p.dim = 1;
      p.normalized = true;
      p.log_unnorm = [](const double* x) {
        return gauss_logpdf(x[0], 0.0, 1.0);
      };
      p.grid = targets::GridSpec{{-10.0}, {10.0}, {2001}};
      mh::ExplicitProposal q = mh::ExplicitProposal::gaussian({0.0}, {2.0});
      mh::RejectionResult rej =
          mh::rejection_sample(p, q, 2.0, 1000000, rng);
      below("rejection_acceptance_half",
            std::abs(rej.acceptance_fraction - 0.5), 5e-3);
      mh::IndependentSampler s(p, q);
      mh::ChainRecord rec = mh::run_chain(s, 200000, 1000, nullptr, rng);
      at_least("imh_acceptance_dominates_rejection", rec.empirical_ar,
               0.5 - 5e-3);
    }
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }

  json report;
  report["seed"] = seed;
  bool all = true;
  json arr = json::array();
  for (const Check& c : checks) {
    arr.push_back({{"check", c.name},
                   {"value", c.value},
                   {"bound", c.bound},
                   {"pass", c.pass}});
    all = all && c.pass;
  }
  report["checks"] = arr;
  report["all_pass"] = all;
  std::string text = report.dump(2) + "\n";
  std::fputs(text.c_str(), stdout);
  if (!out_dir.empty()) {
    try {
      ensure_dir(out_dir);
      write_text(out_dir + "/verification.json", text);
    } catch (const Error& e) {
      return fail(e, kDataError);
    }
  }
  return all ? kOk : kRunFailure;
}

// ---------------------------------------------------------------------
// train-db

int cmd_train_db(const ExperimentConfig& cfg) {
  targets::TargetDensity target;
  try {
    check(!cfg.target.name.empty(),
          "config: target.name is required for train-db");
    target = resolve_target(cfg.target);
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }

  try {
    const std::string& dir = cfg.output.dir;
    ensure_dir(dir);
    write_text(dir + "/resolved_config.json", cfg.resolved_json() + "\n");

    Rng rng_init(mix64(cfg.train.seed, 0x5eed0001ULL));
    flows::FlowConfig fc{target.dim, cfg.proposal.layers, cfg.proposal.hidden,
                         cfg.proposal.s_clamp};
    flows::FlowProposal flow = flows::FlowProposal::create(fc, rng_init);

    train::TrainConfig tc = to_train_config(cfg, dir);
    tc.checkpoint_path = dir + "/flow.ckpt";
    train::TrainResult res = train::train_density_based(target, flow, tc);

    std::unique_ptr<mh::Sampler> sampler = make_chain_sampler(
        cfg.sampler.kind, target, &flow, cfg.sampler.lambda,
        cfg.sampler.rw_sigma);
    Rng rng_chain(mix64(cfg.train.seed, 0x5eed0002ULL));
    mh::ChainRecord rec = mh::run_chain(*sampler, cfg.sampler.steps,
                                        cfg.sampler.burn_in, nullptr,
                                        rng_chain);
    mh::write_chain_csv(rec, dir + "/chain.csv");

    json summary;
    summary["target"] = target.name;
    summary["dim"] = target.dim;
    summary["loss"] = cfg.loss.kind;
    summary["iterations"] = res.iterations_run;
    summary["final_loss"] = res.final_loss;
    summary["train_wall_s"] =
        res.metrics.empty() ? 0.0 : res.metrics.back().wall_s;
    summary["sampler"] = cfg.sampler.kind;
    summary["chain"] = chain_summary(rec, target);
    emit(summary, dir + "/summary.json");
    return kOk;
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }
}

// ---------------------------------------------------------------------
// train-sb

int cmd_train_sb(const ExperimentConfig& cfg) {
  targets::TargetDensity eval_target;
  bool have_target = false;
  try {
    check(!cfg.data.path.empty(),
          "config: data.path is required for train-sb");
    check(cfg.loss.kind != "vi",
          "config: the sample-based loop supports only ar and arlb losses");
    if (!cfg.target.name.empty()) {
      eval_target = resolve_target(cfg.target);
      have_target = true;
    }
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }

  Mat data;
  try {
    data = load_matrix_csv(cfg.data.path);
    if (have_target)
      check(data.cols == eval_target.dim,
            "data in " + cfg.data.path + " has dimension " +
                std::to_string(data.cols) + " but target " + eval_target.name +
                " has " + std::to_string(eval_target.dim));
  } catch (const Error& e) {
    return fail(e, kDataError);
  }

  try {
    const std::string& dir = cfg.output.dir;
    ensure_dir(dir);
    write_text(dir + "/resolved_config.json", cfg.resolved_json() + "\n");

    Rng rng_gen(mix64(cfg.train.seed, 0x5eed0003ULL));
    Rng rng_disc(mix64(cfg.train.seed, 0x5eed0004ULL));
    nets::GeneratorConfig gc{cfg.proposal.latent_dim, data.cols,
                             cfg.proposal.hidden, cfg.proposal.leak};
    nets::DiscriminatorConfig dc{data.cols, cfg.proposal.hidden,
                                 cfg.proposal.leak};
    nets::GeneratorNet gen = nets::GeneratorNet::create(gc, rng_gen);
    nets::DiscriminatorNet disc = nets::DiscriminatorNet::create(dc, rng_disc);

    train::TrainConfig tc = to_train_config(cfg, dir);
    tc.checkpoint_path = dir + "/model.ckpt";
    train::TrainResult res = train::train_sample_based(
        data, gen, disc, tc, have_target ? &eval_target : nullptr);

    Rng rng_eval(mix64(cfg.train.seed, 0x5eed0005ULL));
    Mat raw = gen.generate(cfg.sampler.steps, rng_eval);
    write_samples_csv(raw, dir + "/raw_samples.csv");

    auto draw = [&gen](Rng& r, double* x) {
      Mat m = gen.generate(1, r);
      std::copy(m.data.begin(), m.data.end(), x);
    };
    auto ratio = [&disc](const double* x) { return disc.log_ratio(x); };
    mh::RatioImhSampler rs(data.cols, draw, ratio);
    mh::ChainRecord rec = mh::run_chain(rs, cfg.sampler.steps,
                                        cfg.sampler.burn_in, nullptr,
                                        rng_eval);
    mh::write_chain_csv(rec, dir + "/mh_samples.csv");

    json summary;
    summary["data"] = cfg.data.path;
    summary["dim"] = data.cols;
    summary["rows"] = data.rows;
    summary["loss"] = cfg.loss.kind;
    summary["iterations"] = res.iterations_run;
    summary["final_loss"] = res.final_loss;
    summary["train_wall_s"] =
        res.metrics.empty() ? 0.0 : res.metrics.back().wall_s;
    summary["empirical_ar"] = rec.empirical_ar;
    summary["nonfinite_rejects"] = rec.nonfinite_rejects;
    if (!res.metrics.empty()) {
      if (std::isfinite(res.metrics.back().disc_acc))
        summary["disc_acc"] = res.metrics.back().disc_acc;
      if (std::isfinite(res.metrics.back().ratio_mae))
        summary["ratio_mae"] = res.metrics.back().ratio_mae;
    }
    if (have_target) {
      summary["target"] = eval_target.name;
      if (eval_target.dim <= 2 && !eval_target.grid.empty()) {
        summary["grid_kl_raw"] =
            diag::grid_kl(raw, eval_target, cfg.diagnostics.grid_bins);
        summary["grid_kl_mh"] =
            diag::grid_kl(rec.states, eval_target, cfg.diagnostics.grid_bins);
      }
    }
    emit(summary, dir + "/summary.json");
    return kOk;
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }
}

// ---------------------------------------------------------------------
// sample

int cmd_sample(const std::string& checkpoint, const std::string& target_name,
               std::size_t n, const std::string& sampler_kind, double lambda,
               double rw_sigma, std::size_t burn_in, std::uint64_t seed,
               const std::string& out_dir) {
  targets::TargetDensity target;
  try {
    check(sampler_kind == "imh" || sampler_kind == "rw" ||
              sampler_kind == "mixture",
          "unknown sampler kind '" + sampler_kind + "'");
    check(sampler_kind == "rw" || !checkpoint.empty(),
          "sampler kind '" + sampler_kind + "' needs --checkpoint");
    check(n >= 1, "--n must be at least 1");
    check(rw_sigma > 0, "--rw-sigma must be positive");
    check(lambda >= 0 && lambda <= 1, "--lambda must be in [0, 1]");
    target = resolve_target({target_name, ""});
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }

  std::unique_ptr<flows::FlowProposal> flow;
  if (sampler_kind != "rw") {
    try {
      train::CheckpointMeta meta = train::checkpoint_peek(checkpoint);
      check(meta.kind == "flow", checkpoint + " holds a '" + meta.kind +
                                     "' model, not a flow proposal");
      check(meta.dim == target.dim,
            "checkpoint dimension " + std::to_string(meta.dim) +
                " does not match target dimension " +
                std::to_string(target.dim));
      check(meta.arch.count("n_layers") && meta.arch.count("hidden") &&
                meta.arch.count("s_clamp"),
            checkpoint + " lacks architecture metadata");
      flows::FlowConfig fc{meta.dim, std::size_t(meta.arch.at("n_layers")),
                           std::size_t(meta.arch.at("hidden")),
                           meta.arch.at("s_clamp")};
      Rng scratch(1);
      flow = std::make_unique<flows::FlowProposal>(
          flows::FlowProposal::create(fc, scratch));
      ad::AdamState opt;
      train::checkpoint_load(checkpoint, flow->params(), opt);
    } catch (const Error& e) {
      return fail(e, kDataError);
    }
  }

  try {
    ensure_dir(out_dir);
    std::unique_ptr<mh::Sampler> sampler = make_chain_sampler(
        sampler_kind, target, flow.get(), lambda, rw_sigma);
    Rng rng(seed);
    mh::ChainRecord rec = mh::run_chain(*sampler, n, burn_in, nullptr, rng);
    mh::write_chain_csv(rec, out_dir + "/chain.csv");

    json summary;
    summary["target"] = target.name;
    summary["sampler"] = sampler_kind;
    summary["seed"] = seed;
    if (!checkpoint.empty()) summary["checkpoint"] = checkpoint;
    summary["chain"] = chain_summary(rec, target);
    emit(summary, out_dir + "/summary.json");
    return kOk;
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }
}

// ---------------------------------------------------------------------
// diagnose

int cmd_diagnose(const std::string& chain_csv, const std::string& target_name,
                 double mode_threshold, const std::string& out_dir) {
  targets::TargetDensity target;
  try {
    check(mode_threshold >= 0 && mode_threshold <= 1,
          "--mode-threshold must be in [0, 1]");
    target = resolve_target({target_name, ""});
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }

  LoadedChain chain;
  try {
    chain = load_chain_csv(chain_csv);
    check(chain.states.cols == target.dim,
          chain_csv + " has dimension " + std::to_string(chain.states.cols) +
              " but target " + target.name + " has " +
              std::to_string(target.dim));
  } catch (const Error& e) {
    return fail(e, kDataError);
  }

  try {
    ensure_dir(out_dir);
    json d = states_summary(chain.states, target);
    d["chain"] = chain_csv;
    d["target"] = target.name;
    d["steps"] = chain.states.rows;
    double ar = 0;
    for (std::uint8_t a : chain.accepted) ar += a;
    d["empirical_ar"] = ar / double(chain.accepted.size());
    if (target.modes) {
      std::vector<double> frac =
          diag::mode_coverage(chain.states, *target.modes);
      std::size_t visited = 0;
      for (double f : frac)
        if (f >= mode_threshold) ++visited;
      d["mode_coverage"] = frac;
      d["mode_threshold"] = mode_threshold;
      d["modes_visited"] = visited;
      d["modes_total"] = frac.size();
    }
    if (target.moments) {
      std::vector<double> err(chain.states.cols, 0.0);
      for (std::size_t c = 0; c < chain.states.cols; ++c) {
        double m = 0;
        for (std::size_t i = 0; i < chain.states.rows; ++i)
          m += chain.states(i, c);
        err[c] = std::abs(m / double(chain.states.rows) -
                          target.moments->mean[c]);
      }
      d["mean_abs_error"] = err;
    }
    emit(d, out_dir + "/diagnostics.json");
    return kOk;
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }
}

// ---------------------------------------------------------------------
// landscape

int cmd_landscape(const std::string& objective, std::size_t resolution,
                  const std::string& out_dir) {
  objectives::LossKind kind;
  try {
    check(objective == "ar" || objective == "arlb",
          "--objective must be ar or arlb");
    check(resolution >= 2, "--resolution must be at least 2");
    kind = objective == "ar" ? objectives::LossKind::AR
                             : objectives::LossKind::ARLB;
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }

  try {
    ensure_dir(out_dir);
    targets::TargetDensity target = targets::by_name("bimodal1d");
    diag::LandscapeScan scan =
        diag::landscape_scan(target, -3.0, 3.0, 0.5, 4.0, resolution, kind);
    diag::write_landscape_csv(scan,
                              out_dir + "/landscape_" + objective + ".csv");
    json s;
    s["target"] = target.name;
    s["objective"] = objective;
    s["resolution"] = resolution;
    s["argmax_mu_index"] = scan.argmax_mu;
    s["argmax_sigma_index"] = scan.argmax_sigma;
    s["argmax_mu"] = scan.mu[scan.argmax_mu];
    s["argmax_sigma"] = scan.sigma[scan.argmax_sigma];
    s["value"] = scan.value(scan.argmax_mu, scan.argmax_sigma);
    emit(s, out_dir + "/landscape_" + objective + ".json");
    return kOk;
  } catch (const DataError& e) {
    return fail(e, kDataError);
  } catch (const Error& e) {
    return fail(e, kRunFailure);
  }
}

// ---------------------------------------------------------------------
// dispatch

int run(int argc, const char* const* argv) {
  CLI::App app{"independent-proposal training, sampling and verification"};
  app.require_subcommand(1);

  std::string v_out;
  std::uint64_t v_seed = 1;
  CLI::App* verify = app.add_subcommand(
      "verify", "run the quadrature identity checks and report JSON");
  verify->add_option("--out", v_out, "directory for verification.json");
  verify->add_option("--seed", v_seed, "seed for the sampled checks")
      ->capture_default_str();

  std::string db_config, db_out;
  std::uint64_t db_seed = 0;
  CLI::App* train_db = app.add_subcommand(
      "train-db", "train a flow proposal against a target density");
  train_db->add_option("--config", db_config, "experiment config JSON")
      ->required();
  CLI::Option* db_out_opt =
      train_db->add_option("--out", db_out, "output directory override");
  CLI::Option* db_seed_opt =
      train_db->add_option("--seed", db_seed, "train seed override");

  std::string sb_config, sb_out, sb_data;
  std::uint64_t sb_seed = 0;
  CLI::App* train_sb = app.add_subcommand(
      "train-sb", "train a generator and critic on data samples");
  train_sb->add_option("--config", sb_config, "experiment config JSON")
      ->required();
  CLI::Option* sb_data_opt =
      train_sb->add_option("--data", sb_data, "training CSV override");
  CLI::Option* sb_out_opt =
      train_sb->add_option("--out", sb_out, "output directory override");
  CLI::Option* sb_seed_opt =
      train_sb->add_option("--seed", sb_seed, "train seed override");

  std::string sm_ckpt, sm_target, sm_kind = "imh", sm_out = "out";
  std::size_t sm_n = 1000, sm_burn = 100;
  double sm_lambda = 0.5, sm_sigma = 1.0;
  std::uint64_t sm_seed = 1;
  CLI::App* sample = app.add_subcommand(
      "sample", "run an MH chain from a trained proposal checkpoint");
  sample->add_option("--checkpoint", sm_ckpt, "flow checkpoint path");
  sample->add_option("--target", sm_target, "target density name")
      ->required();
  sample->add_option("--n", sm_n, "recorded steps")->capture_default_str();
  sample
      ->add_option("--sampler", sm_kind, "kernel: imh, rw or mixture")
      ->check(CLI::IsMember({"imh", "rw", "mixture"}))
      ->capture_default_str();
  sample->add_option("--lambda", sm_lambda, "independent weight in mixture")
      ->capture_default_str();
  sample->add_option("--rw-sigma", sm_sigma, "random-walk step scale")
      ->capture_default_str();
  sample->add_option("--burn-in", sm_burn, "discarded steps")
      ->capture_default_str();
  sample->add_option("--seed", sm_seed, "chain seed")->capture_default_str();
  sample->add_option("--out", sm_out, "output directory")
      ->capture_default_str();

  std::string dg_chain, dg_target, dg_out = "out";
  double dg_threshold = 0.05;
  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "score an existing chain CSV against a target");
  diagnose->add_option("--chain", dg_chain, "chain CSV path")->required();
  diagnose->add_option("--target", dg_target, "target density name")
      ->required();
  diagnose
      ->add_option("--mode-threshold", dg_threshold,
                   "coverage fraction that counts a mode as visited")
      ->capture_default_str();
  diagnose->add_option("--out", dg_out, "output directory")
      ->capture_default_str();

  std::string ls_objective, ls_out = "out";
  std::size_t ls_resolution = 50;
  CLI::App* landscape = app.add_subcommand(
      "landscape", "scan Gaussian proposals over the bimodal 1-D target");
  landscape->add_option("--objective", ls_objective, "ar or arlb")
      ->check(CLI::IsMember({"ar", "arlb"}))
      ->required();
  landscape->add_option("--resolution", ls_resolution, "grid cells per axis")
      ->capture_default_str();
  landscape->add_option("--out", ls_out, "output directory")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (app.got_subcommand(verify)) return cmd_verify(v_out, v_seed);
    if (app.got_subcommand(train_db)) {
      ExperimentConfig cfg = ExperimentConfig::from_file(db_config);
      if (*db_out_opt) cfg.output.dir = db_out;
      if (*db_seed_opt) cfg.train.seed = db_seed;
      return cmd_train_db(cfg);
    }
    if (app.got_subcommand(train_sb)) {
      ExperimentConfig cfg = ExperimentConfig::from_file(sb_config);
      if (*sb_data_opt) cfg.data.path = sb_data;
      if (*sb_out_opt) cfg.output.dir = sb_out;
      if (*sb_seed_opt) cfg.train.seed = sb_seed;
      return cmd_train_sb(cfg);
    }
    if (app.got_subcommand(sample))
      return cmd_sample(sm_ckpt, sm_target, sm_n, sm_kind, sm_lambda,
                        sm_sigma, sm_burn, sm_seed, sm_out);
    if (app.got_subcommand(diagnose))
      return cmd_diagnose(dg_chain, dg_target, dg_threshold, dg_out);
    if (app.got_subcommand(landscape))
      return cmd_landscape(ls_objective, ls_resolution, ls_out);
  } catch (const Error& e) {
    return fail(e, kConfigError);
  }
  return kConfigError;
}

}  // namespace mhflow::cli
