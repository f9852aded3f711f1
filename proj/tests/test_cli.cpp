#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mhflow/cli.hpp"
#include "mhflow/mh.hpp"
#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"
#include "mhflow/training.hpp"

using namespace mhflow;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("mhflow_cli_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json slurp_json(const fs::path& path) { return json::parse(slurp(path)); }

// Checkpoints embed the accumulated training wall time (for resume
// accounting) as the second extra double; zero it so the rest of the
// payload can be compared bitwise.
std::string scrub_wall_accum(std::string bytes) {
  std::size_t hdr = bytes.find('\n') + 1;
  json meta = json::parse(bytes.substr(0, hdr));
  std::size_t n = meta.at("param_count").get<std::size_t>();
  std::size_t off = hdr + (3 * n + 1) * sizeof(double);
  REQUIRE(off + sizeof(double) <= bytes.size());
  for (std::size_t i = 0; i < sizeof(double); ++i) bytes[off + i] = 0;
  return bytes;
}

int run_argv(std::vector<std::string> args) {
  std::vector<const char*> argv;
  argv.push_back("mhflow");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return cli::run(int(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("empty config document yields the documented defaults") {
  cli::ExperimentConfig cfg = cli::ExperimentConfig::from_json_text("{}");
  CHECK(cfg.target.name.empty());
  CHECK(cfg.proposal.layers == 4);
  CHECK(cfg.proposal.hidden == 64);
  CHECK(cfg.proposal.s_clamp == 5.0);
  CHECK(cfg.loss.kind == "arlb");
  CHECK(cfg.train.iterations == 1000);
  CHECK(cfg.train.batch == 64);
  CHECK(cfg.train.lr == 1e-3);
  CHECK(cfg.train.seed == 1);
  CHECK(cfg.sampler.kind == "imh");
  CHECK(cfg.sampler.steps == 1000);
  CHECK(cfg.diagnostics.grid_bins == 40);
  CHECK(cfg.output.dir == "out");
}

TEST_CASE("config parser rejects unknown sections, keys and bad values") {
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text("{\"tgt\": {}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"target\": {\"nme\": \"ring\"}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"train\": {\"lr\": \"fast\"}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"train\": {\"lr\": -0.5}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"train\": {\"iterations\": 2.5}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"loss\": {\"kind\": \"mmd\"}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text(
                      "{\"sampler\": {\"lambda\": 1.5}}"),
                  Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text("[1, 2]"), Error);
  CHECK_THROWS_AS(cli::ExperimentConfig::from_json_text("not json"), Error);
}

TEST_CASE("resolved config is a fixed point of the parser") {
  cli::ExperimentConfig cfg = cli::ExperimentConfig::from_json_text(
      "{\"target\": {\"name\": \"ring\"},"
      " \"train\": {\"iterations\": 25, \"seed\": 9},"
      " \"loss\": {\"kind\": \"ar\"}}");
  std::string first = cfg.resolved_json();
  cli::ExperimentConfig back = cli::ExperimentConfig::from_json_text(first);
  CHECK(back.resolved_json() == first);
  CHECK(back.target.name == "ring");
  CHECK(back.train.iterations == 25);
  CHECK(back.train.seed == 9);
  CHECK(back.loss.kind == "ar");
  CHECK(back.train.batch == cfg.train.batch);
}

TEST_CASE("target resolution covers synthetic names and posteriors") {
  targets::TargetDensity ring = cli::resolve_target({"ring", ""});
  CHECK(ring.dim == 2);
  targets::TargetDensity heart = cli::resolve_target({"heart", ""});
  CHECK(heart.dim == 15);
  CHECK_THROWS_AS(cli::resolve_target({"no_such_target", ""}), Error);
  CHECK_THROWS_AS(cli::resolve_target({"heart", "/nope/heart.csv"}), Error);
}

TEST_CASE("verify subcommand passes all checks and writes a report") {
  fs::path dir = fresh_dir("verify");
  int rc = cli::cmd_verify(dir.string(), 7);
  CHECK(rc == cli::kOk);
  json report = slurp_json(dir / "verification.json");
  CHECK(report.at("all_pass").get<bool>());
  CHECK(report.at("checks").size() >= 10);
  for (const json& c : report.at("checks")) {
    CHECK(c.contains("check"));
    CHECK(c.contains("value"));
    CHECK(c.contains("bound"));
    CHECK(c.at("pass").get<bool>());
  }
}

TEST_CASE("landscape subcommand writes the scan grid and its argmax") {
  fs::path dir = fresh_dir("landscape");
  int rc = cli::cmd_landscape("ar", 8, dir.string());
  CHECK(rc == cli::kOk);
  CHECK(fs::exists(dir / "landscape_ar.csv"));
  json s = slurp_json(dir / "landscape_ar.json");
  CHECK(s.at("objective") == "ar");
  CHECK(s.at("resolution") == 8);
  CHECK(s.at("argmax_mu").is_number());
  CHECK(s.at("value").get<double>() > 0.0);
  CHECK(s.at("value").get<double>() <= 1.0);
  CHECK(cli::cmd_landscape("swirl", 8, dir.string()) == cli::kConfigError);
}

TEST_CASE("random-walk sampling needs no checkpoint and reports a summary") {
  fs::path dir = fresh_dir("sample_rw");
  int rc = cli::cmd_sample("", "mog", 800, "rw", 0.5, 1.0, 50, 3,
                           dir.string());
  CHECK(rc == cli::kOk);
  json s = slurp_json(dir / "summary.json");
  CHECK(s.at("sampler") == "rw");
  double ar = s.at("chain").at("empirical_ar").get<double>();
  CHECK(ar > 0.0);
  CHECK(ar <= 1.0);
  CHECK(s.at("chain").at("ess").at("min").get<double>() > 0.0);
  std::string chain = slurp(dir / "chain.csv");
  CHECK(chain.rfind("step,accepted,dim0,dim1", 0) == 0);
}

TEST_CASE("sample subcommand maps bad inputs to the right exit codes") {
  fs::path dir = fresh_dir("sample_err");
  CHECK(cli::cmd_sample("", "no_such_target", 10, "rw", 0.5, 1.0, 0, 1,
                        dir.string()) == cli::kConfigError);
  CHECK(cli::cmd_sample("", "mog", 10, "imh", 0.5, 1.0, 0, 1,
                        dir.string()) == cli::kConfigError);
  CHECK(cli::cmd_sample("/no/such.ckpt", "mog", 10, "imh", 0.5, 1.0, 0, 1,
                        dir.string()) == cli::kDataError);
}

TEST_CASE("density-based pipeline trains, samples and reproduces bitwise") {
  fs::path dir_a = fresh_dir("db_a");
  fs::path dir_b = fresh_dir("db_b");
  fs::path dir_c = fresh_dir("db_c");
  cli::ExperimentConfig cfg = cli::ExperimentConfig::from_json_text(
      "{\"target\": {\"name\": \"mog\"},"
      " \"proposal\": {\"layers\": 2, \"hidden\": 16},"
      " \"train\": {\"iterations\": 40, \"batch\": 32, \"burn_in\": 50,"
      "             \"buffer_refresh\": 16, \"eval_every\": 10,"
      "             \"seed\": 11},"
      " \"sampler\": {\"steps\": 500, \"burn_in\": 50}}");

  cfg.output.dir = dir_a.string();
  REQUIRE(cli::cmd_train_db(cfg) == cli::kOk);
  for (const char* name : {"resolved_config.json", "flow.ckpt",
                           "metrics.jsonl", "chain.csv", "summary.json"})
    CHECK(fs::exists(dir_a / name));

  json summary = slurp_json(dir_a / "summary.json");
  CHECK(summary.at("target") == "mog");
  CHECK(summary.at("iterations") == 40);
  CHECK(summary.at("chain").at("empirical_ar").get<double>() > 0.0);

  std::ifstream metrics(dir_a / "metrics.jsonl");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(metrics, line)) {
    json rec = json::parse(line);
    CHECK(rec.contains("iter"));
    CHECK(rec.contains("loss"));
    ++rows;
  }
  CHECK(rows >= 4);

  cfg.output.dir = dir_b.string();
  REQUIRE(cli::cmd_train_db(cfg) == cli::kOk);
  CHECK(slurp(dir_a / "chain.csv") == slurp(dir_b / "chain.csv"));
  CHECK(scrub_wall_accum(slurp(dir_a / "flow.ckpt")) ==
        scrub_wall_accum(slurp(dir_b / "flow.ckpt")));

  cfg.output.dir = dir_c.string();
  cfg.train.seed = 12;
  REQUIRE(cli::cmd_train_db(cfg) == cli::kOk);
  CHECK(slurp(dir_a / "chain.csv") != slurp(dir_c / "chain.csv"));

  fs::path sample_dir = fresh_dir("db_sample");
  int rc = cli::cmd_sample((dir_a / "flow.ckpt").string(), "mog", 600, "imh",
                           0.5, 1.0, 50, 5, sample_dir.string());
  CHECK(rc == cli::kOk);
  json ss = slurp_json(sample_dir / "summary.json");
  CHECK(ss.at("chain").at("empirical_ar").get<double>() > 0.05);

  fs::path mix_dir = fresh_dir("db_mixture");
  rc = cli::cmd_sample((dir_a / "flow.ckpt").string(), "mog", 600, "mixture",
                       0.5, 1.0, 50, 5, mix_dir.string());
  CHECK(rc == cli::kOk);

  fs::path diag_dir = fresh_dir("db_diag");
  rc = cli::cmd_diagnose((dir_a / "chain.csv").string(), "mog", 0.05,
                         diag_dir.string());
  CHECK(rc == cli::kOk);
  json d = slurp_json(diag_dir / "diagnostics.json");
  CHECK(d.at("target") == "mog");
  CHECK(d.at("steps") == 500);
  CHECK(d.at("modes_total") == 2);
  CHECK(d.at("mode_coverage").size() == 2);
  CHECK(d.at("ess").at("min").get<double>() > 0.0);
  CHECK(d.at("mean_abs_error").size() == 2);

  CHECK(cli::cmd_diagnose((dir_a / "chain.csv").string(), "bimodal1d", 0.05,
                          diag_dir.string()) == cli::kDataError);
  CHECK(cli::cmd_diagnose("/no/such/chain.csv", "mog", 0.05,
                          diag_dir.string()) == cli::kDataError);
}

TEST_CASE("sample-based pipeline trains on a CSV and writes both sample sets") {
  fs::path dir = fresh_dir("sb");
  fs::path data_csv = dir / "blob.csv";
  {
    Rng rng(42);
    std::FILE* f = std::fopen(data_csv.string().c_str(), "w");
    REQUIRE(f != nullptr);
    std::fprintf(f, "x,y\n");
    for (int i = 0; i < 600; ++i)
      std::fprintf(f, "%.17g,%.17g\n", rng.normal(1.0, 0.7),
                   rng.normal(-0.5, 0.7));
    std::fclose(f);
  }

  cli::ExperimentConfig cfg = cli::ExperimentConfig::from_json_text(
      "{\"proposal\": {\"latent_dim\": 4, \"hidden\": 24},"
      " \"train\": {\"iterations\": 30, \"batch\": 32, \"k_d\": 2,"
      "             \"eval_every\": 10, \"seed\": 21},"
      " \"sampler\": {\"steps\": 300, \"burn_in\": 30}}");
  cfg.data.path = data_csv.string();
  cfg.output.dir = (dir / "out").string();
  REQUIRE(cli::cmd_train_sb(cfg) == cli::kOk);

  for (const char* name : {"resolved_config.json", "model.ckpt.gen",
                           "model.ckpt.disc", "metrics.jsonl",
                           "raw_samples.csv", "mh_samples.csv",
                           "summary.json"})
    CHECK(fs::exists(dir / "out" / name));

  json summary = slurp_json(dir / "out" / "summary.json");
  CHECK(summary.at("dim") == 2);
  CHECK(summary.at("rows") == 600);
  CHECK(summary.at("empirical_ar").get<double>() > 0.0);
  CHECK(summary.at("disc_acc").is_number());

  std::string raw = slurp(dir / "out" / "raw_samples.csv");
  CHECK(raw.rfind("dim0,dim1", 0) == 0);
  std::string mh = slurp(dir / "out" / "mh_samples.csv");
  CHECK(mh.rfind("step,accepted,dim0,dim1", 0) == 0);

  train::CheckpointMeta meta =
      train::checkpoint_peek((dir / "out" / "model.ckpt.gen").string());
  CHECK(meta.kind == "generator");
  CHECK(meta.dim == 2);

  cfg.data.path = "/no/such/data.csv";
  CHECK(cli::cmd_train_sb(cfg) == cli::kDataError);
  cfg.data.path = "";
  CHECK(cli::cmd_train_sb(cfg) == cli::kConfigError);
}

TEST_CASE("grid kl lands in the sample-based summary when a target is named") {
  fs::path dir = fresh_dir("sb_kl");
  fs::path data_csv = dir / "mog.csv";
  {
    targets::TargetDensity t = targets::by_name("mog");
    REQUIRE(t.modes.has_value());
    Rng rng(7);
    std::FILE* f = std::fopen(data_csv.string().c_str(), "w");
    REQUIRE(f != nullptr);
    std::fprintf(f, "x,y\n");
    for (int i = 0; i < 800; ++i) {
      std::size_t m = rng.index(t.modes->rows);
      std::fprintf(f, "%.17g,%.17g\n",
                   rng.normal((*t.modes)(m, 0), 0.5),
                   rng.normal((*t.modes)(m, 1), 0.5));
    }
    std::fclose(f);
  }
  cli::ExperimentConfig cfg = cli::ExperimentConfig::from_json_text(
      "{\"target\": {\"name\": \"mog\"},"
      " \"proposal\": {\"latent_dim\": 4, \"hidden\": 24},"
      " \"train\": {\"iterations\": 25, \"batch\": 32, \"k_d\": 2,"
      "             \"eval_every\": 10, \"seed\": 31},"
      " \"sampler\": {\"steps\": 300, \"burn_in\": 30},"
      " \"diagnostics\": {\"grid_bins\": 24}}");
  cfg.data.path = data_csv.string();
  cfg.output.dir = (dir / "out").string();
  REQUIRE(cli::cmd_train_sb(cfg) == cli::kOk);
  json summary = slurp_json(dir / "out" / "summary.json");
  CHECK(summary.at("target") == "mog");
  CHECK(summary.at("grid_kl_raw").is_number());
  CHECK(summary.at("grid_kl_mh").is_number());
  CHECK(summary.at("grid_kl_raw").get<double>() >= 0.0);
}

TEST_CASE("argv dispatch routes subcommands and maps errors to exit codes") {
  CHECK(run_argv({"--help"}) == 0);
  CHECK(run_argv({"frobnicate"}) == cli::kConfigError);
  CHECK(run_argv({}) == cli::kConfigError);
  CHECK(run_argv({"train-db", "--config", "/no/such/config.json"}) ==
        cli::kConfigError);
  CHECK(run_argv({"sample", "--target", "mog", "--sampler", "warp"}) ==
        cli::kConfigError);
  CHECK(run_argv({"landscape", "--objective", "tv"}) == cli::kConfigError);

  fs::path dir = fresh_dir("argv");
  fs::path cfg_path = dir / "cfg.json";
  {
    std::ofstream out(cfg_path);
    out << "{\"target\": {\"name\": \"mog\"},"
           " \"proposal\": {\"layers\": 2, \"hidden\": 12},"
           " \"train\": {\"iterations\": 10, \"batch\": 16,"
           "             \"burn_in\": 20, \"eval_every\": 5},"
           " \"sampler\": {\"steps\": 120, \"burn_in\": 20}}";
  }
  int rc = run_argv({"train-db", "--config", cfg_path.string(), "--out",
                     (dir / "run").string(), "--seed", "77"});
  CHECK(rc == cli::kOk);
  json resolved = slurp_json(dir / "run" / "resolved_config.json");
  CHECK(resolved.at("train").at("seed") == 77);
  CHECK(resolved.at("output").at("dir") == (dir / "run").string());
  CHECK(fs::exists(dir / "run" / "chain.csv"));

  rc = run_argv({"sample", "--checkpoint", (dir / "run" / "flow.ckpt").string(),
                 "--target", "mog", "--n", "150", "--burn-in", "20",
                 "--sampler", "imh", "--seed", "3", "--out",
                 (dir / "sample").string()});
  CHECK(rc == cli::kOk);
  rc = run_argv({"diagnose", "--chain", (dir / "sample" / "chain.csv").string(),
                 "--target", "mog", "--out", (dir / "diag").string()});
  CHECK(rc == cli::kOk);
}
