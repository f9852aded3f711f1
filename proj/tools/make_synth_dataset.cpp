// Regenerates the synthetic CSVs shipped in data/: logistic-regression
// datasets plus a Gaussian-mixture sample set for the sample-based
// training loop. Each file is produced deterministically from a fixed
// seed; for the logistic sets, covariate columns get distinct offsets
// and scales and labels are Bernoulli draws from a logistic model on
// the standardized covariates.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mhflow/rng.hpp"
#include "mhflow/targets.hpp"

using mhflow::Rng;

namespace {

struct Spec {
  const char* name;
  std::size_t n, d;
  std::uint64_t seed;
  const char* label0;
  const char* label1;
};

void generate(const Spec& spec, const std::string& dir) {
  Rng rng(spec.seed);
  std::vector<double> offset(spec.d), scale(spec.d), w(spec.d);
  for (std::size_t j = 0; j < spec.d; ++j) {
    offset[j] = 2.0 * std::sin(double(j + 1));
    scale[j] = 0.5 + double(j % 5);
    w[j] = rng.normal(0.0, 0.8);
  }
  double bias = rng.normal(0.0, 0.3);

  std::string path = dir + "/" + spec.name + ".csv";
  std::ofstream out(path);
  for (std::size_t j = 0; j < spec.d; ++j) out << "f" << (j + 1) << ",";
  out << "label\n";
  out.precision(10);
  for (std::size_t i = 0; i < spec.n; ++i) {
    double z = bias;
    for (std::size_t j = 0; j < spec.d; ++j) {
      double standardized = rng.normal();
      out << offset[j] + scale[j] * standardized << ",";
      z += w[j] * standardized;
    }
    double p1 = 1.0 / (1.0 + std::exp(-z));
    out << (rng.uniform() < p1 ? spec.label1 : spec.label0) << "\n";
  }
  std::cout << "wrote " << path << "\n";
}

void generate_mixture_samples(const std::string& dir) {
  mhflow::targets::TargetDensity t = mhflow::targets::by_name("mog6");
  const mhflow::Mat& modes = *t.modes;
  Rng rng(61905);
  std::string path = dir + "/mog6_samples.csv";
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (f == nullptr) {
    std::cerr << "cannot open " << path << "\n";
    std::exit(1);
  }
  std::fprintf(f, "x,y\n");
  for (std::size_t i = 0; i < 20000; ++i) {
    std::size_t m = rng.index(modes.rows);
    std::fprintf(f, "%.10g,%.10g\n", rng.normal(modes(m, 0), 0.5),
                 rng.normal(modes(m, 1), 0.5));
  }
  std::fclose(f);
  std::cout << "wrote " << path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  std::string dir = argc > 1 ? argv[1] : "data";
  const Spec specs[] = {
      {"heart", 532, 14, 61902, "0", "1"},
      {"german", 1000, 25, 61903, "1", "2"},
      {"australian", 690, 15, 61904, "0", "1"},
  };
  for (const Spec& s : specs) generate(s, dir);
  generate_mixture_samples(dir);
  return 0;
}
