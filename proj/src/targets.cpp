#include "mhflow/targets.hpp"

#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include "mhflow/check.hpp"

namespace mhflow::targets {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

double sq(double v) { return v * v; }

// Shared mixture machinery: isotropic per-component Gaussians.
double mixture_logp(const double* x, std::size_t dim, const MixtureSpec& s) {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(s.means.rows);
  for (std::size_t m = 0; m < s.means.rows; ++m) {
    double quad = 0;
    for (std::size_t d = 0; d < dim; ++d)
      quad += sq((x[d] - s.means(m, d)) / s.sds[m]);
    terms[m] = -0.5 * quad + std::log(s.weights[m]) -
               double(dim) * (std::log(s.sds[m]) + kHalfLog2Pi);
    best = std::max(best, terms[m]);
  }
  double acc = 0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

int mixture_tape(ad::Tape& t, int x, std::size_t dim, const MixtureSpec& s) {
  int cols = -1;
  for (std::size_t m = 0; m < s.means.rows; ++m) {
    Mat neg_mu(1, dim);
    for (std::size_t d = 0; d < dim; ++d) neg_mu(0, d) = -s.means(m, d);
    int diff = t.scale(t.add_row_const(x, neg_mu), 1.0 / s.sds[m]);
    int comp = t.add_const(
        t.scale(t.sum_cols(t.square(diff)), -0.5),
        std::log(s.weights[m]) -
            double(dim) * (std::log(s.sds[m]) + kHalfLog2Pi));
    cols = cols < 0 ? comp : t.concat_cols(cols, comp);
  }
  return t.logsumexp_cols(cols);
}

MixtureSpec mog2_spec() {
  MixtureSpec s;
  s.means = Mat(2, 2);
  s.means(0, 0) = 5.0;
  s.means(1, 0) = -5.0;
  s.sds = {0.5, 0.5};
  s.weights = {0.5, 0.5};
  return s;
}

MixtureSpec mog6_spec() {
  MixtureSpec s;
  s.means = Mat(6, 2);
  for (int i = 1; i <= 6; ++i) {
    s.means(std::size_t(i - 1), 0) = std::sin(i * std::numbers::pi / 3.0);
    s.means(std::size_t(i - 1), 1) = std::cos(i * std::numbers::pi / 3.0);
  }
  s.sds = std::vector<double>(6, 0.5);
  s.weights = std::vector<double>(6, 1.0 / 6.0);
  return s;
}

MixtureSpec mog_pair_spec() {
  MixtureSpec s;
  s.means = Mat(2, 2);
  s.means(0, 0) = 2.0;
  s.means(1, 0) = -2.0;
  s.sds = {std::sqrt(0.1), std::sqrt(0.1)};
  s.weights = {0.5, 0.5};
  return s;
}

MixtureSpec bimodal1d_spec() {
  MixtureSpec s;
  s.means = Mat(2, 1);
  s.means(0, 0) = -2.0;
  s.means(1, 0) = 2.0;
  s.sds = {0.5, 0.7};
  s.weights = {0.5, 0.5};
  return s;
}

GridSpec square_grid(double half_width, std::size_t points) {
  return GridSpec{{-half_width, -half_width},
                  {half_width, half_width},
                  {points, points}};
}

std::vector<double> icg_variances() {
  std::vector<double> v(50);
  for (std::size_t j = 0; j < 50; ++j)
    v[j] = std::pow(10.0, -2.0 + 4.0 * double(j) / 49.0);
  return v;
}

Mat scg_rotation() {
  const double c = std::cos(std::numbers::pi / 4.0);
  const double s = std::sin(std::numbers::pi / 4.0);
  Mat b(2, 2);
  b(0, 0) = c;
  b(0, 1) = -s;
  b(1, 0) = s;
  b(1, 1) = c;
  return b;
}

constexpr double kRoughEta = 1e-2;

}  // namespace

double mog_logp(const double* x, std::size_t dim, const MixtureSpec& spec) {
  return mixture_logp(x, dim, spec);
}

double ring_logp(const double* x) {
  double r = std::hypot(x[0], x[1]);
  return -sq(r - 2.0) / 0.32;
}

double ring5_logp(const double* x) {
  double r = std::hypot(x[0], x[1]);
  double u = sq(r - 1.0);
  for (int i = 2; i <= 5; ++i) u = std::min(u, sq(r - double(i)));
  return -u / 0.04;
}

double rough_well_logp(const double* x, std::size_t dim, double eta) {
  double quad = 0, rough = 0;
  for (std::size_t d = 0; d < dim; ++d) {
    quad += sq(x[d]);
    rough += std::cos(x[d] / eta);
  }
  return -(0.5 * quad + eta * rough);
}

double bimodal1d_logp(double x) {
  static const MixtureSpec spec = bimodal1d_spec();
  return mixture_logp(&x, 1, spec);
}

TargetDensity make_ring() {
  TargetDensity t;
  t.name = "ring";
  t.dim = 2;
  t.normalized = false;
  t.log_unnorm = [](const double* x) { return ring_logp(x); };
  t.tape_logp = [](ad::Tape& tp, int x) {
    int r = tp.sqrt_(tp.sum_cols(tp.square(x)));
    return tp.scale(tp.square(tp.add_const(r, -2.0)), -1.0 / 0.32);
  };
  t.grid = square_grid(8.0, 400);
  return t;
}

namespace {

TargetDensity make_mixture_target(std::string name, std::size_t dim,
                                  MixtureSpec spec, GridSpec grid,
                                  Moments moments) {
  TargetDensity t;
  t.name = std::move(name);
  t.dim = dim;
  t.normalized = true;
  t.log_unnorm = [spec, dim](const double* x) {
    return mixture_logp(x, dim, spec);
  };
  t.tape_logp = [spec, dim](ad::Tape& tp, int x) {
    return mixture_tape(tp, x, dim, spec);
  };
  t.grid = std::move(grid);
  t.moments = std::move(moments);
  t.modes = spec.means;
  return t;
}

}  // namespace

TargetDensity make_mog2() {
  return make_mixture_target("mog2", 2, mog2_spec(), square_grid(8.0, 400),
                             Moments{{0.0, 0.0}, {25.25, 0.25}});
}

TargetDensity make_mog6() {
  return make_mixture_target("mog6", 2, mog6_spec(), square_grid(8.0, 400),
                             Moments{{0.0, 0.0}, {0.75, 0.75}});
}

TargetDensity make_mog_pair() {
  return make_mixture_target("mog", 2, mog_pair_spec(), square_grid(8.0, 400),
                             Moments{{0.0, 0.0}, {4.1, 0.1}});
}

TargetDensity make_bimodal1d() {
  GridSpec g{{-10.0}, {10.0}, {4000}};
  return make_mixture_target("bimodal1d", 1, bimodal1d_spec(), std::move(g),
                             Moments{{0.0}, {4.37}});
}

TargetDensity make_ring5() {
  TargetDensity t;
  t.name = "ring5";
  t.dim = 2;
  t.normalized = false;
  t.log_unnorm = [](const double* x) { return ring5_logp(x); };
  t.tape_logp = [](ad::Tape& tp, int x) {
    int r = tp.sqrt_(tp.sum_cols(tp.square(x)));
    int cols = -1;
    for (int i = 1; i <= 5; ++i) {
      int u = tp.square(tp.add_const(r, -double(i)));
      cols = cols < 0 ? u : tp.concat_cols(cols, u);
    }
    return tp.scale(tp.min_cols(cols), -1.0 / 0.04);
  };
  t.grid = square_grid(8.0, 400);
  return t;
}

TargetDensity make_icg() {
  TargetDensity t;
  t.name = "icg";
  t.dim = 50;
  t.normalized = true;
  auto vars = icg_variances();
  double log_z = 0;
  for (double v : vars) log_z += 0.5 * std::log(v) + kHalfLog2Pi;
  t.log_unnorm = [vars, log_z](const double* x) {
    double quad = 0;
    for (std::size_t j = 0; j < vars.size(); ++j) quad += sq(x[j]) / vars[j];
    return -0.5 * quad - log_z;
  };
  Mat inv_var(1, 50);
  for (std::size_t j = 0; j < 50; ++j) inv_var(0, j) = 1.0 / vars[j];
  t.tape_logp = [inv_var, log_z](ad::Tape& tp, int x) {
    int quad = tp.sum_cols(tp.mul_row_const(tp.square(x), inv_var));
    return tp.add_const(tp.scale(quad, -0.5), -log_z);
  };
  Moments m;
  m.mean.assign(50, 0.0);
  m.var = vars;
  t.moments = std::move(m);
  return t;
}

TargetDensity make_scg() {
  TargetDensity t;
  t.name = "scg";
  t.dim = 2;
  t.normalized = true;
  const Mat b = scg_rotation();
  const std::vector<double> vars{1e-2, 1e2};
  // log det of the covariance is zero: the variances multiply to one.
  const double log_z = 2.0 * kHalfLog2Pi;
  t.log_unnorm = [b, vars, log_z](const double* x) {
    double u0 = b(0, 0) * x[0] + b(1, 0) * x[1];
    double u1 = b(0, 1) * x[0] + b(1, 1) * x[1];
    return -0.5 * (sq(u0) / vars[0] + sq(u1) / vars[1]) - log_z;
  };
  Mat bt(2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) bt(i, j) = b(j, i);
  Mat inv_var = Mat::row_vector({1.0 / vars[0], 1.0 / vars[1]});
  t.tape_logp = [bt, inv_var, log_z](ad::Tape& tp, int x) {
    int u = tp.linear_const(x, bt);
    int quad = tp.sum_cols(tp.mul_row_const(tp.square(u), inv_var));
    return tp.add_const(tp.scale(quad, -0.5), -log_z);
  };
  t.grid = square_grid(40.0, 1600);
  t.moments = Moments{{0.0, 0.0}, {50.005, 50.005}};
  return t;
}

TargetDensity make_rough_well() {
  TargetDensity t;
  t.name = "rough_well";
  t.dim = 2;
  t.normalized = false;
  t.log_unnorm = [](const double* x) {
    return rough_well_logp(x, 2, kRoughEta);
  };
  t.tape_logp = [](ad::Tape& tp, int x) {
    int quad = tp.scale(tp.sum_cols(tp.square(x)), 0.5);
    int rough =
        tp.scale(tp.sum_cols(tp.cos_(tp.scale(x, 1.0 / kRoughEta))), kRoughEta);
    return tp.neg(tp.add(quad, rough));
  };
  t.grid = square_grid(8.0, 400);
  return t;
}

LogisticDataset load_dataset(const std::string& path, const std::string& name) {
  struct Shape {
    const char* name;
    std::size_t n, d;
  };
  static const Shape known[] = {
      {"german", 1000, 25}, {"heart", 532, 14}, {"australian", 690, 15}};

  std::ifstream in(path);
  check(in.good(), "cannot open dataset file: " + path);
  std::string line;
  check(bool(std::getline(in, line)), "dataset file is empty: " + path);

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  const std::size_t ncols = split(line).size();
  check(ncols >= 2, "dataset needs at least one covariate and a label column");

  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cells = split(line);
    check(cells.size() == ncols,
          "wrong column count at line " + std::to_string(lineno) + ": expected " +
              std::to_string(ncols) + ", got " + std::to_string(cells.size()));
    std::vector<double> row(ncols);
    for (std::size_t c = 0; c < ncols; ++c) {
      std::size_t used = 0;
      try {
        row[c] = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      while (used < cells[c].size() && std::isspace(cells[c][used])) ++used;
      check(used == cells[c].size() && !cells[c].empty(),
            "non-numeric cell at line " + std::to_string(lineno) + ", column " +
                std::to_string(c + 1) + ": '" + cells[c] + "'");
    }
    rows.push_back(std::move(row));
  }

  const std::size_t n = rows.size();
  const std::size_t d = ncols - 1;
  for (const Shape& s : known) {
    if (name == s.name) {
      check(d == s.d, "wrong column count for " + name + ": expected " +
                          std::to_string(s.d + 1) + ", got " +
                          std::to_string(ncols));
      check(n == s.n, "wrong row count for " + name + ": expected " +
                          std::to_string(s.n) + ", got " + std::to_string(n));
    }
  }

  std::set<double> label_values;
  for (const auto& r : rows) label_values.insert(r[d]);
  check(label_values.size() == 2, "labels outside two distinct values (found " +
                                      std::to_string(label_values.size()) +
                                      ")");
  const double hi_label = *label_values.rbegin();

  LogisticDataset ds;
  ds.name = name;
  ds.covariates = Mat(n, d);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) ds.covariates(i, c) = rows[i][c];
    ds.labels[i] = rows[i][d] == hi_label ? 1 : 0;
  }

  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += ds.covariates(i, c);
    mean /= double(n);
    double var = 0;
    for (std::size_t i = 0; i < n; ++i) var += sq(ds.covariates(i, c) - mean);
    var /= double(n);
    check(var > 0, "zero variance column " + std::to_string(c + 1));
    const double inv_sd = 1.0 / std::sqrt(var);
    for (std::size_t i = 0; i < n; ++i)
      ds.covariates(i, c) = (ds.covariates(i, c) - mean) * inv_sd;
  }
  return ds;
}

double logistic_posterior_logp(const double* theta, const LogisticDataset& data,
                               bool flip_bias_sign) {
  const std::size_t d = data.d();
  const double bias = theta[d];
  double ll = 0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    double dotp = 0;
    for (std::size_t c = 0; c < d; ++c) dotp += data.covariates(i, c) * theta[c];
    double z = flip_bias_sign ? -(dotp + bias) : -dotp + bias;
    double softplus = std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z)));
    ll += double(data.labels[i]) * z - softplus;
  }
  double prior = 0;
  for (std::size_t c = 0; c <= d; ++c) prior += sq(theta[c]);
  return ll - 0.5 * prior - double(d + 1) * kHalfLog2Pi;
}

TargetDensity make_logistic_posterior(LogisticDataset data,
                                      bool flip_bias_sign) {
  TargetDensity t;
  t.name = "logistic_" + data.name;
  t.dim = data.d() + 1;
  t.normalized = false;
  auto shared = std::make_shared<LogisticDataset>(std::move(data));
  t.log_unnorm = [shared, flip_bias_sign](const double* theta) {
    return logistic_posterior_logp(theta, *shared, flip_bias_sign);
  };
  const std::size_t d = shared->d();
  Mat y_row(1, shared->n());
  for (std::size_t i = 0; i < shared->n(); ++i)
    y_row(0, i) = double(shared->labels[i]);
  t.tape_logp = [shared, flip_bias_sign, d, y_row](ad::Tape& tp, int theta) {
    std::vector<int> widx(d);
    for (std::size_t c = 0; c < d; ++c) widx[c] = int(c);
    int w = tp.gather_cols(theta, widx);
    int b = tp.gather_cols(theta, {int(d)});
    int xw = tp.linear_const(w, shared->covariates);  // K x N
    int z = flip_bias_sign
                ? tp.neg(tp.add_col_broadcast(xw, b))
                : tp.add_col_broadcast(tp.neg(xw), b);
    int ll = tp.sum_cols(tp.sub(tp.mul_row_const(z, y_row), tp.softplus(z)));
    int prior = tp.scale(tp.sum_cols(tp.square(theta)), -0.5);
    return tp.add_const(tp.add(ll, prior), -double(d + 1) * kHalfLog2Pi);
  };
  return t;
}

TargetDensity by_name(const std::string& name) {
  if (name == "ring") return make_ring();
  if (name == "mog2") return make_mog2();
  if (name == "mog6") return make_mog6();
  if (name == "mog") return make_mog_pair();
  if (name == "ring5") return make_ring5();
  if (name == "icg") return make_icg();
  if (name == "scg") return make_scg();
  if (name == "rough_well") return make_rough_well();
  if (name == "bimodal1d") return make_bimodal1d();
  throw Error("unknown target: " + name);
}

}  // namespace mhflow::targets
