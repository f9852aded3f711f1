#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mhflow/mat.hpp"
#include "mhflow/params.hpp"

// Reverse-mode tape over matrix-valued nodes. Values are computed
// eagerly when a node is created; backward() runs one reverse sweep
// and accumulates adjoints. Parameter leaves are deduplicated by view
// name so weights used in several places on one tape accumulate a
// single gradient.

namespace mhflow::ad {

enum class Op {
  Input,
  Param,
  Affine,       // Y = X W^T + 1 b^T
  LinearConst,  // Y = X A^T, A constant
  Tanh,
  Exp,
  Log,
  Sqrt,
  Cos,
  Logistic,
  Softplus,
  LeakyRelu,
  Min0,  // min(x, 0)
  Mul,
  Add,
  Sub,
  Neg,
  Scale,            // c * x
  AddConst,         // x + c
  AddRowConst,      // X + row, broadcast over rows
  MulRowConst,      // X * row, broadcast over rows
  AddColBroadcast,  // X + col, broadcast over columns
  ScalarAdd,        // X + s, s a 1x1 node
  ScalarMul,        // X * s, s a 1x1 node
  SumCols,          // B x C -> B x 1
  SumAll,           // B x C -> 1 x 1
  LogSumExpCols,    // B x C -> B x 1
  MinCols,          // B x C -> B x 1
  GatherCols,       // Y[:, j] = X[:, idx[j]]
  ConcatCols,       // [A | B]
};

const char* op_name(Op op);

class Tape {
 public:
  explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

  // Free-form label recorded on nodes created after the call; used in
  // error messages for non-finite values.
  void set_context(std::string ctx) { context_ = std::move(ctx); }

  int input(const Mat& v);
  int param(const std::string& name, const Mat& v);
  int param(const std::string& name, const ParamVector& pv) {
    return param(name, pv.get(name));
  }

  int affine(int x, const std::string& w_name, const Mat& w,
             const std::string& b_name, const Mat& b);
  int affine(int x, const std::string& w_name, const std::string& b_name,
             const ParamVector& pv) {
    return affine(x, w_name, pv.get(w_name), b_name, pv.get(b_name));
  }
  int linear_const(int x, const Mat& a);

  int tanh_(int x);
  int exp_(int x);
  int log_(int x);
  int sqrt_(int x);
  int cos_(int x);
  int logistic(int x);
  int softplus(int x);
  int leaky_relu(int x, double slope = 0.01);
  int min0(int x);

  int mul(int a, int b);
  int add(int a, int b);
  int sub(int a, int b);
  int neg(int x);
  int scale(int x, double c);
  int add_const(int x, double c);
  int add_row_const(int x, const Mat& row);
  int mul_row_const(int x, const Mat& row);
  int add_col_broadcast(int x, int col);
  int scalar_add(int x, int s);
  int scalar_mul(int x, int s);

  int sum_cols(int x);
  int sum_all(int x);
  int mean_all(int x);
  int logsumexp_cols(int x);
  int min_cols(int x);

  int gather_cols(int x, std::vector<int> idx);
  int concat_cols(int a, int b);

  // Convenience compositions.
  int square(int x) { return mul(x, x); }
  int soft_clamp(int x, double c) { return scale(tanh_(scale(x, 1.0 / c)), c); }

  void backward(int loss);

  const Mat& val(int id) const { return nodes_[std::size_t(id)].val; }
  const Mat& grad(int id) const;
  bool has_param(const std::string& name) const {
    return param_ids_.count(name) != 0;
  }
  int param_id(const std::string& name) const {
    return param_ids_.at(name);
  }
  // Per-view gradients for every parameter leaf on the tape (zero mats
  // if backward has not reached them).
  std::map<std::string, Mat> param_grads() const;
  // Flat gradient aligned with pv; views absent from the tape get zeros,
  // and tape leaves absent from pv are ignored. The second case is what
  // lets two parameter sets share one graph and take turns updating.
  std::vector<double> flat_grad(const ParamVector& pv) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    Mat val;
    Mat grad;
    double scalar = 0.0;
    Mat aux;               // row constants / LinearConst matrix
    std::vector<int> idx;  // gather indices or per-row argmin
    std::string name;      // param view name
    std::string ctx;
  };

  int push(Node n);
  const Mat& v(int id) const { return nodes_[std::size_t(id)].val; }

  std::vector<Node> nodes_;
  std::map<std::string, int> param_ids_;
  std::string context_;
  bool check_finite_;
};

// A differentiable scalar program: builds a graph on the tape from the
// parameters and returns the loss node id.
using Program = std::function<int(Tape&, const ParamVector&)>;

GradRecord value_and_grad(const Program& prog, const ParamVector& params);

// Central finite differences on the flat parameter vector. The program
// must replay identical randomness on every call (seeded internally).
std::vector<double> finite_diff_grad(
    const std::function<double(const ParamVector&)>& f, const ParamVector& params,
    double step = 1e-5);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

void adam_step(ParamVector& params, const std::vector<double>& grad,
               AdamState& state, const AdamConfig& cfg);

}  // namespace mhflow::ad
