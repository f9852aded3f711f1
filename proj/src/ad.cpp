#include "mhflow/ad.hpp"

#include <algorithm>
#include <cmath>

#include "mhflow/kernels.hpp"

namespace mhflow::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::Param: return "param";
    case Op::Affine: return "affine";
    case Op::LinearConst: return "linear_const";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sqrt: return "sqrt";
    case Op::Cos: return "cos";
    case Op::Logistic: return "logistic";
    case Op::Softplus: return "softplus";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Min0: return "min0";
    case Op::Mul: return "mul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add_const";
    case Op::AddRowConst: return "add_row_const";
    case Op::MulRowConst: return "mul_row_const";
    case Op::AddColBroadcast: return "add_col_broadcast";
    case Op::ScalarAdd: return "scalar_add";
    case Op::ScalarMul: return "scalar_mul";
    case Op::SumCols: return "sum_cols";
    case Op::SumAll: return "sum_all";
    case Op::LogSumExpCols: return "logsumexp_cols";
    case Op::MinCols: return "min_cols";
    case Op::GatherCols: return "gather_cols";
    case Op::ConcatCols: return "concat_cols";
  }
  return "?";
}

namespace {

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double logistic_fn(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int Tape::push(Node n) {
  n.ctx = context_;
  if (check_finite_ && !n.val.all_finite()) {
    throw Error(std::string("non-finite value after primitive '") +
                op_name(n.op) + "'" +
                (n.name.empty() ? "" : " (view " + n.name + ")") +
                (n.ctx.empty() ? "" : " in " + n.ctx));
  }
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

int Tape::input(const Mat& v) {
  Node n;
  n.op = Op::Input;
  n.val = v;
  return push(std::move(n));
}

int Tape::param(const std::string& name, const Mat& v) {
  auto it = param_ids_.find(name);
  if (it != param_ids_.end()) return it->second;
  Node n;
  n.op = Op::Param;
  n.val = v;
  n.name = name;
  int id = push(std::move(n));
  param_ids_[name] = id;
  return id;
}

int Tape::affine(int x, const std::string& w_name, const Mat& w,
                 const std::string& b_name, const Mat& b) {
  int wid = param(w_name, w);
  int bid = param(b_name, b);
  const Mat& xv = v(x);
  const Mat& wv = v(wid);
  const Mat& bv = v(bid);
  check(xv.cols == wv.cols, "affine: input " + shape_str(xv) +
                                " incompatible with weight " + shape_str(wv) +
                                " (view " + w_name + ")");
  check(bv.rows == 1 && bv.cols == wv.rows,
        "affine: bias " + shape_str(bv) + " incompatible with weight " +
            shape_str(wv) + " (view " + b_name + ")");
  Node n;
  n.op = Op::Affine;
  n.a = x;
  n.b = wid;
  n.c = bid;
  n.val = Mat(xv.rows, wv.rows);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    kern::matvec(wv.data.data(), xv.row_ptr(i), n.val.row_ptr(i), wv.rows,
                 wv.cols);
    for (std::size_t j = 0; j < wv.rows; ++j) n.val(i, j) += bv(0, j);
  }
  return push(std::move(n));
}

int Tape::linear_const(int x, const Mat& a) {
  const Mat& xv = v(x);
  check(xv.cols == a.cols, "linear_const: input " + shape_str(xv) +
                               " incompatible with matrix " + shape_str(a));
  Node n;
  n.op = Op::LinearConst;
  n.a = x;
  n.aux = a;
  n.val = Mat(xv.rows, a.rows);
  for (std::size_t i = 0; i < xv.rows; ++i)
    kern::matvec(a.data.data(), xv.row_ptr(i), n.val.row_ptr(i), a.rows,
                 a.cols);
  return push(std::move(n));
}

#define MHFLOW_UNARY(method, opcode, expr)                 \
  int Tape::method(int x) {                                \
    const Mat& xv = v(x);                                  \
    Node n;                                                \
    n.op = opcode;                                         \
    n.a = x;                                               \
    n.val = Mat(xv.rows, xv.cols);                         \
    for (std::size_t i = 0; i < xv.size(); ++i) {          \
      double e = xv.data[i];                               \
      n.val.data[i] = (expr);                              \
    }                                                      \
    return push(std::move(n));                             \
  }

MHFLOW_UNARY(tanh_, Op::Tanh, std::tanh(e))
MHFLOW_UNARY(exp_, Op::Exp, std::exp(e))
MHFLOW_UNARY(log_, Op::Log, std::log(e))
MHFLOW_UNARY(sqrt_, Op::Sqrt, std::sqrt(e))
MHFLOW_UNARY(cos_, Op::Cos, std::cos(e))
MHFLOW_UNARY(logistic, Op::Logistic, logistic_fn(e))
MHFLOW_UNARY(softplus, Op::Softplus, stable_softplus(e))
MHFLOW_UNARY(min0, Op::Min0, std::min(e, 0.0))
MHFLOW_UNARY(neg, Op::Neg, -e)

#undef MHFLOW_UNARY

int Tape::leaky_relu(int x, double slope) {
  const Mat& xv = v(x);
  Node n;
  n.op = Op::LeakyRelu;
  n.a = x;
  n.scalar = slope;
  n.val = Mat(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double e = xv.data[i];
    n.val.data[i] = e > 0 ? e : slope * e;
  }
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Mat& av = v(a);
  const Mat& bv = v(b);
  check(av.same_shape(bv),
        "mul: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Node n;
  n.op = Op::Mul;
  n.a = a;
  n.b = b;
  n.val = Mat(av.rows, av.cols);
  kern::mul(av.data.data(), bv.data.data(), n.val.data.data(), av.size());
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Mat& av = v(a);
  const Mat& bv = v(b);
  check(av.same_shape(bv),
        "add: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Node n;
  n.op = Op::Add;
  n.a = a;
  n.b = b;
  n.val = av;
  kern::axpy(1.0, bv.data.data(), n.val.data.data(), av.size());
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Mat& av = v(a);
  const Mat& bv = v(b);
  check(av.same_shape(bv),
        "sub: shape mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Node n;
  n.op = Op::Sub;
  n.a = a;
  n.b = b;
  n.val = av;
  kern::axpy(-1.0, bv.data.data(), n.val.data.data(), av.size());
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  Node n;
  n.op = Op::Scale;
  n.a = x;
  n.scalar = c;
  n.val = v(x);
  kern::scale(c, n.val.data.data(), n.val.size());
  return push(std::move(n));
}

int Tape::add_const(int x, double c) {
  Node n;
  n.op = Op::AddConst;
  n.a = x;
  n.scalar = c;
  n.val = v(x);
  for (double& e : n.val.data) e += c;
  return push(std::move(n));
}

int Tape::add_row_const(int x, const Mat& row) {
  const Mat& xv = v(x);
  check(row.rows == 1 && row.cols == xv.cols,
        "add_row_const: row " + shape_str(row) + " vs input " + shape_str(xv));
  Node n;
  n.op = Op::AddRowConst;
  n.a = x;
  n.aux = row;
  n.val = xv;
  for (std::size_t i = 0; i < xv.rows; ++i)
    kern::axpy(1.0, row.data.data(), n.val.row_ptr(i), xv.cols);
  return push(std::move(n));
}

int Tape::mul_row_const(int x, const Mat& row) {
  const Mat& xv = v(x);
  check(row.rows == 1 && row.cols == xv.cols,
        "mul_row_const: row " + shape_str(row) + " vs input " + shape_str(xv));
  Node n;
  n.op = Op::MulRowConst;
  n.a = x;
  n.aux = row;
  n.val = Mat(xv.rows, xv.cols);
  for (std::size_t i = 0; i < xv.rows; ++i)
    kern::mul(xv.row_ptr(i), row.data.data(), n.val.row_ptr(i), xv.cols);
  return push(std::move(n));
}

int Tape::add_col_broadcast(int x, int col) {
  const Mat& xv = v(x);
  const Mat& cv = v(col);
  check(cv.cols == 1 && cv.rows == xv.rows, "add_col_broadcast: column " +
                                                shape_str(cv) + " vs input " +
                                                shape_str(xv));
  Node n;
  n.op = Op::AddColBroadcast;
  n.a = x;
  n.b = col;
  n.val = xv;
  for (std::size_t i = 0; i < xv.rows; ++i) {
    double c = cv(i, 0);
    for (std::size_t j = 0; j < xv.cols; ++j) n.val(i, j) += c;
  }
  return push(std::move(n));
}

int Tape::scalar_add(int x, int s) {
  const Mat& xv = v(x);
  const Mat& sv = v(s);
  check(sv.rows == 1 && sv.cols == 1,
        "scalar_add: scalar operand must be 1x1, got " + shape_str(sv));
  Node n;
  n.op = Op::ScalarAdd;
  n.a = x;
  n.b = s;
  n.val = xv;
  const double c = sv(0, 0);
  for (double& e : n.val.data) e += c;
  return push(std::move(n));
}

int Tape::scalar_mul(int x, int s) {
  const Mat& xv = v(x);
  const Mat& sv = v(s);
  check(sv.rows == 1 && sv.cols == 1,
        "scalar_mul: scalar operand must be 1x1, got " + shape_str(sv));
  Node n;
  n.op = Op::ScalarMul;
  n.a = x;
  n.b = s;
  n.val = xv;
  kern::scale(sv(0, 0), n.val.data.data(), n.val.size());
  return push(std::move(n));
}

int Tape::sum_cols(int x) {
  const Mat& xv = v(x);
  Node n;
  n.op = Op::SumCols;
  n.a = x;
  n.val = Mat(xv.rows, 1);
  for (std::size_t i = 0; i < xv.rows; ++i)
    n.val(i, 0) = kern::sum(xv.row_ptr(i), xv.cols);
  return push(std::move(n));
}

int Tape::sum_all(int x) {
  const Mat& xv = v(x);
  Node n;
  n.op = Op::SumAll;
  n.a = x;
  n.val = Mat(1, 1);
  n.val(0, 0) = kern::sum(xv.data.data(), xv.size());
  return push(std::move(n));
}

int Tape::mean_all(int x) {
  const Mat& xv = v(x);
  check(xv.size() > 0, "mean_all: empty input");
  return scale(sum_all(x), 1.0 / double(xv.size()));
}

int Tape::logsumexp_cols(int x) {
  const Mat& xv = v(x);
  check(xv.cols > 0, "logsumexp_cols: empty rows");
  Node n;
  n.op = Op::LogSumExpCols;
  n.a = x;
  n.val = Mat(xv.rows, 1);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    double m = xv(i, 0);
    for (std::size_t j = 1; j < xv.cols; ++j) m = std::max(m, xv(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < xv.cols; ++j) s += std::exp(xv(i, j) - m);
    n.val(i, 0) = m + std::log(s);
  }
  return push(std::move(n));
}

int Tape::min_cols(int x) {
  const Mat& xv = v(x);
  check(xv.cols > 0, "min_cols: empty rows");
  Node n;
  n.op = Op::MinCols;
  n.a = x;
  n.val = Mat(xv.rows, 1);
  n.idx.resize(xv.rows);
  for (std::size_t i = 0; i < xv.rows; ++i) {
    std::size_t arg = 0;
    double best = xv(i, 0);
    for (std::size_t j = 1; j < xv.cols; ++j) {
      if (xv(i, j) < best) {
        best = xv(i, j);
        arg = j;
      }
    }
    n.val(i, 0) = best;
    n.idx[i] = int(arg);
  }
  return push(std::move(n));
}

int Tape::gather_cols(int x, std::vector<int> idx) {
  const Mat& xv = v(x);
  for (int j : idx)
    check(j >= 0 && std::size_t(j) < xv.cols,
          "gather_cols: index out of range");
  Node n;
  n.op = Op::GatherCols;
  n.a = x;
  n.val = Mat(xv.rows, idx.size());
  for (std::size_t i = 0; i < xv.rows; ++i)
    for (std::size_t j = 0; j < idx.size(); ++j)
      n.val(i, j) = xv(i, std::size_t(idx[j]));
  n.idx = std::move(idx);
  return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
  const Mat& av = v(a);
  const Mat& bv = v(b);
  check(av.rows == bv.rows,
        "concat_cols: row mismatch " + shape_str(av) + " vs " + shape_str(bv));
  Node n;
  n.op = Op::ConcatCols;
  n.a = a;
  n.b = b;
  n.val = Mat(av.rows, av.cols + bv.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    for (std::size_t j = 0; j < av.cols; ++j) n.val(i, j) = av(i, j);
    for (std::size_t j = 0; j < bv.cols; ++j)
      n.val(i, av.cols + j) = bv(i, j);
  }
  return push(std::move(n));
}

const Mat& Tape::grad(int id) const {
  const Node& n = nodes_[std::size_t(id)];
  check(n.grad.size() == n.val.size(), "grad requested before backward()");
  return n.grad;
}

void Tape::backward(int loss) {
  Node& ln = nodes_[std::size_t(loss)];
  check(ln.val.rows == 1 && ln.val.cols == 1,
        "backward: loss node must be 1x1, got " + shape_str(ln.val));
  for (Node& n : nodes_) n.grad = Mat(n.val.rows, n.val.cols);
  ln.grad(0, 0) = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = nodes_[std::size_t(id)];
    if (n.grad.size() == 0) continue;
    const Mat& g = n.grad;
    switch (n.op) {
      case Op::Input:
      case Op::Param:
        break;
      case Op::Affine: {
        Node& xn = nodes_[std::size_t(n.a)];
        Node& wn = nodes_[std::size_t(n.b)];
        Node& bn = nodes_[std::size_t(n.c)];
        const Mat& xv = xn.val;
        const Mat& wv = wn.val;
        for (std::size_t i = 0; i < xv.rows; ++i) {
          kern::matvec_t_acc(wv.data.data(), g.row_ptr(i), xn.grad.row_ptr(i),
                             wv.rows, wv.cols);
          kern::ger_acc(wn.grad.data.data(), g.row_ptr(i), xv.row_ptr(i),
                        wv.rows, wv.cols);
          kern::axpy(1.0, g.row_ptr(i), bn.grad.data.data(), wv.rows);
        }
        break;
      }
      case Op::LinearConst: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < xn.val.rows; ++i)
          kern::matvec_t_acc(n.aux.data.data(), g.row_ptr(i),
                             xn.grad.row_ptr(i), n.aux.rows, n.aux.cols);
        break;
      }
      case Op::Tanh: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i) {
          double y = n.val.data[i];
          xn.grad.data[i] += g.data[i] * (1.0 - y * y);
        }
        break;
      }
      case Op::Exp: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] += g.data[i] * n.val.data[i];
        break;
      }
      case Op::Log: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] += g.data[i] / xn.val.data[i];
        break;
      }
      case Op::Sqrt: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] += g.data[i] * 0.5 / n.val.data[i];
        break;
      }
      case Op::Cos: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] -= g.data[i] * std::sin(xn.val.data[i]);
        break;
      }
      case Op::Logistic: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i) {
          double y = n.val.data[i];
          xn.grad.data[i] += g.data[i] * y * (1.0 - y);
        }
        break;
      }
      case Op::Softplus: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] += g.data[i] * logistic_fn(xn.val.data[i]);
        break;
      }
      case Op::LeakyRelu: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          xn.grad.data[i] +=
              g.data[i] * (xn.val.data[i] > 0 ? 1.0 : n.scalar);
        break;
      }
      case Op::Min0: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < g.size(); ++i)
          if (xn.val.data[i] < 0) xn.grad.data[i] += g.data[i];
        break;
      }
      case Op::Mul: {
        Node& an = nodes_[std::size_t(n.a)];
        Node& bn = nodes_[std::size_t(n.b)];
        for (std::size_t i = 0; i < g.size(); ++i) {
          an.grad.data[i] += g.data[i] * bn.val.data[i];
          bn.grad.data[i] += g.data[i] * an.val.data[i];
        }
        break;
      }
      case Op::Add: {
        kern::axpy(1.0, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        kern::axpy(1.0, g.data.data(),
                   nodes_[std::size_t(n.b)].grad.data.data(), g.size());
        break;
      }
      case Op::Sub: {
        kern::axpy(1.0, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        kern::axpy(-1.0, g.data.data(),
                   nodes_[std::size_t(n.b)].grad.data.data(), g.size());
        break;
      }
      case Op::Neg: {
        kern::axpy(-1.0, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        break;
      }
      case Op::Scale: {
        kern::axpy(n.scalar, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        break;
      }
      case Op::AddConst: {
        kern::axpy(1.0, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        break;
      }
      case Op::AddRowConst: {
        kern::axpy(1.0, g.data.data(),
                   nodes_[std::size_t(n.a)].grad.data.data(), g.size());
        break;
      }
      case Op::MulRowConst: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < n.val.rows; ++i)
          for (std::size_t j = 0; j < n.val.cols; ++j)
            xn.grad(i, j) += g(i, j) * n.aux(0, j);
        break;
      }
      case Op::AddColBroadcast: {
        Node& xn = nodes_[std::size_t(n.a)];
        Node& cn = nodes_[std::size_t(n.b)];
        kern::axpy(1.0, g.data.data(), xn.grad.data.data(), g.size());
        for (std::size_t i = 0; i < n.val.rows; ++i)
          cn.grad(i, 0) += kern::sum(g.row_ptr(i), n.val.cols);
        break;
      }
      case Op::ScalarAdd: {
        Node& xn = nodes_[std::size_t(n.a)];
        Node& sn = nodes_[std::size_t(n.b)];
        kern::axpy(1.0, g.data.data(), xn.grad.data.data(), g.size());
        sn.grad(0, 0) += kern::sum(g.data.data(), g.size());
        break;
      }
      case Op::ScalarMul: {
        Node& xn = nodes_[std::size_t(n.a)];
        Node& sn = nodes_[std::size_t(n.b)];
        kern::axpy(sn.val(0, 0), g.data.data(), xn.grad.data.data(), g.size());
        sn.grad(0, 0) += kern::dot(g.data.data(), xn.val.data.data(), g.size());
        break;
      }
      case Op::SumCols: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < xn.val.rows; ++i) {
          double gi = g(i, 0);
          for (std::size_t j = 0; j < xn.val.cols; ++j) xn.grad(i, j) += gi;
        }
        break;
      }
      case Op::SumAll: {
        Node& xn = nodes_[std::size_t(n.a)];
        double g0 = g(0, 0);
        for (double& e : xn.grad.data) e += g0;
        break;
      }
      case Op::LogSumExpCols: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < xn.val.rows; ++i) {
          double gi = g(i, 0);
          double lse = n.val(i, 0);
          for (std::size_t j = 0; j < xn.val.cols; ++j)
            xn.grad(i, j) += gi * std::exp(xn.val(i, j) - lse);
        }
        break;
      }
      case Op::MinCols: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < xn.val.rows; ++i)
          xn.grad(i, std::size_t(n.idx[i])) += g(i, 0);
        break;
      }
      case Op::GatherCols: {
        Node& xn = nodes_[std::size_t(n.a)];
        for (std::size_t i = 0; i < n.val.rows; ++i)
          for (std::size_t j = 0; j < n.idx.size(); ++j)
            xn.grad(i, std::size_t(n.idx[j])) += g(i, j);
        break;
      }
      case Op::ConcatCols: {
        Node& an = nodes_[std::size_t(n.a)];
        Node& bn = nodes_[std::size_t(n.b)];
        for (std::size_t i = 0; i < n.val.rows; ++i) {
          for (std::size_t j = 0; j < an.val.cols; ++j)
            an.grad(i, j) += g(i, j);
          for (std::size_t j = 0; j < bn.val.cols; ++j)
            bn.grad(i, j) += g(i, an.val.cols + j);
        }
        break;
      }
    }
  }
}

std::map<std::string, Mat> Tape::param_grads() const {
  std::map<std::string, Mat> out;
  for (const auto& [name, id] : param_ids_) {
    const Node& n = nodes_[std::size_t(id)];
    out[name] = n.grad.size() == n.val.size()
                    ? n.grad
                    : Mat(n.val.rows, n.val.cols);
  }
  return out;
}

std::vector<double> Tape::flat_grad(const ParamVector& pv) const {
  std::vector<double> g(pv.size(), 0.0);
  for (const auto& [name, id] : param_ids_) {
    const ParamView* found = pv.find(name);
    if (found == nullptr) continue;
    const ParamView& view = *found;
    const Node& n = nodes_[std::size_t(id)];
    check(view.rows == n.val.rows && view.cols == n.val.cols,
          "flat_grad: view shape mismatch for " + name);
    if (n.grad.size() == n.val.size())
      for (std::size_t i = 0; i < view.size(); ++i)
        g[view.offset + i] = n.grad.data[i];
  }
  return g;
}

GradRecord value_and_grad(const Program& prog, const ParamVector& params) {
  Tape tape;
  int loss = prog(tape, params);
  tape.backward(loss);
  GradRecord rec;
  rec.loss = tape.val(loss)(0, 0);
  rec.grad = tape.flat_grad(params);
  for (double g : rec.grad)
    check(std::isfinite(g), "non-finite gradient entry");
  return rec;
}

std::vector<double> finite_diff_grad(
    const std::function<double(const ParamVector&)>& f, const ParamVector& params,
    double step) {
  check(step > 0, "finite_diff_grad: step must be positive");
  ParamVector p = params;
  std::vector<double> g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    double orig = p.flat()[i];
    p.flat()[i] = orig + step;
    double up = f(p);
    p.flat()[i] = orig - step;
    double down = f(p);
    p.flat()[i] = orig;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

void adam_step(ParamVector& params, const std::vector<double>& grad,
               AdamState& state, const AdamConfig& cfg) {
  const std::size_t p = params.size();
  check(grad.size() == p, "adam_step: gradient length mismatch");
  for (double g : grad)
    check(std::isfinite(g), "adam_step: non-finite gradient entry");
  if (state.m.empty()) {
    state.m.assign(p, 0.0);
    state.v.assign(p, 0.0);
  }
  check(state.m.size() == p && state.v.size() == p,
        "adam_step: state length mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  auto& vals = params.flat();
  for (std::size_t i = 0; i < p; ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    vals[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace mhflow::ad
