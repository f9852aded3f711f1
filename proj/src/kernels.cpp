#include "mhflow/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace mhflow::kern {

namespace {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*mul)(const double*, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
};

constexpr Vtable kScalar{detail::dot_scalar, detail::sum_scalar,
                         detail::axpy_scalar, detail::mul_scalar,
                         detail::scale_scalar};
constexpr Vtable kAvx2{detail::dot_avx2, detail::sum_avx2, detail::axpy_avx2,
                       detail::mul_avx2, detail::scale_avx2};

Backend g_backend = Backend::Scalar;
const Vtable* g_vt = &kScalar;

Backend pick_initial() {
  if (const char* env = std::getenv("MHFLOW_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
    if (std::strcmp(env, "avx2") == 0 && detail::avx2_available())
      return Backend::Avx2;
    return Backend::Scalar;
  }
  return detail::avx2_available() ? Backend::Avx2 : Backend::Scalar;
}

struct Init {
  Init() {
    g_backend = pick_initial();
    g_vt = g_backend == Backend::Avx2 ? &kAvx2 : &kScalar;
  }
} g_init;

}  // namespace

Backend active_backend() { return g_backend; }

const char* backend_name() {
  return g_backend == Backend::Avx2 ? "avx2" : "scalar";
}

bool set_backend(Backend b) {
  if (b == Backend::Avx2 && !detail::avx2_available()) return false;
  g_backend = b;
  g_vt = b == Backend::Avx2 ? &kAvx2 : &kScalar;
  return true;
}

double dot(const double* a, const double* b, std::size_t n) {
  return g_vt->dot(a, b, n);
}
double sum(const double* x, std::size_t n) { return g_vt->sum(x, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  g_vt->axpy(alpha, x, y, n);
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  g_vt->mul(a, b, out, n);
}
void scale(double alpha, double* x, std::size_t n) { g_vt->scale(alpha, x, n); }

void matvec(const double* w, const double* x, double* y, std::size_t rows,
            std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w + r * cols, x, cols);
}

void matvec_t_acc(const double* w, const double* g, double* out,
                  std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(g[r], w + r * cols, out, cols);
}

void ger_acc(double* w, const double* g, const double* x, std::size_t rows,
             std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) axpy(g[r], x, w + r * cols, cols);
}

}  // namespace mhflow::kern
