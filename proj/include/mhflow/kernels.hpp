#pragma once

#include <cstddef>

// Low-level dense kernels used by the autodiff tape, the quadrature
// oracles and the chain diagnostics. Every operation has a scalar
// reference implementation and (on x86-64 hosts with AVX2+FMA) a
// vectorized one; the backend is picked once at startup and can be
// forced with MHFLOW_SIMD=scalar|avx2.

namespace mhflow::kern {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
const char* backend_name();

// Force a backend (used by tests and the env override). Returns false
// if the requested backend is not available on this machine.
bool set_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);
double sum(const double* x, std::size_t n);
// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);
// out = a * b elementwise
void mul(const double* a, const double* b, double* out, std::size_t n);
// x *= alpha
void scale(double alpha, double* x, std::size_t n);

// Dense helpers layered on the primitives above. W is rows x cols,
// row-major.
// y = W x
void matvec(const double* w, const double* x, double* y,
            std::size_t rows, std::size_t cols);
// out += W^T g
void matvec_t_acc(const double* w, const double* g, double* out,
                  std::size_t rows, std::size_t cols);
// W += g x^T
void ger_acc(double* w, const double* g, const double* x,
             std::size_t rows, std::size_t cols);

namespace detail {
double dot_scalar(const double* a, const double* b, std::size_t n);
double sum_scalar(const double* x, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void mul_scalar(const double* a, const double* b, double* out, std::size_t n);
void scale_scalar(double alpha, double* x, std::size_t n);
bool avx2_available();
double dot_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void mul_avx2(const double* a, const double* b, double* out, std::size_t n);
void scale_avx2(double alpha, double* x, std::size_t n);
}  // namespace detail

}  // namespace mhflow::kern
