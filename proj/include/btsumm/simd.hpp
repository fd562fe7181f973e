#pragma once

#include <cstddef>
#include <string>

// Data-parallel kernels behind all dense arithmetic in the project.
//
// Every kernel exists as a scalar reference implementation and, on x86
// machines with AVX2+FMA, as a vectorized variant. The backend is selected
// once at startup from CPUID and can be forced (BTSUMM_KERNEL_BACKEND=scalar
// or force_backend()) for equivalence testing. Scalar and SIMD variants may
// differ in the last bits because reduction order differs; tests bound the
// relative error.
namespace btsumm::simd {

enum class Backend { kScalar, kAvx2 };

Backend active_backend();
void force_backend(Backend b);
bool avx2_available();
std::string backend_name(Backend b);

// y = sum_i a[i] * b[i]
float dot(const float* a, const float* b, size_t n);
double dot(const double* a, const double* b, size_t n);

// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, size_t n);
void axpy(double alpha, const double* x, double* y, size_t n);

// x[i] *= alpha
void scale(float alpha, float* x, size_t n);
void scale(double alpha, double* x, size_t n);

// out[i] = a[i] + b[i]
void add(const float* a, const float* b, float* out, size_t n);
void add(const double* a, const double* b, double* out, size_t n);

// out[i] = a[i] * b[i]
void mul(const float* a, const float* b, float* out, size_t n);
void mul(const double* a, const double* b, double* out, size_t n);

// y[i] += a[i] * b[i]
void mul_acc(const float* a, const float* b, float* y, size_t n);
void mul_acc(const double* a, const double* b, double* y, size_t n);

// y = A x, A row-major m x n. If accumulate, y += A x.
void matvec(const float* a, const float* x, float* y, size_t m, size_t n, bool accumulate);
void matvec(const double* a, const double* x, double* y, size_t m, size_t n, bool accumulate);

// y += A^T x, A row-major m x n, x length m, y length n.
void matvec_t_acc(const float* a, const float* x, float* y, size_t m, size_t n);
void matvec_t_acc(const double* a, const double* x, double* y, size_t m, size_t n);

// A += g x^T (outer product), A row-major m x n, g length m, x length n.
void outer_acc(const float* g, const float* x, float* a, size_t m, size_t n);
void outer_acc(const double* g, const double* x, double* a, size_t m, size_t n);

// C = A^T B, A m x k, B m x n, C k x n, all row-major.
void gemm_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n);
void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

float reduce_sum(const float* x, size_t n);
double reduce_sum(const double* x, size_t n);

float reduce_max(const float* x, size_t n);
double reduce_max(const double* x, size_t n);

// Scalar-only transcendental helpers (no SIMD variant; kept here so callers
// have one home for elementwise math).
void vexp(const float* x, float* out, size_t n);
void vexp(const double* x, double* out, size_t n);
void vtanh(const float* x, float* out, size_t n);
void vtanh(const double* x, double* out, size_t n);
void vsigmoid(const float* x, float* out, size_t n);
void vsigmoid(const double* x, double* out, size_t n);

namespace detail {

// Scalar reference kernels, also used directly by the equivalence tests.
template <class T> T dot_scalar(const T* a, const T* b, size_t n);
template <class T> void axpy_scalar(T alpha, const T* x, T* y, size_t n);
template <class T> void scale_scalar(T alpha, T* x, size_t n);
template <class T> void add_scalar_k(const T* a, const T* b, T* out, size_t n);
template <class T> void mul_scalar_k(const T* a, const T* b, T* out, size_t n);
template <class T> void mul_acc_scalar(const T* a, const T* b, T* y, size_t n);
template <class T> void matvec_scalar(const T* a, const T* x, T* y, size_t m, size_t n, bool acc);
template <class T> void matvec_t_acc_scalar(const T* a, const T* x, T* y, size_t m, size_t n);
template <class T> void outer_acc_scalar(const T* g, const T* x, T* a, size_t m, size_t n);
template <class T> void gemm_tn_scalar(const T* a, const T* b, T* c, size_t m, size_t k, size_t n);
template <class T> T reduce_sum_scalar(const T* x, size_t n);
template <class T> T reduce_max_scalar(const T* x, size_t n);

#if BTSUMM_HAVE_AVX2_TU
float dot_avx2(const float* a, const float* b, size_t n);
double dot_avx2(const double* a, const double* b, size_t n);
void axpy_avx2(float alpha, const float* x, float* y, size_t n);
void axpy_avx2(double alpha, const double* x, double* y, size_t n);
void scale_avx2(float alpha, float* x, size_t n);
void scale_avx2(double alpha, double* x, size_t n);
void add_avx2(const float* a, const float* b, float* out, size_t n);
void add_avx2(const double* a, const double* b, double* out, size_t n);
void mul_avx2(const float* a, const float* b, float* out, size_t n);
void mul_avx2(const double* a, const double* b, double* out, size_t n);
void mul_acc_avx2(const float* a, const float* b, float* y, size_t n);
void mul_acc_avx2(const double* a, const double* b, double* y, size_t n);
void matvec_avx2(const float* a, const float* x, float* y, size_t m, size_t n, bool acc);
void matvec_avx2(const double* a, const double* x, double* y, size_t m, size_t n, bool acc);
void matvec_t_acc_avx2(const float* a, const float* x, float* y, size_t m, size_t n);
void matvec_t_acc_avx2(const double* a, const double* x, double* y, size_t m, size_t n);
void outer_acc_avx2(const float* g, const float* x, float* a, size_t m, size_t n);
void outer_acc_avx2(const double* g, const double* x, double* a, size_t m, size_t n);
void gemm_tn_avx2(const float* a, const float* b, float* c, size_t m, size_t k, size_t n);
void gemm_tn_avx2(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
float reduce_sum_avx2(const float* x, size_t n);
double reduce_sum_avx2(const double* x, size_t n);
float reduce_max_avx2(const float* x, size_t n);
double reduce_max_avx2(const double* x, size_t n);
#endif

}  // namespace detail
}  // namespace btsumm::simd
