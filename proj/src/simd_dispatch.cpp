#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "btsumm/simd.hpp"

namespace btsumm::simd {

namespace {

bool detect_avx2() {
#if BTSUMM_HAVE_AVX2_TU
#if defined(__GNUC__) || defined(__clang__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
#else
    return false;
#endif
}

Backend initial_backend() {
    const char* env = std::getenv("BTSUMM_KERNEL_BACKEND");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return Backend::kScalar;
        if (std::strcmp(env, "avx2") == 0 && detect_avx2()) return Backend::kAvx2;
    }
    return detect_avx2() ? Backend::kAvx2 : Backend::kScalar;
}

std::atomic<Backend> g_backend{initial_backend()};

}  // namespace

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }

void force_backend(Backend b) {
    if (b == Backend::kAvx2 && !detect_avx2()) b = Backend::kScalar;
    g_backend.store(b, std::memory_order_relaxed);
}

bool avx2_available() { return detect_avx2(); }

std::string backend_name(Backend b) {
    return b == Backend::kAvx2 ? "avx2" : "scalar";
}

namespace {
inline bool use_avx2() {
#if BTSUMM_HAVE_AVX2_TU
    return active_backend() == Backend::kAvx2;
#else
    return false;
#endif
}
}  // namespace

#if BTSUMM_HAVE_AVX2_TU
#define BTSUMM_DISPATCH(name, ...) \
    return use_avx2() ? detail::name##_avx2(__VA_ARGS__) : detail::name##_scalar(__VA_ARGS__)
#else
#define BTSUMM_DISPATCH(name, ...) return detail::name##_scalar(__VA_ARGS__)
#endif

float dot(const float* a, const float* b, size_t n) { BTSUMM_DISPATCH(dot, a, b, n); }
double dot(const double* a, const double* b, size_t n) { BTSUMM_DISPATCH(dot, a, b, n); }

void axpy(float alpha, const float* x, float* y, size_t n) { BTSUMM_DISPATCH(axpy, alpha, x, y, n); }
void axpy(double alpha, const double* x, double* y, size_t n) { BTSUMM_DISPATCH(axpy, alpha, x, y, n); }

void scale(float alpha, float* x, size_t n) { BTSUMM_DISPATCH(scale, alpha, x, n); }
void scale(double alpha, double* x, size_t n) { BTSUMM_DISPATCH(scale, alpha, x, n); }

#if BTSUMM_HAVE_AVX2_TU
void add(const float* a, const float* b, float* out, size_t n) {
    use_avx2() ? detail::add_avx2(a, b, out, n) : detail::add_scalar_k(a, b, out, n);
}
void add(const double* a, const double* b, double* out, size_t n) {
    use_avx2() ? detail::add_avx2(a, b, out, n) : detail::add_scalar_k(a, b, out, n);
}
void mul(const float* a, const float* b, float* out, size_t n) {
    use_avx2() ? detail::mul_avx2(a, b, out, n) : detail::mul_scalar_k(a, b, out, n);
}
void mul(const double* a, const double* b, double* out, size_t n) {
    use_avx2() ? detail::mul_avx2(a, b, out, n) : detail::mul_scalar_k(a, b, out, n);
}
#else
void add(const float* a, const float* b, float* out, size_t n) { detail::add_scalar_k(a, b, out, n); }
void add(const double* a, const double* b, double* out, size_t n) { detail::add_scalar_k(a, b, out, n); }
void mul(const float* a, const float* b, float* out, size_t n) { detail::mul_scalar_k(a, b, out, n); }
void mul(const double* a, const double* b, double* out, size_t n) { detail::mul_scalar_k(a, b, out, n); }
#endif

void mul_acc(const float* a, const float* b, float* y, size_t n) { BTSUMM_DISPATCH(mul_acc, a, b, y, n); }
void mul_acc(const double* a, const double* b, double* y, size_t n) { BTSUMM_DISPATCH(mul_acc, a, b, y, n); }

void matvec(const float* a, const float* x, float* y, size_t m, size_t n, bool accumulate) {
    BTSUMM_DISPATCH(matvec, a, x, y, m, n, accumulate);
}
void matvec(const double* a, const double* x, double* y, size_t m, size_t n, bool accumulate) {
    BTSUMM_DISPATCH(matvec, a, x, y, m, n, accumulate);
}

void matvec_t_acc(const float* a, const float* x, float* y, size_t m, size_t n) {
    BTSUMM_DISPATCH(matvec_t_acc, a, x, y, m, n);
}
void matvec_t_acc(const double* a, const double* x, double* y, size_t m, size_t n) {
    BTSUMM_DISPATCH(matvec_t_acc, a, x, y, m, n);
}

void outer_acc(const float* g, const float* x, float* a, size_t m, size_t n) {
    BTSUMM_DISPATCH(outer_acc, g, x, a, m, n);
}
void outer_acc(const double* g, const double* x, double* a, size_t m, size_t n) {
    BTSUMM_DISPATCH(outer_acc, g, x, a, m, n);
}

void gemm_tn(const float* a, const float* b, float* c, size_t m, size_t k, size_t n) {
    BTSUMM_DISPATCH(gemm_tn, a, b, c, m, k, n);
}
void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    BTSUMM_DISPATCH(gemm_tn, a, b, c, m, k, n);
}

float reduce_sum(const float* x, size_t n) { BTSUMM_DISPATCH(reduce_sum, x, n); }
double reduce_sum(const double* x, size_t n) { BTSUMM_DISPATCH(reduce_sum, x, n); }

float reduce_max(const float* x, size_t n) { BTSUMM_DISPATCH(reduce_max, x, n); }
double reduce_max(const double* x, size_t n) { BTSUMM_DISPATCH(reduce_max, x, n); }

void vexp(const float* x, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}
void vexp(const double* x, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}
void vtanh(const float* x, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}
void vtanh(const double* x, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = std::tanh(x[i]);
}
void vsigmoid(const float* x, float* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = 1.0f / (1.0f + std::exp(-x[i]));
}
void vsigmoid(const double* x, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
}

}  // namespace btsumm::simd
