#include <algorithm>
#include <cmath>

#include "btsumm/simd.hpp"

namespace btsumm::simd::detail {

template <class T>
T dot_scalar(const T* a, const T* b, size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    T s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <class T>
void axpy_scalar(T alpha, const T* x, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale_scalar(T alpha, T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

template <class T>
void add_scalar_k(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void mul_scalar_k(const T* a, const T* b, T* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void mul_acc_scalar(const T* a, const T* b, T* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void matvec_scalar(const T* a, const T* x, T* y, size_t m, size_t n, bool acc) {
    for (size_t r = 0; r < m; ++r) {
        T v = dot_scalar(a + r * n, x, n);
        y[r] = acc ? y[r] + v : v;
    }
}

template <class T>
void matvec_t_acc_scalar(const T* a, const T* x, T* y, size_t m, size_t n) {
    for (size_t r = 0; r < m; ++r) axpy_scalar(x[r], a + r * n, y, n);
}

template <class T>
void outer_acc_scalar(const T* g, const T* x, T* a, size_t m, size_t n) {
    for (size_t r = 0; r < m; ++r) axpy_scalar(g[r], x, a + r * n, n);
}

template <class T>
void gemm_tn_scalar(const T* a, const T* b, T* c, size_t m, size_t k, size_t n) {
    std::fill(c, c + k * n, T(0));
    // C[p, q] = sum_r A[r, p] * B[r, q]; accumulate row by row.
    for (size_t r = 0; r < m; ++r) {
        const T* arow = a + r * k;
        const T* brow = b + r * n;
        for (size_t p = 0; p < k; ++p) axpy_scalar(arow[p], brow, c + p * n, n);
    }
}

template <class T>
T reduce_sum_scalar(const T* x, size_t n) {
    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += x[i];
        s1 += x[i + 1];
        s2 += x[i + 2];
        s3 += x[i + 3];
    }
    T s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += x[i];
    return s;
}

template <class T>
T reduce_max_scalar(const T* x, size_t n) {
    T m = x[0];
    for (size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

template float dot_scalar<float>(const float*, const float*, size_t);
template double dot_scalar<double>(const double*, const double*, size_t);
template void axpy_scalar<float>(float, const float*, float*, size_t);
template void axpy_scalar<double>(double, const double*, double*, size_t);
template void scale_scalar<float>(float, float*, size_t);
template void scale_scalar<double>(double, double*, size_t);
template void add_scalar_k<float>(const float*, const float*, float*, size_t);
template void add_scalar_k<double>(const double*, const double*, double*, size_t);
template void mul_scalar_k<float>(const float*, const float*, float*, size_t);
template void mul_scalar_k<double>(const double*, const double*, double*, size_t);
template void mul_acc_scalar<float>(const float*, const float*, float*, size_t);
template void mul_acc_scalar<double>(const double*, const double*, double*, size_t);
template void matvec_scalar<float>(const float*, const float*, float*, size_t, size_t, bool);
template void matvec_scalar<double>(const double*, const double*, double*, size_t, size_t, bool);
template void matvec_t_acc_scalar<float>(const float*, const float*, float*, size_t, size_t);
template void matvec_t_acc_scalar<double>(const double*, const double*, double*, size_t, size_t);
template void outer_acc_scalar<float>(const float*, const float*, float*, size_t, size_t);
template void outer_acc_scalar<double>(const double*, const double*, double*, size_t, size_t);
template void gemm_tn_scalar<float>(const float*, const float*, float*, size_t, size_t, size_t);
template void gemm_tn_scalar<double>(const double*, const double*, double*, size_t, size_t, size_t);
template float reduce_sum_scalar<float>(const float*, size_t);
template double reduce_sum_scalar<double>(const double*, size_t);
template float reduce_max_scalar<float>(const float*, size_t);
template double reduce_max_scalar<double>(const double*, size_t);

}  // namespace btsumm::simd::detail
