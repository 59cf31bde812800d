#include "hashconv/gemm.hpp"

#include <cstring>
#include <stdexcept>

#include "hashconv/threading.hpp"

namespace hashconv {

namespace {

// One full output row per task: row i of c accumulates b's rows scaled by
// a[i,k], k ascending. The inner j loop is unit-stride on both operands.
template <typename T>
inline void row_axpy_product(const T* a, const T* b, T* c, std::int64_t i, std::int64_t k,
                             std::int64_t cb) {
    T* crow = c + i * cb;
    for (std::int64_t j = 0; j < cb; ++j) crow[j] = T(0);
    const T* arow = a + i * k;
    for (std::int64_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        if (av == T(0)) continue;
        const T* brow = b + kk * cb;
        for (std::int64_t j = 0; j < cb; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace

template <typename T>
void matmul(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k, std::int64_t cb) {
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < ra; ++i) row_axpy_product(a, b, c, i, k, cb);
}

template <typename T>
void matmul_trans_a(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k,
                    std::int64_t cb) {
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t r = 0; r < k; ++r) {
        T* crow = c + r * cb;
        for (std::int64_t j = 0; j < cb; ++j) crow[j] = T(0);
        for (std::int64_t i = 0; i < ra; ++i) {
            const T av = a[i * k + r];
            if (av == T(0)) continue;
            const T* brow = b + i * cb;
            for (std::int64_t j = 0; j < cb; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void matmul_trans_b(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k,
                    std::int64_t rb) {
    const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
    for (std::int64_t i = 0; i < ra; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * rb;
        for (std::int64_t j = 0; j < rb; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = acc;
        }
    }
}

template <typename T>
FeatureMatrixT<T> matmul(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
    FeatureMatrixT<T> c(a.rows, b.cols);
    matmul(a.values.data(), b.values.data(), c.values.data(), a.rows, a.cols, b.cols);
    return c;
}

template <typename T>
FeatureMatrixT<T> matmul_trans_a(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b) {
    if (a.rows != b.rows) throw std::invalid_argument("matmul_trans_a: shape mismatch");
    FeatureMatrixT<T> c(a.cols, b.cols);
    matmul_trans_a(a.values.data(), b.values.data(), c.values.data(), a.rows, a.cols, b.cols);
    return c;
}

template <typename T>
FeatureMatrixT<T> matmul_trans_b(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b) {
    if (a.cols != b.cols) throw std::invalid_argument("matmul_trans_b: shape mismatch");
    FeatureMatrixT<T> c(a.rows, b.rows);
    matmul_trans_b(a.values.data(), b.values.data(), c.values.data(), a.rows, a.cols, b.rows);
    return c;
}

namespace serial {
template <typename T>
void matmul(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k, std::int64_t cb) {
    for (std::int64_t i = 0; i < ra; ++i) row_axpy_product(a, b, c, i, k, cb);
}
}  // namespace serial

#define HASHCONV_INSTANTIATE_GEMM(T)                                                        \
    template void matmul<T>(const T*, const T*, T*, std::int64_t, std::int64_t,            \
                            std::int64_t);                                                  \
    template void matmul_trans_a<T>(const T*, const T*, T*, std::int64_t, std::int64_t,    \
                                    std::int64_t);                                         \
    template void matmul_trans_b<T>(const T*, const T*, T*, std::int64_t, std::int64_t,    \
                                    std::int64_t);                                         \
    template FeatureMatrixT<T> matmul<T>(const FeatureMatrixT<T>&, const FeatureMatrixT<T>&); \
    template FeatureMatrixT<T> matmul_trans_a<T>(const FeatureMatrixT<T>&,                 \
                                                 const FeatureMatrixT<T>&);                \
    template FeatureMatrixT<T> matmul_trans_b<T>(const FeatureMatrixT<T>&,                 \
                                                 const FeatureMatrixT<T>&);                \
    template void serial::matmul<T>(const T*, const T*, T*, std::int64_t, std::int64_t,    \
                                    std::int64_t);

HASHCONV_INSTANTIATE_GEMM(float)
HASHCONV_INSTANTIATE_GEMM(double)

#undef HASHCONV_INSTANTIATE_GEMM

}  // namespace hashconv
