#pragma once

#include <cstdint>

#include "hashconv/feature_matrix.hpp"

namespace hashconv {

// Matrix products on row-major buffers. Each output element accumulates over
// k strictly in ascending order, and parallel variants split work over whole
// output rows, so results are bit-identical for any worker count and match
// the serial references exactly.

// c = a * b, a: ra x k, b: k x cb, c: ra x cb
template <typename T>
void matmul(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k, std::int64_t cb);

// c = a^T * b, a: ra x k (c is k x cb)
template <typename T>
void matmul_trans_a(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k,
                    std::int64_t cb);

// c = a * b^T, a: ra x k, b: rb x k (c is ra x rb)
template <typename T>
void matmul_trans_b(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k,
                    std::int64_t rb);

template <typename T>
FeatureMatrixT<T> matmul(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b);
template <typename T>
FeatureMatrixT<T> matmul_trans_a(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b);
template <typename T>
FeatureMatrixT<T> matmul_trans_b(const FeatureMatrixT<T>& a, const FeatureMatrixT<T>& b);

namespace serial {
// Single-threaded references with the same element-wise accumulation order.
template <typename T>
void matmul(const T* a, const T* b, T* c, std::int64_t ra, std::int64_t k, std::int64_t cb);
}  // namespace serial

}  // namespace hashconv
