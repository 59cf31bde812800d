#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace hashconv {

// Dense row-major matrix of feature columns. Rows are channels, columns are
// voxels (one column per non-empty voxel, in data-index order). The float
// instantiation is the storage format; the double one exists for
// finite-difference test paths.
template <typename T>
struct FeatureMatrixT {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<T> values;  // row-major, rows*cols entries

    FeatureMatrixT() = default;
    FeatureMatrixT(std::int64_t r, std::int64_t c)
        : rows(r), cols(c), values(static_cast<std::size_t>(r * c), T(0)) {}

    T& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols + c)]; }
    const T& at(std::int64_t r, std::int64_t c) const {
        return values[static_cast<std::size_t>(r * cols + c)];
    }

    T* row_ptr(std::int64_t r) { return values.data() + r * cols; }
    const T* row_ptr(std::int64_t r) const { return values.data() + r * cols; }

    void fill(T v) { values.assign(values.size(), v); }

    bool all_finite() const {
        for (const T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool operator==(const FeatureMatrixT&) const = default;
};

using FeatureMatrix = FeatureMatrixT<float>;

template <typename To, typename From>
FeatureMatrixT<To> convert_matrix(const FeatureMatrixT<From>& m) {
    FeatureMatrixT<To> out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.values.size(); ++i) out.values[i] = static_cast<To>(m.values[i]);
    return out;
}

}  // namespace hashconv
