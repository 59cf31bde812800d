#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace hashconv {

// Integer voxel coordinate. Axis order is x=0, y=1, z=2; for 2D domains the
// z component is always 0.
using Coord = std::array<std::int32_t, 3>;

struct Vec3 {
    float x = 0.0f, y = 0.0f, z = 0.0f;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(float s) const { return {x * s, y * s, z * s}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
};

inline float dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline float norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline Vec3 normalized(const Vec3& v) {
    const float n = norm(v);
    return n > 0.0f ? v * (1.0f / n) : Vec3{};
}

// Canonical data order: sort by (z, y, x). Data array columns follow this
// order everywhere, so per-voxel indices are reproducible.
inline bool coord_less_zyx(const Coord& a, const Coord& b) {
    if (a[2] != b[2]) return a[2] < b[2];
    if (a[1] != b[1]) return a[1] < b[1];
    return a[0] < b[0];
}

inline std::int64_t ipow(std::int64_t base, int exp) {
    std::int64_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

// Row-major flattening with x fastest: ((z*extent + y)*extent + x) in 3D,
// (y*extent + x) in 2D (z is 0 there).
inline std::int64_t flatten(const Coord& p, std::int64_t extent, int dim) {
    std::int64_t f = 0;
    for (int axis = dim - 1; axis >= 0; --axis) f = f * extent + p[axis];
    return f;
}

inline Coord unflatten(std::int64_t flat, std::int64_t extent, int dim) {
    Coord p{0, 0, 0};
    for (int axis = 0; axis < dim; ++axis) {
        p[axis] = static_cast<std::int32_t>(flat % extent);
        flat /= extent;
    }
    return p;
}

inline bool is_power_of_two(std::int64_t v) { return v > 0 && (v & (v - 1)) == 0; }

inline int int_log2(std::int64_t v) {
    int l = 0;
    while (v > 1) {
        v >>= 1;
        ++l;
    }
    return l;
}

}  // namespace hashconv
