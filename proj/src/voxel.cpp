#include "hashconv/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hashconv/rng.hpp"
#include "hashconv/threading.hpp"

namespace hashconv {

namespace {

struct SurfaceSample {
    std::int64_t voxel = 0;  // flattened (z,y,x) cell index
    Vec3 normal;
};

std::int32_t cell_of(float coord, std::int32_t res) {
    // normalized model space [-0.5, 0.5] -> [0, res)
    const float t = (coord + 0.5f) * static_cast<float>(res);
    auto c = static_cast<std::int32_t>(std::floor(t));
    return std::clamp(c, std::int32_t{0}, res - 1);
}

void check_resolution(std::int32_t res) {
    if (res < 4 || res > 65536 || !is_power_of_two(res))
        throw std::invalid_argument("resolution must be a power of two in [4, 65536]");
}

FeatureMatrix aggregate_normals(std::vector<SurfaceSample>& samples, std::vector<Coord>& coords,
                                std::int32_t res, int dim) {
    std::stable_sort(samples.begin(), samples.end(),
                     [](const SurfaceSample& a, const SurfaceSample& b) { return a.voxel < b.voxel; });
    coords.clear();
    std::vector<Vec3> means;
    std::size_t i = 0;
    while (i < samples.size()) {
        std::size_t j = i;
        double sx = 0, sy = 0, sz = 0;
        while (j < samples.size() && samples[j].voxel == samples[i].voxel) {
            sx += samples[j].normal.x;
            sy += samples[j].normal.y;
            sz += samples[j].normal.z;
            ++j;
        }
        coords.push_back(unflatten(samples[i].voxel, res, dim));
        const double len = std::sqrt(sx * sx + sy * sy + sz * sz);
        // cancelled normals stay the zero vector
        if (len < 1e-8) {
            means.push_back(Vec3{});
        } else {
            means.push_back(Vec3{static_cast<float>(sx / len), static_cast<float>(sy / len),
                                 static_cast<float>(sz / len)});
        }
        i = j;
    }
    FeatureMatrix features(3, static_cast<std::int64_t>(means.size()));
    for (std::int64_t c = 0; c < features.cols; ++c) {
        features.at(0, c) = means[static_cast<std::size_t>(c)].x;
        features.at(1, c) = means[static_cast<std::size_t>(c)].y;
        features.at(2, c) = means[static_cast<std::size_t>(c)].z;
    }
    return features;
}

}  // namespace

std::optional<std::int64_t> SparseVoxelSet::index_of(const Coord& p) const {
    const auto it = std::lower_bound(voxels.begin(), voxels.end(), p, coord_less_zyx);
    if (it == voxels.end() || *it != p) return std::nullopt;
    return it - voxels.begin();
}

SparseVoxelSet make_sparse_set(int dim, std::int32_t resolution, std::vector<Coord> coords,
                               FeatureMatrix features) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("dim must be 2 or 3");
    check_resolution(resolution);
    if (coords.empty()) throw std::invalid_argument("sparse voxel set must be non-empty");
    if (features.cols != static_cast<std::int64_t>(coords.size()))
        throw std::invalid_argument("feature column count must match voxel count");

    std::vector<std::int64_t> order(coords.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        return coord_less_zyx(coords[static_cast<std::size_t>(a)],
                              coords[static_cast<std::size_t>(b)]);
    });

    SparseVoxelSet s;
    s.dim = dim;
    s.resolution = resolution;
    s.level = int_log2(resolution);
    s.voxels.reserve(coords.size());
    s.features = FeatureMatrix(features.rows, features.cols);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Coord& p = coords[static_cast<std::size_t>(order[k])];
        for (int a = 0; a < 3; ++a) {
            const bool in_range = a < dim ? (p[a] >= 0 && p[a] < resolution) : p[a] == 0;
            if (!in_range) throw std::invalid_argument("voxel coordinate out of range");
        }
        if (!s.voxels.empty() && s.voxels.back() == p)
            throw std::invalid_argument("duplicate voxel coordinate");
        s.voxels.push_back(p);
        for (std::int64_t r = 0; r < features.rows; ++r)
            s.features.at(r, static_cast<std::int64_t>(k)) = features.at(r, order[k]);
    }
    return s;
}

InputModel normalize_model(const InputModel& model) {
    if (model.vertices.empty()) throw std::invalid_argument("empty input");
    Vec3 lo = model.vertices.front(), hi = model.vertices.front();
    for (const Vec3& v : model.vertices) {
        lo.x = std::min(lo.x, v.x), lo.y = std::min(lo.y, v.y), lo.z = std::min(lo.z, v.z);
        hi.x = std::max(hi.x, v.x), hi.y = std::max(hi.y, v.y), hi.z = std::max(hi.z, v.z);
    }
    const Vec3 center = (lo + hi) * 0.5f;
    float radius = 0.0f;
    for (const Vec3& v : model.vertices) radius = std::max(radius, norm(v - center));
    const float scale = radius > 1e-12f ? 0.5f / radius : 1.0f;

    InputModel out = model;
    for (Vec3& v : out.vertices) v = (v - center) * scale;
    return out;
}

SparseVoxelSet voxelize(const InputModel& model, const VoxelizeParams& params,
                        VoxelizeStats* stats) {
    check_resolution(params.resolution);
    if (model.vertices.empty()) throw std::invalid_argument("empty input");
    const std::int32_t res = params.resolution;
    const float half_voxel = 0.5f / static_cast<float>(res);

    VoxelizeStats local{};
    std::vector<SurfaceSample> samples;

    if (model.triangles.empty()) {
        if (model.point_normals.size() != model.vertices.size())
            throw std::invalid_argument("point cloud input requires point normals");
        samples.reserve(model.vertices.size());
        for (std::size_t i = 0; i < model.vertices.size(); ++i) {
            Vec3 p = model.vertices[i];
            const Vec3 n = normalized(model.point_normals[i]);
            if (params.dilate) p += n * half_voxel;
            const Coord c{cell_of(p.x, res), cell_of(p.y, res), cell_of(p.z, res)};
            samples.push_back({flatten(c, res, 3), n});
        }
    } else {
        const std::int64_t ntri = static_cast<std::int64_t>(model.triangles.size());
        const double res_sq = static_cast<double>(res) * static_cast<double>(res);

        // Per-triangle sample counts first, so each triangle writes a
        // pre-sized slot and the sample order is independent of scheduling.
        std::vector<std::int64_t> counts(static_cast<std::size_t>(ntri), 0);
        std::vector<Vec3> face_normals(static_cast<std::size_t>(ntri));
        for (std::int64_t t = 0; t < ntri; ++t) {
            const auto& tri = model.triangles[static_cast<std::size_t>(t)];
            for (int k = 0; k < 3; ++k)
                if (tri[k] < 0 || tri[k] >= static_cast<std::int32_t>(model.vertices.size()))
                    throw std::invalid_argument("triangle index out of range");
            const Vec3 a = model.vertices[static_cast<std::size_t>(tri[0])];
            const Vec3 b = model.vertices[static_cast<std::size_t>(tri[1])];
            const Vec3 c = model.vertices[static_cast<std::size_t>(tri[2])];
            const Vec3 n = cross(b - a, c - a);
            const double area2 = static_cast<double>(dot(n, n));
            if (area2 < 1e-24) {
                ++local.degenerate_triangles;
                continue;
            }
            const double area = 0.5 * std::sqrt(area2);
            counts[static_cast<std::size_t>(t)] = std::max<std::int64_t>(
                1, static_cast<std::int64_t>(
                       std::ceil(static_cast<double>(params.samples_per_area) * area * res_sq)));
            face_normals[static_cast<std::size_t>(t)] = normalized(n);
        }
        std::vector<std::int64_t> offsets(static_cast<std::size_t>(ntri) + 1, 0);
        std::partial_sum(counts.begin(), counts.end(), offsets.begin() + 1);
        samples.resize(static_cast<std::size_t>(offsets.back()));

        const int nt = max_threads();
#pragma omp parallel for schedule(static) num_threads(nt)
        for (std::int64_t t = 0; t < ntri; ++t) {
            const std::int64_t cnt = counts[static_cast<std::size_t>(t)];
            if (cnt == 0) continue;
            const auto& tri = model.triangles[static_cast<std::size_t>(t)];
            const Vec3 a = model.vertices[static_cast<std::size_t>(tri[0])];
            const Vec3 b = model.vertices[static_cast<std::size_t>(tri[1])];
            const Vec3 c = model.vertices[static_cast<std::size_t>(tri[2])];
            const Vec3 n = face_normals[static_cast<std::size_t>(t)];
            Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(t)));
            for (std::int64_t k = 0; k < cnt; ++k) {
                // uniform barycentric sample
                const float su = std::sqrt(rng.uniform_float());
                const float v = rng.uniform_float();
                Vec3 p = a * (1.0f - su) + b * (su * (1.0f - v)) + c * (su * v);
                if (params.dilate) p += n * half_voxel;
                const Coord cell{cell_of(p.x, res), cell_of(p.y, res), cell_of(p.z, res)};
                samples[static_cast<std::size_t>(offsets[static_cast<std::size_t>(t)] + k)] = {
                    flatten(cell, res, 3), n};
            }
        }
    }

    local.samples = static_cast<std::int64_t>(samples.size());
    if (samples.empty()) throw std::runtime_error("voxelize produced zero samples");
    if (stats) *stats = local;

    SparseVoxelSet s;
    s.dim = 3;
    s.resolution = res;
    s.level = int_log2(res);
    s.features = aggregate_normals(samples, s.voxels, res, 3);
    return s;
}

SparseVoxelSet coarsen(const SparseVoxelSet& s) {
    if (s.resolution < 8) throw std::invalid_argument("coarsen requires resolution >= 8");
    const std::int32_t res = s.resolution / 2;

    // children sharing a parent are not contiguous in (z,y,x) order, so group
    // by flattened parent cell first
    std::vector<std::pair<std::int64_t, std::int64_t>> parent_of(s.voxels.size());
    for (std::size_t i = 0; i < s.voxels.size(); ++i) {
        const Coord& p = s.voxels[i];
        const Coord q{p[0] / 2, p[1] / 2, p[2] / 2};
        parent_of[i] = {flatten(q, res, s.dim), static_cast<std::int64_t>(i)};
    }
    std::stable_sort(parent_of.begin(), parent_of.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    SparseVoxelSet out;
    out.dim = s.dim;
    out.resolution = res;
    out.level = s.level - 1;
    std::vector<std::vector<double>> sums;
    const std::int64_t channels = s.features.rows;
    std::size_t i = 0;
    while (i < parent_of.size()) {
        std::size_t j = i;
        std::vector<double> acc(static_cast<std::size_t>(channels), 0.0);
        std::int64_t nchildren = 0;
        while (j < parent_of.size() && parent_of[j].first == parent_of[i].first) {
            for (std::int64_t r = 0; r < channels; ++r)
                acc[static_cast<std::size_t>(r)] += s.features.at(r, parent_of[j].second);
            ++nchildren;
            ++j;
        }
        double len = 0;
        for (const double v : acc) len += v * v;
        len = std::sqrt(len);
        if (len < 1e-8) {
            std::fill(acc.begin(), acc.end(), 0.0);
        } else {
            for (double& v : acc) v /= len;
        }
        out.voxels.push_back(unflatten(parent_of[i].first, res, s.dim));
        sums.push_back(std::move(acc));
        i = j;
    }
    out.features = FeatureMatrix(channels, static_cast<std::int64_t>(sums.size()));
    for (std::int64_t c = 0; c < out.features.cols; ++c)
        for (std::int64_t r = 0; r < channels; ++r)
            out.features.at(r, c) =
                static_cast<float>(sums[static_cast<std::size_t>(c)][static_cast<std::size_t>(r)]);
    return out;
}

}  // namespace hashconv
