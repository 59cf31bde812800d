#include "hashconv/toy_data.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "hashconv/psh_io.hpp"
#include "hashconv/rng.hpp"
#include "hashconv/voxel.hpp"

namespace hashconv {

namespace fs = std::filesystem;

InputModel make_sphere_mesh(int stacks, int slices) {
    InputModel m;
    constexpr float pi = std::numbers::pi_v<float>;
    for (int i = 0; i <= stacks; ++i) {
        const float phi = pi * static_cast<float>(i) / static_cast<float>(stacks);
        for (int j = 0; j < slices; ++j) {
            const float theta = 2.0f * pi * static_cast<float>(j) / static_cast<float>(slices);
            m.vertices.push_back({std::sin(phi) * std::cos(theta), std::cos(phi),
                                  std::sin(phi) * std::sin(theta)});
        }
    }
    auto at = [slices](int i, int j) { return i * slices + (j % slices); };
    for (int i = 0; i < stacks; ++i)
        for (int j = 0; j < slices; ++j) {
            m.triangles.push_back({at(i, j), at(i + 1, j), at(i + 1, j + 1)});
            m.triangles.push_back({at(i, j), at(i + 1, j + 1), at(i, j + 1)});
        }
    return m;
}

InputModel make_box_mesh() {
    InputModel m;
    for (int z = 0; z < 2; ++z)
        for (int y = 0; y < 2; ++y)
            for (int x = 0; x < 2; ++x)
                m.vertices.push_back({x - 0.5f, y - 0.5f, z - 0.5f});
    const int faces[6][4] = {{0, 1, 3, 2}, {4, 6, 7, 5}, {0, 4, 5, 1},
                             {2, 3, 7, 6}, {0, 2, 6, 4}, {1, 5, 7, 3}};
    for (const auto& f : faces) {
        m.triangles.push_back({f[0], f[1], f[2]});
        m.triangles.push_back({f[0], f[2], f[3]});
    }
    return m;
}

InputModel make_pyramid_mesh() {
    InputModel m;
    m.vertices = {{-0.8f, -0.5f, -0.8f},
                  {0.8f, -0.5f, -0.8f},
                  {0.8f, -0.5f, 0.8f},
                  {-0.8f, -0.5f, 0.8f},
                  {0.0f, 0.7f, 0.0f}};
    m.triangles = {{0, 2, 1}, {0, 3, 2}, {0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}};
    return m;
}

namespace {

InputModel transform(const InputModel& base, const Vec3& scale, float yaw) {
    InputModel out = base;
    const float c = std::cos(yaw), s = std::sin(yaw);
    for (Vec3& v : out.vertices) {
        const Vec3 scaled{v.x * scale.x, v.y * scale.y, v.z * scale.z};
        v = {c * scaled.x + s * scaled.z, scaled.y, -s * scaled.x + c * scaled.z};
    }
    return out;
}

EvalSample make_sample(const InputModel& base, const Vec3& scale, float yaw, int label, int group,
                       int pose, const ToyOptions& options, std::uint64_t sample_seed) {
    const InputModel model = normalize_model(transform(base, scale, yaw));
    VoxelizeParams params;
    params.resolution = options.resolution;
    params.samples_per_area = options.sample_density;
    params.seed = mix_seed(sample_seed, 7);
    const SparseVoxelSet finest = voxelize(model, params);
    EvalSample sample;
    sample.levels = build_pyramid(finest, mix_seed(sample_seed, 11));
    sample.label = label;
    sample.group = group;
    sample.pose = pose;
    return sample;
}

}  // namespace

ToyDataset generate_toy_dataset(const ToyOptions& options) {
    const InputModel shapes[3] = {make_sphere_mesh(), make_box_mesh(), make_pyramid_mesh()};
    constexpr float two_pi = 2.0f * std::numbers::pi_v<float>;
    ToyDataset data;
    int group = 0;
    for (int label = 0; label < 3; ++label) {
        for (int i = 0; i < options.train_per_class; ++i) {
            const std::uint64_t s = mix_seed(options.seed, 1000u * label + i);
            Rng rng(s);
            const Vec3 scale{static_cast<float>(rng.uniform(0.7, 1.3)),
                             static_cast<float>(rng.uniform(0.7, 1.3)),
                             static_cast<float>(rng.uniform(0.7, 1.3))};
            const float yaw = static_cast<float>(rng.uniform(0.0, two_pi));
            data.train.push_back(
                make_sample(shapes[label], scale, yaw, label, group++, 0, options, s));
        }
    }
    for (int label = 0; label < 3; ++label) {
        for (int i = 0; i < options.test_per_class; ++i) {
            const std::uint64_t s = mix_seed(options.seed, 500000u + 1000u * label + i);
            Rng rng(s);
            const Vec3 scale{static_cast<float>(rng.uniform(0.7, 1.3)),
                             static_cast<float>(rng.uniform(0.7, 1.3)),
                             static_cast<float>(rng.uniform(0.7, 1.3))};
            const float base_yaw = static_cast<float>(rng.uniform(0.0, two_pi));
            const int g = group++;
            for (int pose = 0; pose < std::max(1, options.poses); ++pose) {
                const float yaw =
                    base_yaw + two_pi * static_cast<float>(pose) / static_cast<float>(options.poses);
                data.test.push_back(make_sample(shapes[label], scale, yaw, label, g, pose, options,
                                                mix_seed(s, static_cast<std::uint64_t>(pose))));
            }
        }
    }
    return data;
}

namespace {

void save_split(const fs::path& dir, std::ofstream& manifest, const std::vector<EvalSample>& split,
                const char* split_name) {
    for (std::size_t i = 0; i < split.size(); ++i) {
        std::ostringstream name;
        name << split_name << "_" << i << ".psh";
        write_psh_file((dir / name.str()).string(), split[i].levels);
        manifest << name.str() << " " << split[i].label << " " << split[i].group << " "
                 << split[i].pose << " " << split_name << "\n";
    }
}

}  // namespace

void save_toy_dataset(const std::string& dir, const ToyDataset& data) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write dataset manifest in " + dir);
    manifest << "classes " << data.num_classes << "\n";
    save_split(dir, manifest, data.train, "train");
    save_split(dir, manifest, data.test, "test");
}

bool toy_dataset_exists(const std::string& dir) {
    return fs::exists(fs::path(dir) / "manifest.txt");
}

ToyDataset load_toy_dataset(const std::string& dir) {
    std::ifstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("no dataset manifest in " + dir);
    ToyDataset data;
    std::string line;
    if (!std::getline(manifest, line)) throw std::runtime_error("empty dataset manifest");
    {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag >> data.num_classes) || tag != "classes")
            throw std::runtime_error("bad dataset manifest header");
    }
    while (std::getline(manifest, line)) {
        std::istringstream ls(line);
        std::string name, split;
        EvalSample sample;
        if (!(ls >> name >> sample.label >> sample.group >> sample.pose >> split)) continue;
        sample.levels = read_psh_file((fs::path(dir) / name).string());
        (split == "train" ? data.train : data.test).push_back(std::move(sample));
    }
    if (data.train.empty() || data.test.empty())
        throw std::runtime_error("dataset manifest lists no samples");
    return data;
}

}  // namespace hashconv
