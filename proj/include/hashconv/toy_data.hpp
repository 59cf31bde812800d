#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hashconv/mesh.hpp"
#include "hashconv/net.hpp"

namespace hashconv {

// Procedural 3-class dataset (spheres, boxes, pyramids) with random per-axis
// scale and upright-axis rotation. Test models carry `poses` extra upright
// rotations for orientation voting.
struct ToyOptions {
    std::uint64_t seed = 42;
    int train_per_class = 100;
    int test_per_class = 20;
    std::int32_t resolution = 16;
    int poses = 12;
    float sample_density = 4.0f;
};

struct ToyDataset {
    std::vector<EvalSample> train;  // one pose each (group == sample index)
    std::vector<EvalSample> test;   // `poses` entries per group
    int num_classes = 3;
};

InputModel make_sphere_mesh(int stacks = 12, int slices = 24);
InputModel make_box_mesh();
InputModel make_pyramid_mesh();

ToyDataset generate_toy_dataset(const ToyOptions& options);

// Directory layout: manifest.txt lines "<relative_path> <label> <group>
// <pose> <split>" plus the multi-level .psh files.
void save_toy_dataset(const std::string& dir, const ToyDataset& data);
ToyDataset load_toy_dataset(const std::string& dir);
bool toy_dataset_exists(const std::string& dir);

}  // namespace hashconv
