#pragma once

#include <array>
#include <string>
#include <vector>

#include "hashconv/types.hpp"

namespace hashconv {

// Triangle soup/mesh or point cloud. Point normals are optional for meshes
// (face normals are used for sampling) and required for point clouds.
struct InputModel {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::int32_t, 3>> triangles;
    std::vector<Vec3> point_normals;  // empty, or one per vertex
};

InputModel load_obj(const std::string& path);
InputModel load_off(const std::string& path);
InputModel load_xyz(const std::string& path);  // x y z nx ny nz per line

// Dispatch on extension (.obj/.off/.xyz); throws std::runtime_error on
// parse or IO failure.
InputModel load_model(const std::string& path);

}  // namespace hashconv
