#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hashconv/mesh.hpp"

namespace hashconv {

namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return in;
}

// "f 1/2/3" -> vertex index 1 (OBJ indices are 1-based; negatives count from
// the end).
std::int32_t parse_obj_vertex_ref(const std::string& token, std::size_t vertex_count) {
    const std::size_t slash = token.find('/');
    const long idx = std::stol(slash == std::string::npos ? token : token.substr(0, slash));
    long resolved = idx > 0 ? idx - 1 : static_cast<long>(vertex_count) + idx;
    if (resolved < 0 || resolved >= static_cast<long>(vertex_count))
        throw std::runtime_error("OBJ face index out of range: " + token);
    return static_cast<std::int32_t>(resolved);
}

}  // namespace

InputModel load_obj(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    InputModel model;
    std::vector<Vec3> normals;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z)) throw std::runtime_error("bad OBJ vertex line");
            model.vertices.push_back(v);
        } else if (tag == "vn") {
            Vec3 n;
            if (!(ls >> n.x >> n.y >> n.z)) throw std::runtime_error("bad OBJ normal line");
            normals.push_back(n);
        } else if (tag == "f") {
            std::vector<std::int32_t> face;
            std::string ref;
            while (ls >> ref) face.push_back(parse_obj_vertex_ref(ref, model.vertices.size()));
            if (face.size() < 3) throw std::runtime_error("OBJ face with <3 vertices");
            for (std::size_t i = 1; i + 1 < face.size(); ++i)
                model.triangles.push_back({face[0], face[i], face[i + 1]});
        }
    }
    if (normals.size() == model.vertices.size()) model.point_normals = std::move(normals);
    if (model.vertices.empty()) throw std::runtime_error("empty input");
    return model;
}

InputModel load_off(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::string header;
    in >> header;
    if (header != "OFF") throw std::runtime_error("not an OFF file: " + path);
    std::size_t nv = 0, nf = 0, ne = 0;
    if (!(in >> nv >> nf >> ne)) throw std::runtime_error("bad OFF header");
    InputModel model;
    model.vertices.resize(nv);
    for (auto& v : model.vertices)
        if (!(in >> v.x >> v.y >> v.z)) throw std::runtime_error("bad OFF vertex");
    for (std::size_t f = 0; f < nf; ++f) {
        std::size_t k = 0;
        if (!(in >> k) || k < 3) throw std::runtime_error("bad OFF face");
        std::vector<std::int32_t> face(k);
        for (auto& idx : face) {
            if (!(in >> idx) || idx < 0 || idx >= static_cast<std::int32_t>(nv))
                throw std::runtime_error("OFF face index out of range");
        }
        for (std::size_t i = 1; i + 1 < k; ++i)
            model.triangles.push_back({face[0], face[i], face[i + 1]});
    }
    if (model.vertices.empty()) throw std::runtime_error("empty input");
    return model;
}

InputModel load_xyz(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    InputModel model;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        Vec3 p, n;
        if (!(ls >> p.x >> p.y >> p.z)) continue;  // blank line
        if (!(ls >> n.x >> n.y >> n.z))
            throw std::runtime_error("XYZ line without the 6 expected floats");
        model.vertices.push_back(p);
        model.point_normals.push_back(n);
    }
    if (model.vertices.empty()) throw std::runtime_error("empty input");
    return model;
}

InputModel load_model(const std::string& path) {
    const std::size_t dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "obj") return load_obj(path);
    if (ext == "off") return load_off(path);
    if (ext == "xyz" || ext == "pts" || ext == "txt") return load_xyz(path);
    throw std::runtime_error("unknown model format: " + path);
}

}  // namespace hashconv
