#include "tetdiff/trimesh.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>

#include "tetdiff/errors.hpp"

namespace tetdiff {

int DepthView::hit_count() const {
    int n = 0;
    for (std::uint8_t m : hit_mask) n += m;
    return n;
}

void DepthView::frame(Vec3& forward, Vec3& right, Vec3& up) const {
    forward = normalized(look_at - camera_pos);
    Vec3 world_up{0, 1, 0};
    if (std::fabs(dot(forward, world_up)) > 0.999) world_up = {0, 0, 1};
    right = normalized(cross(forward, world_up));
    up = cross(right, forward);
}

Vec3 DepthView::pixel_ray(int row, int col) const {
    Vec3 f, r, u;
    frame(f, r, u);
    double cx = 0.5 * (width - 1), cy = 0.5 * (height - 1);
    return normalized(f + r * ((col - cx) / focal) + u * ((cy - row) / focal));
}

TopologyReport topology_check(const TriMesh& mesh) {
    TopologyReport rep;
    std::map<std::pair<int, int>, int> edge_faces;
    std::vector<std::uint8_t> referenced(mesh.vertices.size(), 0);
    for (const auto& f : mesh.faces) {
        for (int c = 0; c < 3; ++c) {
            referenced[f[c]] = 1;
            int a = f[c], b = f[(c + 1) % 3];
            edge_faces[{std::min(a, b), std::max(a, b)}]++;
        }
    }
    int v = std::accumulate(referenced.begin(), referenced.end(), 0);
    rep.euler = v - static_cast<int>(edge_faces.size()) + mesh.face_count();
    rep.watertight = !mesh.faces.empty();
    for (const auto& [e, n] : edge_faces)
        if (n != 2) rep.watertight = false;

    // components over faces sharing vertices
    std::vector<int> parent(mesh.face_count());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    std::vector<int> vertex_face(mesh.vertices.size(), -1);
    for (int f = 0; f < mesh.face_count(); ++f)
        for (int c = 0; c < 3; ++c) {
            int& owner = vertex_face[mesh.faces[f][c]];
            if (owner < 0)
                owner = f;
            else
                parent[find(f)] = find(owner);
        }
    for (int f = 0; f < mesh.face_count(); ++f)
        if (find(f) == f) rep.component_count++;
    return rep;
}

namespace {

int parse_obj_index(const std::string& token, int vertex_count, int line) {
    std::size_t pos = 0;
    int idx;
    try {
        idx = std::stoi(token, &pos);
    } catch (const std::exception&) {
        throw ParseError("obj: bad face index '" + token + "'", line);
    }
    if (pos < token.size() && token[pos] != '/')
        throw ParseError("obj: bad face index '" + token + "'", line);
    if (idx < 1 || idx > vertex_count)
        throw std::out_of_range("obj: face index " + std::to_string(idx) + " out of range (line " +
                                std::to_string(line) + "); indices are 1-based");
    return idx - 1;
}

} // namespace

TriMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("obj: cannot open: " + path);

    TriMesh mesh;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z)) throw ParseError("obj: vertex needs 3 coordinates", line_no);
            mesh.vertices.push_back({x, y, z});
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string token;
            while (ss >> token) poly.push_back(parse_obj_index(token, mesh.vertex_count(), line_no));
            if (poly.size() < 3) throw ParseError("obj: face needs at least 3 indices", line_no);
            for (std::size_t i = 1; i + 1 < poly.size(); ++i)
                mesh.faces.push_back({poly[0], poly[i], poly[i + 1]});
        }
        // other record types (vn, vt, o, g, s, usemtl, ...) are outside the subset; skipped
    }
    return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("obj: cannot open for writing: " + path);
    for (const Vec3& v : mesh.vertices) std::fprintf(f, "v %.6f %.6f %.6f\n", v.x, v.y, v.z);
    for (const auto& face : mesh.faces)
        std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
    std::fclose(f);
}

} // namespace tetdiff
