#include "tetdiff/meshops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <set>

#include "tetdiff/errors.hpp"
#include "tetdiff/parallel.hpp"
#include "tetdiff/rng.hpp"
#include "tetdiff/spatial.hpp"

namespace tetdiff {

TriMesh laplacian_smooth(const TriMesh& mesh, double lambda, int steps) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("laplacian_smooth: lambda must be in [0,1]");
    if (steps < 0) throw std::invalid_argument("laplacian_smooth: steps must be >= 0");

    std::vector<std::set<int>> ring(mesh.vertices.size());
    for (const auto& f : mesh.faces)
        for (int c = 0; c < 3; ++c) {
            ring[f[c]].insert(f[(c + 1) % 3]);
            ring[f[c]].insert(f[(c + 2) % 3]);
        }

    TriMesh out = mesh;
    std::vector<Vec3> next(out.vertices.size());
    for (int s = 0; s < steps; ++s) {
        for (std::size_t v = 0; v < out.vertices.size(); ++v) {
            if (ring[v].empty()) {
                next[v] = out.vertices[v];
                continue;
            }
            Vec3 mean{};
            for (int n : ring[v]) mean += out.vertices[n];
            mean *= 1.0 / static_cast<double>(ring[v].size());
            next[v] = out.vertices[v] + (mean - out.vertices[v]) * lambda;
        }
        out.vertices.swap(next);
    }
    return out;
}

TriMesh remove_small_components(const TriMesh& mesh, double min_face_fraction) {
    if (min_face_fraction < 0.0 || min_face_fraction >= 1.0)
        throw std::invalid_argument("remove_small_components: fraction must be in [0,1)");
    if (mesh.faces.empty()) return mesh;

    std::vector<int> parent(mesh.face_count());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
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
    std::vector<int> size(mesh.face_count(), 0);
    for (int f = 0; f < mesh.face_count(); ++f) size[find(f)]++;

    double threshold = min_face_fraction * mesh.face_count();
    TriMesh out;
    std::vector<int> remap(mesh.vertices.size(), -1);
    for (int f = 0; f < mesh.face_count(); ++f) {
        if (static_cast<double>(size[find(f)]) < threshold) continue;
        std::array<int, 3> tri;
        for (int c = 0; c < 3; ++c) {
            int v = mesh.faces[f][c];
            if (remap[v] < 0) {
                remap[v] = out.vertex_count();
                out.vertices.push_back(mesh.vertices[v]);
            }
            tri[c] = remap[v];
        }
        out.faces.push_back(tri);
    }
    return out;
}

namespace {

double face_area(const TriMesh& mesh, int f) {
    const auto& t = mesh.faces[f];
    return 0.5 * norm(cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                            mesh.vertices[t[2]] - mesh.vertices[t[0]]));
}

} // namespace

PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("sample_surface: n must be positive");
    std::vector<double> cumulative(mesh.face_count());
    double total = 0.0;
    for (int f = 0; f < mesh.face_count(); ++f) {
        total += face_area(mesh, f);
        cumulative[f] = total;
    }
    if (mesh.faces.empty() || total <= 0.0)
        throw GeometryError("sample_surface: mesh has no non-degenerate faces");

    PointCloud cloud;
    cloud.seed = seed;
    cloud.points.reserve(n);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        double pick = rng.uniform() * total;
        int f = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
                                 cumulative.begin());
        f = std::min(f, mesh.face_count() - 1);
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const auto& t = mesh.faces[f];
        const Vec3& a = mesh.vertices[t[0]];
        cloud.points.push_back(a + (mesh.vertices[t[1]] - a) * u + (mesh.vertices[t[2]] - a) * v);
    }
    return cloud;
}

namespace {

// Fixed probe directions for parity voting; irrational-ish components keep
// them away from mesh symmetry planes.
const std::array<Vec3, kInsideRays>& probe_directions() {
    static const std::array<Vec3, kInsideRays> dirs = [] {
        std::array<Vec3, kInsideRays> d;
        Rng rng(0x7e57ab1e5eedULL);
        for (auto& v : d) v = normalized(rng.normal3());
        return d;
    }();
    return dirs;
}

ContainmentVote vote_with_grid(const TriGrid& grid, const Vec3& p) {
    ContainmentVote vote;
    for (const Vec3& dir : probe_directions())
        vote.inside_votes += grid.count_hits(p, dir) % 2;
    vote.result = vote.inside_votes * 2 > kInsideRays ? Containment::Inside : Containment::Outside;
    vote.unanimous = vote.inside_votes == 0 || vote.inside_votes == kInsideRays;
    return vote;
}

} // namespace

ContainmentVote point_in_mesh_vote(const TriMesh& mesh, const Vec3& p) {
    TriGrid grid(mesh);
    return vote_with_grid(grid, p);
}

Containment point_in_mesh(const TriMesh& mesh, const Vec3& p) {
    return point_in_mesh_vote(mesh, p).result;
}

std::vector<ContainmentVote> points_in_mesh(const TriMesh& mesh, const std::vector<Vec3>& points) {
    TriGrid grid(mesh);
    std::vector<ContainmentVote> votes(points.size());
    parallel_chunks(points.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) votes[i] = vote_with_grid(grid, points[i]);
    });
    return votes;
}

DepthView raycast_depth(const TriMesh& mesh, const CameraSpec& camera) {
    if (camera.focal <= 0.0 || camera.width <= 0 || camera.height <= 0)
        throw std::invalid_argument("raycast_depth: camera needs positive focal and image size");
    if (mesh.faces.empty()) throw GeometryError("raycast_depth: empty mesh");

    DepthView view;
    view.camera_pos = camera.position;
    view.look_at = camera.look_at;
    view.focal = camera.focal;
    view.width = camera.width;
    view.height = camera.height;
    view.depth.assign(static_cast<std::size_t>(camera.width) * camera.height, DepthView::kMiss);
    view.hit_mask.assign(view.depth.size(), 0);

    TriGrid grid(mesh);
    parallel_chunks(camera.height, [&](std::size_t rb, std::size_t re) {
        for (std::size_t row = rb; row < re; ++row)
            for (int col = 0; col < camera.width; ++col) {
                RayHit hit = grid.first_hit(camera.position, view.pixel_ray(static_cast<int>(row), col));
                if (hit.face >= 0) {
                    view.depth[row * camera.width + col] = hit.t;
                    view.hit_mask[row * camera.width + col] = 1;
                }
            }
    });
    return view;
}

namespace {

constexpr char kDepthMagic[4] = {'D', 'P', 'T', 'H'};
constexpr std::uint32_t kDepthVersion = 1;

} // namespace

void save_depth(const DepthView& view, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("depth: cannot open for writing: " + path);
    std::fwrite(kDepthMagic, 1, 4, f);
    std::fwrite(&kDepthVersion, 4, 1, f);
    float cam[7] = {static_cast<float>(view.camera_pos.x), static_cast<float>(view.camera_pos.y),
                    static_cast<float>(view.camera_pos.z), static_cast<float>(view.look_at.x),
                    static_cast<float>(view.look_at.y),    static_cast<float>(view.look_at.z),
                    static_cast<float>(view.focal)};
    std::fwrite(cam, 4, 7, f);
    std::uint32_t w = view.width, h = view.height;
    std::fwrite(&w, 4, 1, f);
    std::fwrite(&h, 4, 1, f);
    for (double d : view.depth) {
        float v = std::isinf(d) ? -1.0f : static_cast<float>(d);
        std::fwrite(&v, 4, 1, f);
    }
    std::fclose(f);
}

DepthView load_depth(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("depth: cannot open: " + path);
    auto fail = [&](const char* msg) {
        std::fclose(f);
        throw FormatError(std::string("depth: ") + msg + ": " + path);
    };
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kDepthMagic, 4) != 0) fail("bad magic");
    std::uint32_t version;
    if (std::fread(&version, 4, 1, f) != 1 || version != kDepthVersion) fail("bad version");
    float cam[7];
    if (std::fread(cam, 4, 7, f) != 7) fail("truncated camera");
    std::uint32_t w, h;
    if (std::fread(&w, 4, 1, f) != 1 || std::fread(&h, 4, 1, f) != 1) fail("truncated size");

    DepthView view;
    view.camera_pos = {cam[0], cam[1], cam[2]};
    view.look_at = {cam[3], cam[4], cam[5]};
    view.focal = cam[6];
    view.width = static_cast<int>(w);
    view.height = static_cast<int>(h);
    view.depth.resize(static_cast<std::size_t>(w) * h);
    view.hit_mask.resize(view.depth.size());
    for (std::size_t i = 0; i < view.depth.size(); ++i) {
        float v;
        if (std::fread(&v, 4, 1, f) != 1) fail("truncated depth data");
        view.depth[i] = v < 0.0f ? DepthView::kMiss : v;
        view.hit_mask[i] = v < 0.0f ? 0 : 1;
    }
    std::fclose(f);
    return view;
}

} // namespace tetdiff
