#include "tetdiff/tetgrid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <set>

#include "tetdiff/errors.hpp"

namespace tetdiff {

TetGrid build_bcc_grid(int resolution, double extent, double delta_multiplier) {
    if (resolution < 2)
        throw std::invalid_argument("build_bcc_grid: resolution must be >= 2 (no interior face exists below that)");
    if (extent <= 0.0) throw std::invalid_argument("build_bcc_grid: extent must be positive");
    if (delta_multiplier <= 0.0) throw std::invalid_argument("build_bcc_grid: delta multiplier must be positive");

    TetGrid g;
    g.resolution = resolution;
    g.extent = extent;
    const int R = resolution;
    const double h = 2.0 * extent / R;
    g.delta_max = delta_multiplier * h;

    const int n = R + 1;
    g.vertex_positions.reserve(n * n * n + R * R * R);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                g.vertex_positions.push_back({-extent + i * h, -extent + j * h, -extent + k * h});
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < R; ++j)
            for (int k = 0; k < R; ++k)
                g.vertex_positions.push_back({-extent + (i + 0.5) * h, -extent + (j + 0.5) * h,
                                              -extent + (k + 0.5) * h});
    g.vertex_kind.assign(g.vertex_positions.size(), VertexKind::Corner);
    for (std::size_t v = static_cast<std::size_t>(n) * n * n; v < g.vertex_positions.size(); ++v)
        g.vertex_kind[v] = VertexKind::Center;

    // One interior face per pair of axis-adjacent cells; 4 tets per face,
    // each joining the two cell centers with one edge of the shared square.
    auto emit_face = [&](int c0, int c1, const std::array<int, 4>& quad) {
        // quad corners listed in cyclic order around the face
        for (int e = 0; e < 4; ++e) {
            int a = quad[e], b = quad[(e + 1) % 4];
            std::array<int, 4> tet{c0, c1, a, b};
            const auto& p = g.vertex_positions;
            if (tet_volume(p[tet[0]], p[tet[1]], p[tet[2]], p[tet[3]]) < 0.0)
                std::swap(tet[2], tet[3]);
            g.tets.push_back(tet);
        }
    };

    for (int axis = 0; axis < 3; ++axis) {
        for (int i = 0; i < (axis == 0 ? R - 1 : R); ++i)
            for (int j = 0; j < (axis == 1 ? R - 1 : R); ++j)
                for (int k = 0; k < (axis == 2 ? R - 1 : R); ++k) {
                    int di = axis == 0, dj = axis == 1, dk = axis == 2;
                    int c0 = g.center_index(i, j, k);
                    int c1 = g.center_index(i + di, j + dj, k + dk);
                    // shared face lies at the +axis side of cell (i,j,k)
                    int fi = i + di, fj = j + dj, fk = k + dk;
                    std::array<int, 4> quad;
                    if (axis == 0)
                        quad = {g.corner_index(fi, j, k), g.corner_index(fi, j + 1, k),
                                g.corner_index(fi, j + 1, k + 1), g.corner_index(fi, j, k + 1)};
                    else if (axis == 1)
                        quad = {g.corner_index(i, fj, k), g.corner_index(i + 1, fj, k),
                                g.corner_index(i + 1, fj, k + 1), g.corner_index(i, fj, k + 1)};
                    else
                        quad = {g.corner_index(i, j, fk), g.corner_index(i + 1, j, fk),
                                g.corner_index(i + 1, j + 1, fk), g.corner_index(i, j + 1, fk)};
                    emit_face(c0, c1, quad);
                }
    }

    std::set<std::array<int, 2>> edge_set;
    for (const auto& t : g.tets)
        for (int a = 0; a < 4; ++a)
            for (int b = a + 1; b < 4; ++b)
                edge_set.insert({std::min(t[a], t[b]), std::max(t[a], t[b])});
    g.edges.assign(edge_set.begin(), edge_set.end());
    return g;
}

std::vector<std::uint8_t> domain_boundary_vertices(const TetGrid& grid) {
    std::map<std::array<int, 3>, int> face_count;
    for (const auto& t : grid.tets)
        for (int skip = 0; skip < 4; ++skip) {
            std::array<int, 3> face;
            int c = 0;
            for (int i = 0; i < 4; ++i)
                if (i != skip) face[c++] = t[i];
            std::sort(face.begin(), face.end());
            face_count[face]++;
        }
    std::vector<std::uint8_t> on_boundary(grid.vertex_count(), 0);
    for (const auto& [face, count] : face_count)
        if (count == 1)
            for (int v : face) on_boundary[v] = 1;
    // box corners outside every tet sit on the domain boundary as well
    std::vector<std::uint8_t> in_tet(grid.vertex_count(), 0);
    for (const auto& t : grid.tets)
        for (int v : t) in_tet[v] = 1;
    for (int v = 0; v < grid.vertex_count(); ++v)
        if (!in_tet[v]) on_boundary[v] = 1;
    return on_boundary;
}

namespace {

void require_state_matches(const TetGrid& grid, const GridState& state, const char* what) {
    if (state.vertex_count() != grid.vertex_count())
        throw DimensionError(std::string(what) + ": state has " + std::to_string(state.vertex_count()) +
                             " vertices, grid has " + std::to_string(grid.vertex_count()));
}

} // namespace

CubicEmbedding embed_to_cubic(const TetGrid& grid, const GridState& state) {
    require_state_matches(grid, state, "embed_to_cubic");

    CubicEmbedding emb;
    const int R = grid.resolution;
    emb.dim = 2 * R + 1;
    emb.delta_max = grid.delta_max;
    emb.data = Tensor(4, emb.dim);
    emb.mask.assign(emb.data.sites(), 0);
    emb.site_to_vertex.assign(emb.data.sites(), -1);
    emb.vertex_to_site.assign(grid.vertex_count(), -1);
    emb.raw_deformation = state.deformation;

    auto place = [&](int vertex, int sx, int sy, int sz) {
        std::size_t site = emb.data.site_index(sx, sy, sz);
        emb.mask[site] = 1;
        emb.site_to_vertex[site] = vertex;
        emb.vertex_to_site[vertex] = static_cast<std::int32_t>(site);
        const Vec3& d = state.deformation[vertex];
        emb.data.channel(0)[site] = d.x / grid.delta_max;
        emb.data.channel(1)[site] = d.y / grid.delta_max;
        emb.data.channel(2)[site] = d.z / grid.delta_max;
        emb.data.channel(3)[site] = state.sdf[vertex];
    };

    for (int i = 0; i <= R; ++i)
        for (int j = 0; j <= R; ++j)
            for (int k = 0; k <= R; ++k)
                place(grid.corner_index(i, j, k), 2 * i, 2 * j, 2 * k);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < R; ++j)
            for (int k = 0; k < R; ++k)
                place(grid.center_index(i, j, k), 2 * i + 1, 2 * j + 1, 2 * k + 1);
    return emb;
}

GridState extract_from_cubic(const CubicEmbedding& emb, const TetGrid& grid) {
    if (emb.dim != 2 * grid.resolution + 1)
        throw DimensionError("extract_from_cubic: lattice side " + std::to_string(emb.dim) +
                             " does not match grid resolution " + std::to_string(grid.resolution));
    if (emb.data.channels != 4 || static_cast<int>(emb.vertex_to_site.size()) != grid.vertex_count())
        throw DimensionError("extract_from_cubic: embedding layout does not match grid");

    const bool have_raw = emb.raw_deformation.size() == static_cast<std::size_t>(grid.vertex_count());
    GridState s = GridState::zeros(grid.vertex_count());
    bool all_pm1 = true;
    for (int v = 0; v < grid.vertex_count(); ++v) {
        std::size_t site = emb.vertex_to_site[v];
        if (have_raw) {
            s.deformation[v] = emb.raw_deformation[v];
        } else {
            s.deformation[v] = {emb.data.channel(0)[site] * grid.delta_max,
                                emb.data.channel(1)[site] * grid.delta_max,
                                emb.data.channel(2)[site] * grid.delta_max};
        }
        double sd = emb.data.channel(3)[site];
        s.sdf[v] = sd;
        all_pm1 &= (sd == 1.0 || sd == -1.0);
    }
    s.normalized = all_pm1;
    return s;
}

GridState clip_deformations(GridState state, double delta_max) {
    if (delta_max <= 0.0) throw std::invalid_argument("clip_deformations: delta_max must be positive");
    for (Vec3& d : state.deformation)
        for (int c = 0; c < 3; ++c)
            d[c] = std::clamp(d[c], -delta_max, delta_max);
    return state;
}

GridState scale_state(GridState state, ScaleDirection direction, double delta_max) {
    if (delta_max <= 0.0) throw std::invalid_argument("scale_state: delta_max must be positive");
    if (direction == ScaleDirection::ToDiffusion) {
        if (!state.normalized)
            throw StateError("scale_state: to_diffusion requires a normalized (+-1 SDF) state");
        for (Vec3& d : state.deformation)
            for (int c = 0; c < 3; ++c) d[c] /= delta_max;
    } else {
        for (Vec3& d : state.deformation)
            for (int c = 0; c < 3; ++c) d[c] = std::clamp(d[c] * delta_max, -delta_max, delta_max);
    }
    return state;
}

namespace {

constexpr char kTetgMagic[4] = {'T', 'E', 'T', 'G'};
constexpr std::uint32_t kTetgVersion = 1;

void write_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, 4, 1, f); }

std::uint32_t read_u32(std::FILE* f, const char* what) {
    std::uint32_t v;
    if (std::fread(&v, 4, 1, f) != 1) throw FormatError(std::string("tetg: truncated ") + what);
    return v;
}

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

} // namespace

void save_tetg(const GridState& state, int resolution, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("tetg: cannot open for writing: " + path);
    FileCloser guard{f};
    std::fwrite(kTetgMagic, 1, 4, f);
    write_u32(f, kTetgVersion);
    write_u32(f, static_cast<std::uint32_t>(resolution));
    write_u32(f, static_cast<std::uint32_t>(state.vertex_count()));
    for (int v = 0; v < state.vertex_count(); ++v) {
        float rec[4] = {static_cast<float>(state.deformation[v].x),
                        static_cast<float>(state.deformation[v].y),
                        static_cast<float>(state.deformation[v].z),
                        static_cast<float>(state.sdf[v])};
        std::fwrite(rec, 4, 4, f);
    }
    std::uint8_t flag = state.normalized ? 1 : 0;
    std::fwrite(&flag, 1, 1, f);
}

GridState load_tetg(const std::string& path, int* resolution_out) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("tetg: cannot open: " + path);
    FileCloser guard{f};
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kTetgMagic, 4) != 0)
        throw FormatError("tetg: bad magic in " + path);
    std::uint32_t version = read_u32(f, "version");
    if (version != kTetgVersion)
        throw FormatError("tetg: unsupported version " + std::to_string(version));
    std::uint32_t resolution = read_u32(f, "resolution");
    std::uint32_t count = read_u32(f, "vertex count");
    std::uint64_t n1 = static_cast<std::uint64_t>(resolution) + 1;
    if (count != n1 * n1 * n1 + static_cast<std::uint64_t>(resolution) * resolution * resolution)
        throw FormatError("tetg: vertex count inconsistent with resolution");

    GridState s = GridState::zeros(static_cast<int>(count));
    for (std::uint32_t v = 0; v < count; ++v) {
        float rec[4];
        if (std::fread(rec, 4, 4, f) != 4) throw FormatError("tetg: truncated vertex records");
        s.deformation[v] = {rec[0], rec[1], rec[2]};
        s.sdf[v] = rec[3];
    }
    std::uint8_t flag;
    if (std::fread(&flag, 1, 1, f) != 1) throw FormatError("tetg: truncated normalized flag");
    s.normalized = flag != 0;
    if (resolution_out) *resolution_out = static_cast<int>(resolution);
    return s;
}

} // namespace tetdiff
