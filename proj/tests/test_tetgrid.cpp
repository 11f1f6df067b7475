#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "tetdiff/errors.hpp"
#include "tetdiff/rng.hpp"
#include "tetdiff/tetgrid.hpp"
#include "testutil.hpp"

using namespace tetdiff;

namespace {

GridState random_state(const TetGrid& g, std::uint64_t seed, bool normalized) {
    Rng rng(seed);
    GridState s = GridState::zeros(g.vertex_count());
    for (int v = 0; v < g.vertex_count(); ++v) {
        s.deformation[v] = {rng.uniform(-g.delta_max, g.delta_max),
                            rng.uniform(-g.delta_max, g.delta_max),
                            rng.uniform(-g.delta_max, g.delta_max)};
        s.sdf[v] = normalized ? (rng.uniform() < 0.5 ? -1.0 : 1.0) : rng.normal();
    }
    s.normalized = normalized;
    return s;
}

} // namespace

TEST_CASE("bcc grid counts match closed forms for R=2..8") {
    for (int R = 2; R <= 8; ++R) {
        TetGrid g = build_bcc_grid(R, 1.0);
        int n = R + 1;
        CHECK(g.vertex_count() == n * n * n + R * R * R);
        CHECK(g.tet_count() == 12 * R * R * (R - 1));

        // independent count: interior faces enumerated directly
        int faces = 3 * R * R * (R - 1);
        CHECK(g.tet_count() == 4 * faces);
    }
}

TEST_CASE("R=2 grid: 35 vertices, 48 tets, volume h^3/12") {
    TetGrid g = build_bcc_grid(2, 1.0);
    CHECK(g.vertex_count() == 35);
    CHECK(g.tet_count() == 48);
    double h = g.cell_edge();
    CHECK(h == doctest::Approx(1.0));
    for (const auto& t : g.tets) {
        double vol = tet_volume(g.vertex_positions[t[0]], g.vertex_positions[t[1]],
                                g.vertex_positions[t[2]], g.vertex_positions[t[3]]);
        CHECK(vol == doctest::Approx(h * h * h / 12.0).epsilon(1e-12));
    }
}

TEST_CASE("tets have 4 distinct vertices and positive rest volume") {
    for (int R : {2, 3, 5}) {
        TetGrid g = build_bcc_grid(R, 1.0);
        for (const auto& t : g.tets) {
            std::set<int> uniq(t.begin(), t.end());
            CHECK(uniq.size() == 4);
            CHECK(tet_volume(g.vertex_positions[t[0]], g.vertex_positions[t[1]],
                             g.vertex_positions[t[2]], g.vertex_positions[t[3]]) > 0.0);
        }
    }
}

TEST_CASE("no duplicate vertex positions; kinds partition corners/centers") {
    TetGrid g = build_bcc_grid(3, 1.0);
    std::set<std::array<double, 3>> seen;
    for (const Vec3& p : g.vertex_positions) seen.insert({p.x, p.y, p.z});
    CHECK(static_cast<int>(seen.size()) == g.vertex_count());
    int corners = 0, centers = 0;
    for (auto k : g.vertex_kind) (k == VertexKind::Corner ? corners : centers)++;
    CHECK(corners == 4 * 4 * 4);
    CHECK(centers == 27);
}

TEST_CASE("R=1 and bad parameters are rejected") {
    CHECK_THROWS_AS(build_bcc_grid(1, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_bcc_grid(0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_bcc_grid(4, -1.0), std::invalid_argument);
}

// Positivity under bounded deformation only holds below h/4: the worst-case
// corner of the deformation box reaches volume exactly 0 at h/4 and inverts
// beyond it (at the 0.75h default ~30% of randomly deformed tets invert).
TEST_CASE("tets stay positive under random deformations bounded by h/4") {
    Rng rng(99);
    for (int R = 2; R <= 8; ++R) {
        TetGrid g = build_bcc_grid(R, 1.0);
        double bound = 0.25 * g.cell_edge();
        int trials = 1000 / 7 + 1;
        for (int trial = 0; trial < trials; ++trial) {
            std::vector<Vec3> deformed(g.vertex_count());
            for (int v = 0; v < g.vertex_count(); ++v)
                deformed[v] = g.vertex_positions[v] + Vec3{rng.uniform(-bound, bound),
                                                           rng.uniform(-bound, bound),
                                                           rng.uniform(-bound, bound)};
            for (const auto& t : g.tets)
                REQUIRE(tet_volume(deformed[t[0]], deformed[t[1]], deformed[t[2]], deformed[t[3]]) > 0.0);
        }
    }
}

TEST_CASE("embedding: lattice size, mask count and parity rule") {
    TetGrid g = build_bcc_grid(2, 1.0);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));
    CHECK(emb.dim == 5);
    CHECK(emb.data.sites() == 125);
    int on = 0;
    for (int x = 0; x < emb.dim; ++x)
        for (int y = 0; y < emb.dim; ++y)
            for (int z = 0; z < emb.dim; ++z) {
                bool masked = emb.mask[emb.data.site_index(x, y, z)] != 0;
                bool all_even = x % 2 == 0 && y % 2 == 0 && z % 2 == 0;
                bool all_odd = x % 2 == 1 && y % 2 == 1 && z % 2 == 1;
                CHECK(masked == (all_even || all_odd));
                on += masked;
            }
    CHECK(on == 35);
}

TEST_CASE("embedding: zero state gives zero channels; scaling maps delta_max to 1") {
    TetGrid g = build_bcc_grid(2, 1.0);
    GridState s = GridState::zeros(g.vertex_count());
    CubicEmbedding emb = embed_to_cubic(g, s);
    for (double v : emb.data.v) CHECK(v == 0.0);

    s.deformation[0] = {g.delta_max, 0, 0};
    emb = embed_to_cubic(g, s);
    CHECK(emb.data.channel(0)[emb.vertex_to_site[0]] == 1.0);
}

TEST_CASE("embed/extract round trip is bit-exact") {
    for (int R : {2, 4}) {
        for (double mult : {0.75, 0.375, 0.7, 0.31}) {
            TetGrid g = build_bcc_grid(R, 1.0, mult);
            for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
                GridState s = random_state(g, seed, false);
                GridState back = extract_from_cubic(embed_to_cubic(g, s), g);
                for (int v = 0; v < g.vertex_count(); ++v) {
                    CHECK(back.sdf[v] == s.sdf[v]);
                    for (int c = 0; c < 3; ++c) REQUIRE(back.deformation[v][c] == s.deformation[v][c]);
                }
            }
        }
    }
}

TEST_CASE("extract ignores garbage at mask-0 sites") {
    TetGrid g = build_bcc_grid(2, 1.0);
    GridState s = random_state(g, 5, true);
    CubicEmbedding emb = embed_to_cubic(g, s);
    CubicEmbedding dirty = emb;
    for (std::size_t i = 0; i < dirty.mask.size(); ++i)
        if (!dirty.mask[i])
            for (int c = 0; c < 4; ++c) dirty.data.channel(c)[i] = 1e9;
    GridState a = extract_from_cubic(emb, g);
    GridState b = extract_from_cubic(dirty, g);
    for (int v = 0; v < g.vertex_count(); ++v) {
        CHECK(a.sdf[v] == b.sdf[v]);
        CHECK(a.deformation[v] == b.deformation[v]);
    }
}

TEST_CASE("dimension mismatches are rejected") {
    TetGrid g2 = build_bcc_grid(2, 1.0);
    TetGrid g3 = build_bcc_grid(3, 1.0);
    CHECK_THROWS_AS(embed_to_cubic(g2, GridState::zeros(g3.vertex_count())), DimensionError);
    CubicEmbedding emb = embed_to_cubic(g2, GridState::zeros(g2.vertex_count()));
    CHECK_THROWS_AS(extract_from_cubic(emb, g3), DimensionError);
}

TEST_CASE("clip_deformations clamps componentwise") {
    TetGrid g = build_bcc_grid(2, 1.0);
    GridState s = GridState::zeros(g.vertex_count());
    double dm = g.delta_max;
    s.deformation[0] = {2.0 * dm, -0.5 * dm, 0.0};
    GridState c = clip_deformations(s, dm);
    CHECK(c.deformation[0].x == dm);
    CHECK(c.deformation[0].y == -0.5 * dm);
    CHECK(c.deformation[0].z == 0.0);

    GridState zeros = GridState::zeros(g.vertex_count());
    GridState cz = clip_deformations(zeros, dm);
    for (int v = 0; v < g.vertex_count(); ++v) CHECK(cz.deformation[v] == Vec3{});
}

TEST_CASE("scale_state: round trip within one ulp, to_diffusion requires normalized") {
    TetGrid g = build_bcc_grid(2, 1.0);
    GridState s = random_state(g, 77, true);
    GridState fwd = scale_state(s, ScaleDirection::ToDiffusion, g.delta_max);
    CHECK(fwd.deformation[3].x == doctest::Approx(s.deformation[3].x / g.delta_max));
    GridState back = scale_state(fwd, ScaleDirection::FromDiffusion, g.delta_max);
    for (int v = 0; v < g.vertex_count(); ++v)
        for (int c = 0; c < 3; ++c) {
            double lo = std::nexttoward(s.deformation[v][c], -1e300);
            double hi = std::nexttoward(s.deformation[v][c], 1e300);
            CHECK(back.deformation[v][c] >= lo);
            CHECK(back.deformation[v][c] <= hi);
        }

    GridState raw = random_state(g, 78, false);
    CHECK_THROWS_AS(scale_state(raw, ScaleDirection::ToDiffusion, g.delta_max), StateError);

    GridState half = GridState::zeros(g.vertex_count());
    half.normalized = true;
    for (double& v : half.sdf) v = 1.0;
    half.deformation[0] = {g.delta_max / 2.0, 0, 0};
    CHECK(scale_state(half, ScaleDirection::ToDiffusion, g.delta_max).deformation[0].x == 0.5);
}

TEST_CASE("tetg file round trip and format errors") {
    testutil::TempDir tmp("tetg");
    TetGrid g = build_bcc_grid(3, 1.0);
    GridState s = random_state(g, 123, true);
    // quantize to file precision so the round trip is exact
    for (auto& d : s.deformation)
        for (int c = 0; c < 3; ++c) d[c] = static_cast<float>(d[c]);

    std::string path = tmp.path("state.tetg");
    save_tetg(s, g.resolution, path);
    int r = 0;
    GridState back = load_tetg(path, &r);
    CHECK(r == 3);
    CHECK(back.normalized == s.normalized);
    for (int v = 0; v < g.vertex_count(); ++v) {
        CHECK(back.sdf[v] == s.sdf[v]);
        CHECK(back.deformation[v] == s.deformation[v]);
    }

    // corrupt magic
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_tetg(path), FormatError);
}
