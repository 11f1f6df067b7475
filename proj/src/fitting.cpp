#include "tetdiff/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <json.hpp>

#include "tetdiff/errors.hpp"
#include "tetdiff/marching.hpp"
#include "tetdiff/meshops.hpp"
#include "tetdiff/rng.hpp"
#include "tetdiff/spatial.hpp"

namespace tetdiff {

GridState fit_signs(const TetGrid& grid, const TriMesh& gt, FitReport* report) {
    if (gt.faces.empty()) throw GeometryError("fit_signs: ground-truth mesh is empty");

    std::vector<ContainmentVote> votes = points_in_mesh(gt, grid.vertex_positions);
    GridState s = GridState::zeros(grid.vertex_count());
    int split = 0;
    for (int v = 0; v < grid.vertex_count(); ++v) {
        s.sdf[v] = votes[v].result == Containment::Inside ? -1.0 : 1.0;
        split += !votes[v].unanimous;
    }
    s.normalized = true;
    if (report) {
        report->split_votes = split;
        if (split > grid.vertex_count() / 100)
            report->warnings.push_back("open mesh: " + std::to_string(split) +
                                       " vertices with split inside/outside votes");
    }
    return s;
}

namespace {

// Sampled point on the frozen-connectivity midpoint mesh: affine in the
// deformations through its face's three crossing-edge midpoints.
struct SurfaceSample {
    std::array<int, 3> face_vertices; // mesh vertex ids
    std::array<double, 3> weights;    // barycentric
};

struct MidpointSurface {
    std::vector<std::array<int, 2>> vertex_edges;  // grid vertex pair per mesh vertex
    std::vector<std::array<int, 3>> faces;
    std::vector<int> face_tets;

    std::vector<Vec3> positions(const TetGrid& grid, const std::vector<Vec3>& deformation) const {
        std::vector<Vec3> p(vertex_edges.size());
        for (std::size_t i = 0; i < vertex_edges.size(); ++i) {
            auto [a, b] = vertex_edges[i];
            p[i] = (grid.vertex_positions[a] + deformation[a] + grid.vertex_positions[b] +
                    deformation[b]) *
                   0.5;
        }
        return p;
    }
};

std::vector<Vec3> sample_positions(const std::vector<SurfaceSample>& samples,
                                   const MidpointSurface& surf, const std::vector<Vec3>& mesh_pos) {
    std::vector<Vec3> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        out[i] = mesh_pos[s.face_vertices[0]] * s.weights[0] +
                 mesh_pos[s.face_vertices[1]] * s.weights[1] +
                 mesh_pos[s.face_vertices[2]] * s.weights[2];
    }
    return out;
}

double exact_chamfer(const std::vector<Vec3>& p, const KdTree3& target_tree,
                     const std::vector<Vec3>& target) {
    double fwd = 0.0;
    for (const Vec3& q : p) fwd += target_tree.nearest(q).second;
    fwd /= static_cast<double>(p.size());

    KdTree3 p_tree(p);
    double bwd = 0.0;
    for (const Vec3& y : target) bwd += p_tree.nearest(y).second;
    bwd /= static_cast<double>(target.size());
    return fwd + bwd;
}

std::pair<GridState, FitReport> optimize_core(const TetGrid& grid, const GridState& state,
                                              const std::vector<Vec3>& target, const FitConfig& cfg,
                                              const std::vector<std::uint8_t>* movable,
                                              const std::vector<std::uint8_t>* tet_filter,
                                              FitReport report) {
    if (!state.normalized) throw StateError("optimize_deformations: state must be normalized");
    if (target.empty()) throw GeometryError("optimize_deformations: empty target cloud");

    ExtractedMesh extracted = extract_mesh_detail(grid, state);
    MidpointSurface surf;
    surf.vertex_edges = std::move(extracted.vertex_edges);
    for (std::size_t f = 0; f < extracted.mesh.faces.size(); ++f) {
        if (tet_filter && !(*tet_filter)[extracted.face_tets[f]]) continue;
        surf.faces.push_back(extracted.mesh.faces[f]);
        surf.face_tets.push_back(extracted.face_tets[f]);
    }
    if (surf.faces.empty())
        throw GeometryError("optimize_deformations: state produces no usable surface");

    GridState current = state;
    std::vector<Vec3> mesh_pos = surf.positions(grid, current.deformation);

    // one fixed draw of surface samples; positions track the deformations
    Rng rng(mix_seed(cfg.seed, 0x5a));
    std::vector<double> cumulative(surf.faces.size());
    double total_area = 0.0;
    for (std::size_t f = 0; f < surf.faces.size(); ++f) {
        const auto& tri = surf.faces[f];
        total_area += 0.5 * norm(cross(mesh_pos[tri[1]] - mesh_pos[tri[0]],
                                       mesh_pos[tri[2]] - mesh_pos[tri[0]]));
        cumulative[f] = total_area;
    }
    if (total_area <= 0.0) throw GeometryError("optimize_deformations: degenerate surface");

    int n_samples = std::max(16, cfg.chamfer_samples);
    std::vector<SurfaceSample> samples(n_samples);
    for (auto& s : samples) {
        double pick = rng.uniform() * total_area;
        std::size_t f = std::lower_bound(cumulative.begin(), cumulative.end(), pick) -
                        cumulative.begin();
        f = std::min(f, surf.faces.size() - 1);
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        s.face_vertices = surf.faces[f];
        s.weights = {1.0 - u - v, u, v};
    }

    KdTree3 target_tree(target);
    std::vector<Vec3> pts = sample_positions(samples, surf, mesh_pos);
    double loss = exact_chamfer(pts, target_tree, target);
    report.initial_chamfer = loss;
    report.final_chamfer = loss;
    if (cfg.iterations == 0) {
        report.chamfer_trace.push_back(loss);
        return {current, report};
    }

    const int n_vertices = grid.vertex_count();
    std::vector<Vec3> grad(n_vertices), m1(n_vertices), m2(n_vertices), step(n_vertices);
    int divergent_streak = 0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        // gradient of the fixed-match quadratic at the current point
        std::fill(grad.begin(), grad.end(), Vec3{});
        KdTree3 p_tree(pts);
        std::vector<Vec3> dloss_dq(pts.size(), Vec3{});
        double inv_np = 1.0 / static_cast<double>(pts.size());
        double inv_ng = 1.0 / static_cast<double>(target.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            auto [j, d2] = target_tree.nearest(pts[i]);
            dloss_dq[i] += (pts[i] - target[j]) * (2.0 * inv_np);
        }
        for (const Vec3& y : target) {
            auto [i, d2] = p_tree.nearest(y);
            dloss_dq[i] += (pts[i] - y) * (2.0 * inv_ng);
        }
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& s = samples[i];
            for (int c = 0; c < 3; ++c) {
                const auto& edge = surf.vertex_edges[s.face_vertices[c]];
                Vec3 g = dloss_dq[i] * (0.5 * s.weights[c]);
                grad[edge[0]] += g;
                grad[edge[1]] += g;
            }
        }
        if (movable)
            for (int v = 0; v < n_vertices; ++v)
                if (!(*movable)[v]) grad[v] = Vec3{};

        // Adam direction
        double bc1 = 1.0 - std::pow(cfg.beta1, iter + 1.0);
        double bc2 = 1.0 - std::pow(cfg.beta2, iter + 1.0);
        for (int v = 0; v < n_vertices; ++v)
            for (int c = 0; c < 3; ++c) {
                m1[v][c] = cfg.beta1 * m1[v][c] + (1.0 - cfg.beta1) * grad[v][c];
                m2[v][c] = cfg.beta2 * m2[v][c] + (1.0 - cfg.beta2) * grad[v][c] * grad[v][c];
                step[v][c] = -cfg.learning_rate * (m1[v][c] / bc1) /
                             (std::sqrt(m2[v][c] / bc2) + 1e-12);
            }

        auto try_step = [&](double scale, GridState& out) {
            out = current;
            for (int v = 0; v < n_vertices; ++v)
                for (int c = 0; c < 3; ++c)
                    out.deformation[v][c] = std::clamp(current.deformation[v][c] + scale * step[v][c],
                                                       -grid.delta_max, grid.delta_max);
        };

        GridState candidate;
        double scale = 1.0;
        try_step(scale, candidate);
        std::vector<Vec3> cand_mesh = surf.positions(grid, candidate.deformation);
        std::vector<Vec3> cand_pts = sample_positions(samples, surf, cand_mesh);
        double cand_loss = exact_chamfer(cand_pts, target_tree, target);
        if (cfg.max_halvings > 0) {
            int halvings = 0;
            while (cand_loss > loss && halvings < cfg.max_halvings) {
                scale *= 0.5;
                ++halvings;
                try_step(scale, candidate);
                cand_mesh = surf.positions(grid, candidate.deformation);
                cand_pts = sample_positions(samples, surf, cand_mesh);
                cand_loss = exact_chamfer(cand_pts, target_tree, target);
            }
            if (cand_loss > loss) { // no usable step this iteration
                candidate = current;
                cand_loss = loss;
                cand_pts = pts;
            }
        }
        current = std::move(candidate);
        pts = std::move(cand_pts);
        loss = cand_loss;
        report.chamfer_trace.push_back(loss);

        divergent_streak = loss > 10.0 * report.initial_chamfer ? divergent_streak + 1 : 0;
        if (divergent_streak >= 50)
            throw DivergenceError("optimize_deformations: loss exceeded 10x initial for 50 steps",
                                  report.chamfer_trace);
    }
    report.final_chamfer = loss;
    return {current, report};
}

} // namespace

std::pair<GridState, FitReport> optimize_deformations(const TetGrid& grid, const GridState& state,
                                                      const TriMesh& gt, const FitConfig& cfg) {
    if (gt.faces.empty()) throw GeometryError("optimize_deformations: ground-truth mesh is empty");
    PointCloud target = sample_surface(gt, std::max(16, cfg.chamfer_samples), mix_seed(cfg.seed, 0x67));
    return optimize_core(grid, state, target.points, cfg, nullptr, nullptr, FitReport{});
}

std::vector<FitOutcome> fit_dataset(const std::vector<TriMesh>& meshes,
                                    const std::vector<std::string>& ids, const TetGrid& grid,
                                    const FitConfig& cfg, const std::string& out_dir) {
    if (meshes.empty()) throw std::invalid_argument("fit_dataset: empty mesh list");
    if (ids.size() != meshes.size()) throw std::invalid_argument("fit_dataset: ids/meshes size mismatch");

    std::vector<FitOutcome> outcomes;
    int failures = 0;
    for (std::size_t i = 0; i < meshes.size(); ++i) {
        FitOutcome out;
        out.id = ids[i];
        try {
            FitConfig item_cfg = cfg;
            item_cfg.seed = mix_seed(cfg.seed, i);
            FitReport report;
            GridState signs = fit_signs(grid, meshes[i], &report);
            auto [state, rep] = optimize_core(
                grid, signs,
                sample_surface(meshes[i], std::max(16, cfg.chamfer_samples), mix_seed(item_cfg.seed, 0x67))
                    .points,
                item_cfg, nullptr, nullptr, std::move(report));
            int flips = 0;
            for (int v = 0; v < grid.vertex_count(); ++v) flips += state.sdf[v] != signs.sdf[v];
            rep.sign_flips = flips;
            out.state = std::move(state);
            out.report = std::move(rep);
            out.ok = true;
            if (!out_dir.empty()) {
                std::filesystem::create_directories(out_dir);
                save_tetg(out.state, grid.resolution,
                          (std::filesystem::path(out_dir) / (out.id + ".tetg")).string());
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
            ++failures;
        }
        outcomes.push_back(std::move(out));
    }
    if (failures == static_cast<int>(meshes.size()))
        throw std::runtime_error("fit_dataset: every item failed; first error: " + outcomes[0].error);
    return outcomes;
}

void save_fit_records(const std::vector<FitOutcome>& outcomes, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("fit records: cannot open for writing: " + path);
    for (const auto& o : outcomes) {
        nlohmann::json j{{"id", o.id}, {"ok", o.ok}};
        if (o.ok) {
            j["final_chamfer"] = o.report.final_chamfer;
            j["initial_chamfer"] = o.report.initial_chamfer;
            j["iterations"] = o.report.chamfer_trace.size();
            j["sign_flips"] = o.report.sign_flips;
            j["warnings"] = o.report.warnings;
        } else {
            j["error"] = o.error;
        }
        std::string s = j.dump();
        std::fwrite(s.data(), 1, s.size(), f);
        std::fputc('\n', f);
    }
    std::fclose(f);
}

SingleViewFit fit_singleview(const TetGrid& grid, const DepthView& view, const FitConfig& cfg) {
    if (view.hit_count() == 0) throw VisibilityError("fit_singleview: view has no hit pixels");

    const double h = grid.cell_edge();
    Vec3 fwd, right, up;
    view.frame(fwd, right, up);
    double cx = 0.5 * (view.width - 1), cy = 0.5 * (view.height - 1);

    const int n = grid.vertex_count();
    GridState state = GridState::zeros(n);
    state.normalized = true;
    std::vector<std::uint8_t> carved(n, 0); // direct depth-comparison classification
    std::vector<std::uint8_t> sees(n, 0);   // lands on a hit pixel within the visibility band

    for (int v = 0; v < n; ++v) {
        state.sdf[v] = 1.0;
        Vec3 q = grid.vertex_positions[v] - view.camera_pos;
        double z = dot(q, fwd);
        if (z <= 1e-9) continue; // behind the camera: unknown
        int col = static_cast<int>(std::lround(cx + view.focal * dot(q, right) / z));
        int row = static_cast<int>(std::lround(cy - view.focal * dot(q, up) / z));
        if (col < 0 || col >= view.width || row < 0 || row >= view.height) continue;
        double tv = norm(q);
        double observed = view.at(row, col);
        if (!view.hit(row, col)) {
            carved[v] = 1; // ray escapes: free space
            continue;
        }
        if (tv < observed - h) {
            carved[v] = 1; // strictly in front of the surface
        } else if (tv <= observed + h) {
            carved[v] = 1;
            state.sdf[v] = tv <= observed ? 1.0 : -1.0; // band around the surface
            sees[v] = 1;
        } else {
            state.sdf[v] = -1.0; // behind the surface; known only via a visible tet
            sees[v] = 0;
        }
    }

    std::vector<std::uint8_t> tet_visible(grid.tet_count(), 0);
    std::vector<std::uint8_t> known = carved;
    for (int t = 0; t < grid.tet_count(); ++t) {
        const auto& tet = grid.tets[t];
        for (int i = 0; i < 4; ++i) tet_visible[t] |= sees[tet[i]];
        if (tet_visible[t])
            for (int i = 0; i < 4; ++i) known[tet[i]] = 1;
    }

    // refine deformations of known vertices against back-projected hit points
    std::vector<Vec3> target;
    target.reserve(view.hit_count());
    for (int row = 0; row < view.height; ++row)
        for (int col = 0; col < view.width; ++col)
            if (view.hit(row, col))
                target.push_back(view.camera_pos + view.pixel_ray(row, col) * view.at(row, col));
    if (static_cast<int>(target.size()) > cfg.chamfer_samples) {
        Rng rng(mix_seed(cfg.seed, 0x5d));
        std::vector<Vec3> sub(cfg.chamfer_samples);
        for (auto& p : sub) p = target[rng.index(target.size())];
        target = std::move(sub);
    }

    SingleViewFit result;
    try {
        auto [refined, report] =
            optimize_core(grid, state, target, cfg, &known, &tet_visible, FitReport{});
        result.state = std::move(refined);
    } catch (const GeometryError&) {
        result.state = std::move(state); // no visible crossing surface; keep the carved signs
    }
    result.known = std::move(known);
    return result;
}

} // namespace tetdiff
