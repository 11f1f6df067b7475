#include "tetdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "tetdiff/errors.hpp"
#include "tetdiff/parallel.hpp"
#include "tetdiff/rng.hpp"
#include "tetdiff/spatial.hpp"

namespace tetdiff {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_nonempty(const PointCloud& c, const char* what) {
    if (c.points.empty()) throw std::invalid_argument(std::string(what) + ": empty point cloud");
}

void require_nonempty(const ShapeSet& s, const char* what) {
    if (s.clouds.empty()) throw std::invalid_argument(std::string(what) + ": empty shape set");
    for (const auto& c : s.clouds) require_nonempty(c, what);
}

} // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
    require_nonempty(a, "chamfer");
    require_nonempty(b, "chamfer");
    auto one_side = [](const PointCloud& from, const PointCloud& to) {
        double sum = 0.0;
        if (from.points.size() * to.points.size() <= 4096) {
            for (const Vec3& p : from.points) {
                double best = kInf;
                for (const Vec3& q : to.points) best = std::min(best, norm2(p - q));
                sum += best;
            }
        } else {
            KdTree3 tree(to.points);
            for (const Vec3& p : from.points) sum += tree.nearest(p).second;
        }
        return sum / static_cast<double>(from.points.size());
    };
    return one_side(a, b) + one_side(b, a);
}

double solve_assignment(int n, const std::vector<double>& cost, std::vector<int>* match) {
    // shortest augmenting paths with row/column potentials, O(n^3)
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = -1;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0.0;
    if (match) match->assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        total += cost[(p[j] - 1) * n + (j - 1)];
        if (match) (*match)[p[j] - 1] = j - 1;
    }
    return total;
}

namespace {

// Forward auction for the assignment problem (minimization). With bidding
// increment floor eps, the result is within n*eps of optimal.
double auction_round(int n, const std::vector<double>& cost, double eps, std::vector<int>& owner,
                     std::vector<double>& price) {
    std::vector<int> assigned_to(n, -1); // person -> object
    for (int j = 0; j < n; ++j)
        if (owner[j] >= 0) assigned_to[owner[j]] = j;

    std::deque<int> queue;
    for (int i = 0; i < n; ++i)
        if (assigned_to[i] < 0) queue.push_back(i);

    while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        double best = -kInf, second = -kInf;
        int best_j = -1;
        const double* row = cost.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            double value = -row[j] - price[j];
            if (value > best) {
                second = best;
                best = value;
                best_j = j;
            } else if (value > second) {
                second = value;
            }
        }
        double bid = (second == -kInf ? eps : best - second + eps);
        price[best_j] += bid;
        int displaced = owner[best_j];
        owner[best_j] = i;
        assigned_to[i] = best_j;
        if (displaced >= 0) {
            assigned_to[displaced] = -1;
            queue.push_back(displaced);
        }
    }
    double total = 0.0;
    for (int j = 0; j < n; ++j) total += cost[static_cast<std::size_t>(owner[j]) * n + j];
    return total;
}

} // namespace

EmdResult emd_detail(const PointCloud& a, const PointCloud& b, EmdMode mode) {
    require_nonempty(a, "emd");
    require_nonempty(b, "emd");
    if (a.points.size() != b.points.size())
        throw std::invalid_argument("emd: clouds must have equal size");
    const int n = static_cast<int>(a.points.size());
    if (mode == EmdMode::Exact && n > 512)
        throw std::invalid_argument("emd: exact mode limited to n <= 512");

    std::vector<double> cost(static_cast<std::size_t>(n) * n);
    double max_cost = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double d = norm(a.points[i] - b.points[j]);
            cost[static_cast<std::size_t>(i) * n + j] = d;
            max_cost = std::max(max_cost, d);
        }

    EmdResult out;
    if (mode == EmdMode::Exact) {
        out.cost = solve_assignment(n, cost) / n;
        out.certified_gap = 0.0;
        return out;
    }

    std::vector<int> owner(n, -1);
    std::vector<double> price(n, 0.0);
    double eps = std::max(max_cost / 8.0, 1e-300);
    double total = auction_round(n, cost, eps, owner, price);
    // epsilon scaling until the n*eps optimality bound is within 1%
    while (total > 0.0 && n * eps > 0.01 * total) {
        eps /= 6.0;
        std::fill(owner.begin(), owner.end(), -1);
        total = auction_round(n, cost, eps, owner, price);
    }
    out.cost = total / n;
    out.certified_gap = total > 0.0 ? n * eps / total : 0.0;
    return out;
}

double emd(const PointCloud& a, const PointCloud& b, EmdMode mode) {
    return emd_detail(a, b, mode).cost;
}

namespace {

double cloud_distance(const PointCloud& a, const PointCloud& b, CloudDistance dist) {
    return dist == CloudDistance::CD ? chamfer(a, b) : emd(a, b, EmdMode::Approximate);
}

// rows = gen, cols = ref
std::vector<double> cross_distances(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist) {
    std::vector<double> d(static_cast<std::size_t>(gen.size()) * ref.size());
    parallel_chunks(d.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k)
            d[k] = cloud_distance(gen.clouds[k / ref.size()], ref.clouds[k % ref.size()], dist);
    });
    return d;
}

} // namespace

double mmd(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist) {
    require_nonempty(gen, "mmd");
    require_nonempty(ref, "mmd");
    std::vector<double> d = cross_distances(gen, ref, dist);
    double sum = 0.0;
    for (int r = 0; r < ref.size(); ++r) {
        double best = kInf;
        for (int g = 0; g < gen.size(); ++g) best = std::min(best, d[static_cast<std::size_t>(g) * ref.size() + r]);
        sum += best;
    }
    return sum / ref.size();
}

double coverage(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist) {
    require_nonempty(gen, "coverage");
    require_nonempty(ref, "coverage");
    std::vector<double> d = cross_distances(gen, ref, dist);
    std::vector<std::uint8_t> covered(ref.size(), 0);
    for (int g = 0; g < gen.size(); ++g) {
        int best_r = 0;
        double best = kInf;
        for (int r = 0; r < ref.size(); ++r) {
            double cur = d[static_cast<std::size_t>(g) * ref.size() + r];
            if (cur < best) {
                best = cur;
                best_r = r;
            }
        }
        covered[best_r] = 1;
    }
    int n = 0;
    for (auto c : covered) n += c;
    return static_cast<double>(n) / ref.size();
}

double one_nna(const ShapeSet& gen, const ShapeSet& ref, CloudDistance dist) {
    require_nonempty(gen, "one_nna");
    require_nonempty(ref, "one_nna");
    const int G = gen.size(), R = ref.size(), N = G + R;
    if (N < 2) throw std::invalid_argument("one_nna: need at least 2 clouds");

    auto cloud_at = [&](int i) -> const PointCloud& {
        return i < G ? gen.clouds[i] : ref.clouds[i - G];
    };
    std::vector<double> d(static_cast<std::size_t>(N) * N, kInf);
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j) pairs.emplace_back(i, j);
    parallel_chunks(pairs.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
            auto [i, j] = pairs[k];
            double v = cloud_distance(cloud_at(i), cloud_at(j), dist);
            d[static_cast<std::size_t>(i) * N + j] = v;
            d[static_cast<std::size_t>(j) * N + i] = v;
        }
    });

    int correct = 0;
    for (int i = 0; i < N; ++i) {
        int nn = -1;
        double best = kInf;
        for (int j = 0; j < N; ++j) {
            if (j == i) continue;
            double cur = d[static_cast<std::size_t>(i) * N + j];
            if (cur < best) { // ties keep the smaller j
                best = cur;
                nn = j;
            }
        }
        bool same_set = (i < G) == (nn < G);
        correct += same_set;
    }
    return static_cast<double>(correct) / N;
}

double jsd(const ShapeSet& gen, const ShapeSet& ref, int voxel_res, int* clipped_out) {
    require_nonempty(gen, "jsd");
    require_nonempty(ref, "jsd");
    if (voxel_res < 1) throw std::invalid_argument("jsd: voxel resolution must be positive");

    int clipped = 0;
    auto histogram = [&](const ShapeSet& s) {
        std::vector<double> h(static_cast<std::size_t>(voxel_res) * voxel_res * voxel_res, 0.0);
        double total = 0.0;
        for (const auto& cloud : s.clouds)
            for (const Vec3& p : cloud.points) {
                bool in_range = true;
                int idx[3];
                for (int c = 0; c < 3; ++c) {
                    double t = (p[c] + 1.0) / 2.0 * voxel_res;
                    if (t < 0.0 || t > voxel_res) in_range = false;
                    idx[c] = std::clamp(static_cast<int>(t), 0, voxel_res - 1);
                }
                clipped += !in_range;
                h[(static_cast<std::size_t>(idx[0]) * voxel_res + idx[1]) * voxel_res + idx[2]] += 1.0;
                total += 1.0;
            }
        for (double& x : h) x /= total;
        return h;
    };

    std::vector<double> pa = histogram(gen), pb = histogram(ref);
    double div = 0.0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        double m = 0.5 * (pa[i] + pb[i]);
        if (pa[i] > 0.0) div += 0.5 * pa[i] * std::log(pa[i] / m);
        if (pb[i] > 0.0) div += 0.5 * pb[i] * std::log(pb[i] / m);
    }
    if (clipped_out) *clipped_out = clipped;
    return div;
}

std::pair<int, double> nearest_neighbor(const PointCloud& query, const ShapeSet& dataset,
                                        CloudDistance dist) {
    require_nonempty(query, "nearest_neighbor");
    require_nonempty(dataset, "nearest_neighbor");
    std::vector<double> d(dataset.size());
    parallel_chunks(d.size(), [&](std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) d[k] = cloud_distance(query, dataset.clouds[k], dist);
    });
    int best = 0;
    for (int k = 1; k < dataset.size(); ++k)
        if (d[k] < d[best]) best = k;
    return {best, d[best]};
}

namespace {

ShapeSet subsample_set(const ShapeSet& s, int n, std::uint64_t seed) {
    ShapeSet out;
    out.ids = s.ids;
    for (int i = 0; i < s.size(); ++i) {
        const auto& pts = s.clouds[i].points;
        PointCloud c;
        c.seed = seed;
        if (static_cast<int>(pts.size()) <= n) {
            c.points = pts;
        } else {
            Rng rng(mix_seed(seed, i));
            c.points.reserve(n);
            for (int k = 0; k < n; ++k) c.points.push_back(pts[rng.index(pts.size())]);
        }
        out.clouds.push_back(std::move(c));
    }
    return out;
}

} // namespace

MetricsReport evaluate_sets(const ShapeSet& gen, const ShapeSet& ref, const MetricsOptions& opts) {
    require_nonempty(gen, "evaluate_sets");
    require_nonempty(ref, "evaluate_sets");

    MetricsReport r;
    r.gen_size = gen.size();
    r.ref_size = ref.size();
    r.cloud_points = gen.clouds[0].size();
    r.seed = opts.seed;
    r.mmd_cd = mmd(gen, ref, CloudDistance::CD);
    r.cov_cd = coverage(gen, ref, CloudDistance::CD);
    r.nna_cd = one_nna(gen, ref, CloudDistance::CD);
    r.jsd_value = jsd(gen, ref, opts.jsd_resolution);
    if (opts.with_emd) {
        // same subsample seed on both sides so identical sets stay identical
        ShapeSet g = subsample_set(gen, opts.emd_subsample, opts.seed);
        ShapeSet f = subsample_set(ref, opts.emd_subsample, opts.seed);
        r.emd_points = std::min(r.cloud_points, opts.emd_subsample);
        r.mmd_emd = mmd(g, f, CloudDistance::EMD);
        r.cov_emd = coverage(g, f, CloudDistance::EMD);
        r.nna_emd = one_nna(g, f, CloudDistance::EMD);
    }
    return r;
}

std::string format_metrics_table(const MetricsReport& r) {
    std::ostringstream os;
    char line[160];
    os << "metric          CD          EMD\n";
    std::snprintf(line, sizeof line, "MMD     %10.6f   %10.6f\n", r.mmd_cd, r.mmd_emd);
    os << line;
    std::snprintf(line, sizeof line, "COV     %10.4f   %10.4f\n", r.cov_cd, r.cov_emd);
    os << line;
    std::snprintf(line, sizeof line, "1-NNA   %10.4f   %10.4f\n", r.nna_cd, r.nna_emd);
    os << line;
    std::snprintf(line, sizeof line, "JSD     %10.6f\n", r.jsd_value);
    os << line;
    std::snprintf(line, sizeof line, "sets: gen=%d ref=%d, %d pts (EMD on %d), seed=%llu\n", r.gen_size,
                  r.ref_size, r.cloud_points, r.emd_points,
                  static_cast<unsigned long long>(r.seed));
    os << line;
    return os.str();
}

void save_metrics_records(const MetricsReport& r, const std::string& path) {
    nlohmann::json j{{"mmd_cd", r.mmd_cd},   {"mmd_emd", r.mmd_emd}, {"cov_cd", r.cov_cd},
                     {"cov_emd", r.cov_emd}, {"nna_cd", r.nna_cd},   {"nna_emd", r.nna_emd},
                     {"jsd", r.jsd_value},   {"gen_size", r.gen_size}, {"ref_size", r.ref_size},
                     {"cloud_points", r.cloud_points}, {"emd_points", r.emd_points}, {"seed", r.seed}};
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("metrics: cannot open for writing: " + path);
    std::string s = j.dump();
    std::fwrite(s.data(), 1, s.size(), f);
    std::fputc('\n', f);
    std::fclose(f);
}

} // namespace tetdiff
