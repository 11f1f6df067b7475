#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "tetdiff/metrics.hpp"
#include "tetdiff/rng.hpp"

using namespace tetdiff;

namespace {

PointCloud cloud(std::initializer_list<Vec3> pts) {
    PointCloud c;
    c.points = pts;
    return c;
}

PointCloud random_cloud(Rng& rng, int n, Vec3 center = {0, 0, 0}, double spread = 0.3) {
    PointCloud c;
    c.points.reserve(n);
    for (int i = 0; i < n; ++i) c.points.push_back(center + rng.normal3() * spread);
    return c;
}

double brute_chamfer(const PointCloud& a, const PointCloud& b) {
    auto side = [](const PointCloud& x, const PointCloud& y) {
        double s = 0.0;
        for (const Vec3& p : x.points) {
            double best = 1e300;
            for (const Vec3& q : y.points) best = std::min(best, norm2(p - q));
            s += best;
        }
        return s / x.points.size();
    };
    return side(a, b) + side(b, a);
}

double brute_emd(const PointCloud& a, const PointCloud& b) {
    int n = static_cast<int>(a.points.size());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += norm(a.points[i] - b.points[perm[i]]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / n;
}

} // namespace

TEST_CASE("chamfer: identities, singleton pair, kd-tree equals brute force") {
    PointCloud a = cloud({{0, 0, 0}, {1, 1, 1}});
    CHECK(chamfer(a, a) == 0.0);
    CHECK(chamfer(cloud({{0, 0, 0}}), cloud({{1, 0, 0}})) == 2.0);

    Rng rng(5);
    PointCloud x = random_cloud(rng, 64), y = random_cloud(rng, 64);
    CHECK(chamfer(x, y) == brute_chamfer(x, y)); // exact: same arithmetic, same minima
    CHECK(chamfer(x, y) == chamfer(y, x));

    CHECK_THROWS_AS(chamfer(PointCloud{}, a), std::invalid_argument);
}

TEST_CASE("emd: identities, permutation invariance, approximate within 1% of exact") {
    PointCloud a = cloud({{0, 0, 0}, {1, 0, 0}});
    PointCloud b = cloud({{1, 0, 0}, {0, 0, 0}});
    CHECK(emd(a, a, EmdMode::Exact) == 0.0);
    CHECK(emd(a, b, EmdMode::Exact) == 0.0);

    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        PointCloud x = random_cloud(rng, 8), y = random_cloud(rng, 8);
        double exact = emd(x, y, EmdMode::Exact);
        CHECK(exact == doctest::Approx(brute_emd(x, y)).epsilon(1e-12));
        EmdResult approx = emd_detail(x, y, EmdMode::Approximate);
        CHECK(approx.certified_gap <= 0.01 + 1e-12);
        CHECK(approx.cost >= exact - 1e-12);
        CHECK(approx.cost <= exact * 1.01 + 1e-12);
    }

    CHECK_THROWS_AS(emd(cloud({{0, 0, 0}}), a, EmdMode::Exact), std::invalid_argument);
    PointCloud big;
    big.points.assign(600, Vec3{});
    CHECK_THROWS_AS(emd(big, big, EmdMode::Exact), std::invalid_argument);
}

TEST_CASE("set metrics match brute-force references on small sets") {
    Rng rng(7);
    ShapeSet gen, ref;
    for (int i = 0; i < 5; ++i) gen.clouds.push_back(random_cloud(rng, 16, {0.1 * i, 0, 0}));
    for (int i = 0; i < 4; ++i) ref.clouds.push_back(random_cloud(rng, 16, {0, 0.1 * i, 0}));

    std::vector<std::vector<double>> d(gen.size(), std::vector<double>(ref.size()));
    for (int g = 0; g < gen.size(); ++g)
        for (int r = 0; r < ref.size(); ++r) d[g][r] = brute_chamfer(gen.clouds[g], ref.clouds[r]);

    // mmd: mean over ref of min over gen
    double expected_mmd = 0.0;
    for (int r = 0; r < ref.size(); ++r) {
        double best = 1e300;
        for (int g = 0; g < gen.size(); ++g) best = std::min(best, d[g][r]);
        expected_mmd += best;
    }
    expected_mmd /= ref.size();
    CHECK(mmd(gen, ref, CloudDistance::CD) == doctest::Approx(expected_mmd).epsilon(1e-12));

    // coverage: distinct refs claimed by some gen's argmin
    std::vector<char> covered(ref.size(), 0);
    for (int g = 0; g < gen.size(); ++g) {
        int arg = 0;
        for (int r = 1; r < ref.size(); ++r)
            if (d[g][r] < d[g][arg]) arg = r;
        covered[arg] = 1;
    }
    double expected_cov =
        static_cast<double>(std::count(covered.begin(), covered.end(), 1)) / ref.size();
    CHECK(coverage(gen, ref, CloudDistance::CD) == doctest::Approx(expected_cov).epsilon(1e-12));

    // 1-nna: leave-one-out vote over the union
    int N = gen.size() + ref.size();
    auto dist = [&](int i, int j) {
        const PointCloud& a = i < gen.size() ? gen.clouds[i] : ref.clouds[i - gen.size()];
        const PointCloud& b = j < gen.size() ? gen.clouds[j] : ref.clouds[j - gen.size()];
        return brute_chamfer(a, b);
    };
    int correct = 0;
    for (int i = 0; i < N; ++i) {
        int nn = -1;
        double best = 1e300;
        for (int j = 0; j < N; ++j) {
            if (i == j) continue;
            double c = dist(i, j);
            if (c < best) {
                best = c;
                nn = j;
            }
        }
        correct += (i < gen.size()) == (nn < gen.size());
    }
    CHECK(one_nna(gen, ref, CloudDistance::CD) ==
          doctest::Approx(static_cast<double>(correct) / N).epsilon(1e-12));
}

TEST_CASE("metric identities: mmd(S,S)=0, coverage(S,S)=1, degenerate gen") {
    Rng rng(8);
    ShapeSet s;
    for (int i = 0; i < 6; ++i) s.clouds.push_back(random_cloud(rng, 12, {0.3 * i, 0, 0}, 0.05));
    CHECK(mmd(s, s, CloudDistance::CD) == 0.0);
    CHECK(coverage(s, s, CloudDistance::CD) == 1.0);

    ShapeSet identical;
    for (int i = 0; i < 5; ++i) identical.clouds.push_back(s.clouds[0]);
    CHECK(coverage(identical, s, CloudDistance::CD) == doctest::Approx(1.0 / 6.0));

    // disjoint clusters are perfectly separable
    ShapeSet far;
    for (int i = 0; i < 6; ++i) far.clouds.push_back(random_cloud(rng, 12, {40.0 + i, 0, 0}, 0.05));
    CHECK(one_nna(far, s, CloudDistance::CD) == 1.0);
}

TEST_CASE("1-nna concentrates near 0.5 on split halves of one distribution") {
    Rng rng(20250607);
    ShapeSet a, b;
    for (int i = 0; i < 100; ++i) a.clouds.push_back(random_cloud(rng, 32));
    for (int i = 0; i < 100; ++i) b.clouds.push_back(random_cloud(rng, 32));
    double v = one_nna(a, b, CloudDistance::CD);
    CHECK(v == doctest::Approx(0.5).epsilon(0.1)); // 0.5 +- 0.05
}

TEST_CASE("jsd: identities, disjoint supports, and a hand-computed histogram") {
    Rng rng(9);
    ShapeSet s;
    s.clouds.push_back(random_cloud(rng, 64, {0, 0, 0}, 0.2));
    CHECK(jsd(s, s) == 0.0);

    ShapeSet left, right;
    left.clouds.push_back(cloud({{-0.5, -0.5, -0.5}, {-0.6, -0.4, -0.5}}));
    right.clouds.push_back(cloud({{0.5, 0.5, 0.5}, {0.6, 0.4, 0.5}}));
    CHECK(jsd(left, right, 2) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // histograms (0.5, 0.5) vs (1, 0) at resolution 2 along x
    ShapeSet ha, hb;
    ha.clouds.push_back(cloud({{-0.5, -0.5, -0.5}, {0.5, -0.5, -0.5}}));
    hb.clouds.push_back(cloud({{-0.5, -0.5, -0.5}, {-0.5, -0.5, -0.5}}));
    CHECK(jsd(ha, hb, 2) == doctest::Approx(0.215761).epsilon(1e-4));

    // out-of-range points are clipped and counted
    ShapeSet wild;
    wild.clouds.push_back(cloud({{3.0, 0, 0}, {0, 0, 0}}));
    int clipped = 0;
    jsd(wild, s, 28, &clipped);
    CHECK(clipped == 1);
}

TEST_CASE("nearest_neighbor: identity, tie-break, brute force") {
    Rng rng(10);
    ShapeSet set;
    for (int i = 0; i < 10; ++i) set.clouds.push_back(random_cloud(rng, 16, {0.4 * i, 0, 0}));

    auto [idx, d] = nearest_neighbor(set.clouds[3], set, CloudDistance::CD);
    CHECK(idx == 3);
    CHECK(d == 0.0);

    // two equidistant candidates: lower index wins
    ShapeSet two;
    two.clouds.push_back(cloud({{1, 0, 0}}));
    two.clouds.push_back(cloud({{-1, 0, 0}}));
    auto [tie_idx, tie_d] = nearest_neighbor(cloud({{0, 0, 0}}), two, CloudDistance::CD);
    CHECK(tie_idx == 0);
    CHECK(tie_d == doctest::Approx(2.0));

    PointCloud q = random_cloud(rng, 16, {0.5, 0.1, 0});
    int best = 0;
    double best_d = 1e300;
    for (int i = 0; i < set.size(); ++i) {
        double c = brute_chamfer(q, set.clouds[i]);
        if (c < best_d) {
            best_d = c;
            best = i;
        }
    }
    auto [got, got_d] = nearest_neighbor(q, set, CloudDistance::CD);
    CHECK(got == best);
    CHECK(got_d == doctest::Approx(best_d).epsilon(1e-12));
}

TEST_CASE("evaluate_sets produces a consistent report and serializes") {
    Rng rng(11);
    ShapeSet gen, ref;
    for (int i = 0; i < 4; ++i) gen.clouds.push_back(random_cloud(rng, 32, {0.2 * i, 0, 0}));
    for (int i = 0; i < 4; ++i) ref.clouds.push_back(random_cloud(rng, 32, {0.2 * i, 0.1, 0}));
    MetricsOptions opts;
    opts.emd_subsample = 16;
    MetricsReport r = evaluate_sets(gen, ref, opts);
    CHECK(r.cov_cd >= 0.0);
    CHECK(r.cov_cd <= 1.0);
    CHECK(r.cov_emd >= 0.0);
    CHECK(r.nna_cd >= 0.0);
    CHECK(r.nna_cd <= 1.0);
    CHECK(r.jsd_value >= 0.0);
    CHECK(r.jsd_value <= std::log(2.0) + 1e-12);
    CHECK(r.mmd_cd >= 0.0);
    CHECK(r.gen_size == 4);
    CHECK(!format_metrics_table(r).empty());
}
