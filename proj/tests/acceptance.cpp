// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Reference values are computed here independently of
// the library code paths they check.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "viewsphere/viewsphere.hpp"

using namespace viewsphere;
namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kSphereSeconds = 5.0;
constexpr double kGoldSumTol = 1e-12;
constexpr double kKlSelfMax = 1e-6;
constexpr double kKlUniformTol = 1e-9;
constexpr double kLossClosedTol = 1e-9;
constexpr double kGradRelTol = 1e-4;
constexpr double kFdStep = 1e-6;
constexpr double kBetaZeroTol = 1e-12;
constexpr double kBayesSolveRate = 0.9;
constexpr double kBenchSeconds = 600.0;
constexpr std::size_t kExhaustive = 1002;

struct Check {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

int failures = 0;

void report(const std::string& name, const std::function<Check()>& body) {
    Check c;
    try {
        c = body();
    } catch (const std::exception& e) {
        c.ok = false;
        c.detail = std::string("exception: ") + e.what();
    }
    if (!c.ok) ++failures;
    std::cout << (c.ok ? "PASS " : "FAIL ") << name << (c.detail.empty() ? "" : ": " + c.detail) << std::endl;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::vector<int> bfs(const PolySphere& s, CellId origin) {
    std::vector<int> d(s.size(), -1);
    std::deque<CellId> q{origin};
    d[origin] = 0;
    while (!q.empty()) {
        const CellId c = q.front();
        q.pop_front();
        for (CellId n : s.neighbors(c)) {
            if (d[n] < 0) {
                d[n] = d[c] + 1;
                q.push_back(n);
            }
        }
    }
    return d;
}

/// A cell at least `clearance` hops from every pentagon, found by BFS.
CellId far_from_pentagons(const PolySphere& s, int clearance) {
    std::vector<int> best(s.size(), 1 << 20);
    for (CellId c = 0; c < s.size(); ++c) {
        if (s.neighbors(c).size() == 5) {
            const auto d = bfs(s, c);
            for (CellId x = 0; x < s.size(); ++x) best[x] = std::min(best[x], d[x]);
        }
    }
    for (CellId c = 0; c < s.size(); ++c) {
        if (best[c] >= clearance) return c;
    }
    throw std::runtime_error("no cell with pentagon clearance " + std::to_string(clearance));
}

double row_cos(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    double dot = 0, na = 0, nb = 0;
    for (Eigen::Index k = 0; k < a.cols(); ++k) {
        dot += a(i, k) * b(j, k);
        na += a(i, k) * a(i, k);
        nb += b(j, k) * b(j, k);
    }
    return dot / std::sqrt(na * nb);
}

Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

// ---------------------------------------------------------------------------

Check sphere_geometry() {
    Check c;
    const auto t0 = Clock::now();
    const auto s = PolySphere::build(10);
    std::size_t pentagons = 0;
    bool symmetric = true;
    for (CellId a = 0; a < s.size(); ++a) {
        const auto nb = s.neighbors(a);
        pentagons += nb.size() == 5;
        c.require(nb.size() == 5 || nb.size() == 6, "cell " + std::to_string(a) + " has degree " + std::to_string(nb.size()));
        for (CellId b : nb) {
            const auto back = s.neighbors(b);
            symmetric = symmetric && std::find(back.begin(), back.end(), a) != back.end();
        }
    }
    const auto d = bfs(s, 0);
    const bool connected = std::none_of(d.begin(), d.end(), [](int x) { return x < 0; });
    const CellId hex = far_from_pentagons(s, 4);
    const auto dh = bfs(s, hex);
    std::array<std::size_t, 4> ring{};
    for (int x : dh) {
        if (x >= 0 && x <= 3) ++ring[static_cast<std::size_t>(x)];
    }
    bool library_rings = true;
    for (int k = 1; k <= 3; ++k) library_rings = library_rings && s.ring(hex, k).size() == ring[static_cast<std::size_t>(k)];
    const double secs = seconds_since(t0);
    c.require(s.size() == 1002, "cell count " + std::to_string(s.size()));
    c.require(pentagons == 12, "pentagons " + std::to_string(pentagons));
    c.require(symmetric, "adjacency not symmetric");
    c.require(connected, "adjacency not connected");
    c.require(ring[1] == 6 && ring[2] == 12 && ring[3] == 18,
              "ring sizes " + std::to_string(ring[1]) + "/" + std::to_string(ring[2]) + "/" + std::to_string(ring[3]));
    c.require(library_rings, "library rings differ from BFS");
    c.require(secs < kSphereSeconds, "took " + num(secs) + " s");
    if (c.ok) c.detail = "1002 cells, 12 pentagons, rings 6/12/18 at cell " + std::to_string(hex) + ", " + num(secs) + " s";
    return c;
}

Check gold_distribution_check() {
    Check c;
    const auto s = PolySphere::build(10);
    const CellId hex = far_from_pentagons(s, 4);
    const auto g = gold_distribution(s, hex);
    double sum = 0.0;
    for (double w : g.weights) sum += w;
    const auto d = bfs(s, hex);
    std::array<double, 4> lo{1, 1, 1, 1}, hi{0, 0, 0, 0};
    bool outside_zero = true;
    for (CellId x = 0; x < s.size(); ++x) {
        if (d[x] <= 3) {
            lo[static_cast<std::size_t>(d[x])] = std::min(lo[static_cast<std::size_t>(d[x])], g.weights[x]);
            hi[static_cast<std::size_t>(d[x])] = std::max(hi[static_cast<std::size_t>(d[x])], g.weights[x]);
        } else {
            outside_zero = outside_zero && g.weights[x] == 0.0;
        }
    }
    c.require(std::abs(sum - 1.0) <= kGoldSumTol, "sum " + num(sum - 1.0) + " off 1");
    c.require(g.support_size() == 37, "support " + std::to_string(g.support_size()));
    c.require(outside_zero, "mass outside three rings");
    for (std::size_t k = 0; k < 3; ++k) {
        c.require(lo[k] > hi[k + 1], "ring " + std::to_string(k) + " not above ring " + std::to_string(k + 1));
    }
    if (c.ok) c.detail = "sum-1 = " + num(sum - 1.0) + ", support 37, ring weights strictly decreasing";
    return c;
}

Check kl_check() {
    Check c;
    const auto s = PolySphere::build(10);
    const CellId hex = far_from_pentagons(s, 4);
    const auto g = gold_distribution(s, hex);
    const double self = kl_divergence(g, normalize_scores(g.weights));
    const std::vector<double> uniform(s.size(), 1.0 / static_cast<double>(s.size()));
    double analytic = 0.0;
    for (double w : g.weights) {
        if (w > 0) analytic += w * std::log(w * static_cast<double>(s.size()));
    }
    const double got = kl_divergence(g.weights, uniform);
    Rng rng(2024);
    double worst = 1.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 2 + rng.below(30);
        std::vector<double> p(n), q(n);
        double sp = 0, sq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
            q[i] = rng.uniform() + 1e-12;
            sp += p[i];
            sq += q[i];
        }
        if (sp == 0.0) {
            p[0] = 1.0;
            sp = 1.0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            p[i] /= sp;
            q[i] /= sq;
        }
        worst = std::min(worst, kl_divergence(p, q));
    }
    c.require(self < kKlSelfMax, "KL(gold, gold) = " + num(self));
    c.require(std::abs(got - analytic) <= kKlUniformTol, "uniform KL " + num(got) + " vs " + num(analytic));
    c.require(worst >= 0.0, "negative KL " + num(worst));
    if (c.ok) {
        c.detail = "KL(g,g) = " + num(self) + ", |uniform - analytic| = " + num(std::abs(got - analytic)) +
                   ", min over 1000 pairs = " + num(worst);
    }
    return c;
}

Check losses_check() {
    Check c;
    // identity batch, N = 2, tau = 1: each row -ln(e / (e + 1))
    Matrix I = Matrix::Identity(2, 2);
    const double id = contrastive_loss(I, I, 1.0).loss;
    const double id_want = 2.0 * (std::log(std::exp(1.0) + 1.0) - 1.0);
    c.require(std::abs(id - id_want) <= kLossClosedTol, "identity batch " + num(id) + " vs " + num(id_want));
    for (int n : {2, 5, 17}) {
        Matrix same = Matrix::Ones(n, 4);
        const auto r = contrastive_loss(same, same, 0.07);
        c.require(std::abs(r.v_to_q - std::log(n)) <= kLossClosedTol && std::abs(r.q_to_v - std::log(n)) <= kLossClosedTol,
                  "identical rows, N = " + std::to_string(n));
    }

    Rng rng(77);
    double worst = 0.0;
    for (int batch = 0; batch < 20; ++batch) {
        const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(6));
        const Eigen::Index d = 3 + static_cast<Eigen::Index>(rng.below(6));
        Matrix v = random_matrix(rng, n, d), q = random_matrix(rng, n, d);
        const double tau = rng.uniform(0.1, 1.0);
        const auto r = contrastive_loss(v, q, tau);
        for (int which = 0; which < 2; ++which) {
            Matrix& m = which == 0 ? v : q;
            const Matrix& g = which == 0 ? r.grad_v : r.grad_q;
            for (Eigen::Index i = 0; i < n; ++i) {
                for (Eigen::Index j = 0; j < d; ++j) {
                    const double keep = m(i, j);
                    m(i, j) = keep + kFdStep;
                    const double up = contrastive_loss(v, q, tau).loss;
                    m(i, j) = keep - kFdStep;
                    const double down = contrastive_loss(v, q, tau).loss;
                    m(i, j) = keep;
                    const double fd = (up - down) / (2 * kFdStep);
                    worst = std::max(worst, std::abs(fd - g(i, j)) / std::max(1e-3, std::abs(fd) + std::abs(g(i, j))));
                }
            }
        }
    }
    c.require(worst < kGradRelTol, "gradient relative error " + num(worst));

    // beta_hard = 0: plain mean of e^{f-}
    double beta_zero_err = 0.0;
    bool g_zero = true;
    for (int t = 0; t < 20; ++t) {
        const Matrix a = random_matrix(rng, 4, 5), p = random_matrix(rng, 4, 5), pool = random_matrix(rng, 7, 5);
        const double G = rng.uniform(0.1, 3.0);
        double want = 0.0;
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            double mean = 0.0;
            for (Eigen::Index j = 0; j < pool.rows(); ++j) mean += std::exp(row_cos(a, i, pool, j));
            mean /= static_cast<double>(pool.rows());
            const double pos = std::exp(row_cos(a, i, p, i));
            want += -std::log(pos / (pos + G * mean));
        }
        want /= static_cast<double>(a.rows());
        beta_zero_err = std::max(beta_zero_err, std::abs(hard_negative_loss(a, p, pool, G, 0.0) - want));
        g_zero = g_zero && hard_negative_loss(a, p, pool, 0.0, rng.uniform(0.0, 5.0)) == 0.0;
    }
    c.require(beta_zero_err <= kBetaZeroTol, "beta_hard = 0 error " + num(beta_zero_err));
    c.require(g_zero, "G = 0 is not exactly 0");

    bool linear = true;
    for (int t = 0; t < 20; ++t) {
        EmbeddingBatch b{random_matrix(rng, 6, 5), random_matrix(rng, 6, 5), random_matrix(rng, 9, 5)};
        LossConfig cfg;
        cfg.alpha = rng.uniform(0.1, 2.0);
        cfg.beta = rng.uniform(0.1, 2.0);
        cfg.gamma = rng.uniform(0.1, 2.0);
        const auto base = total_loss(b, cfg);
        linear = linear && base.total == cfg.alpha * base.contrastive + cfg.beta * base.random + cfg.gamma * base.hard;
        LossConfig twice = cfg;
        twice.alpha *= 2;
        twice.beta *= 2;
        twice.gamma *= 2;
        linear = linear && total_loss(b, twice).total == 2.0 * base.total;
        LossConfig only = cfg;
        only.beta = only.gamma = 0.0;
        only.alpha = 1.0;
        linear = linear && total_loss(b, only).total == contrastive_loss(b.Zv, b.Zq, cfg.tau).loss;
    }
    c.require(linear, "total is not exactly the weighted sum");
    if (c.ok) {
        c.detail = "closed forms within " + num(kLossClosedTol) + ", worst gradient rel. error " + num(worst) +
                   ", beta_hard = 0 error " + num(beta_zero_err) + ", G = 0 and linearity exact";
    }
    return c;
}

Check search_check() {
    Check c;
    const auto t0 = Clock::now();
    const auto s = PolySphere::build(10);
    const ViewConvention conv;
    OracleFamily smooth_f, ragged_f;
    smooth_f.kind = OracleKind::Smooth;
    ragged_f.kind = OracleKind::Ragged;
    ragged_f.seed = 7;
    ViewOracleScorer smooth(s, conv, smooth_f), ragged(s, conv, ragged_f);
    std::vector<Query> queries;
    for (auto v : kCanonicalViews) queries.push_back(make_query("object", v));
    BenchmarkConfig cfg;
    cfg.runs = 10;
    cfg.c_max = 300;
    cfg.master_seed = 7;
    const auto table = run_benchmark(s, {{"smooth", &smooth}, {"ragged", &ragged}}, queries, cfg);
    const double secs = seconds_since(t0);

    const double bayes_smooth = table.overall_mean("bayes", "smooth");
    const double greedy_smooth = table.overall_mean("greedy", "smooth");
    const double bayes_ragged = table.overall_mean("bayes", "ragged");
    const double rate = table.overall_solve_rate("bayes", "smooth");
    std::size_t max_solved = 0;
    bool errors = false;
    for (const auto& cell : table.cells) {
        for (const auto& r : cell.runs) {
            if (r.solved) max_solved = std::max(max_solved, r.calls);
            errors = errors || r.error.has_value();
            // independent check of the solved flag against the trace
            if (r.trace) c.require(r.solved == (r.reason == StopReason::Solved && is_solved(*r.trace, s, cell.gold)),
                                   "solved flag disagrees with trace");
        }
    }
    c.require(!errors, "a run raised an error");
    c.require(rate >= kBayesSolveRate, "(a) bayes/smooth solve rate " + num(rate));
    c.require(bayes_smooth < greedy_smooth, "(b) bayes/smooth " + num(bayes_smooth) + " >= greedy/smooth " + num(greedy_smooth));
    c.require(bayes_smooth < bayes_ragged, "(c) bayes/smooth " + num(bayes_smooth) + " >= bayes/ragged " + num(bayes_ragged));
    c.require(max_solved < kExhaustive, "(d) solved run used " + std::to_string(max_solved) + " calls");
    c.require(secs < kBenchSeconds, "benchmark took " + num(secs) + " s");
    c.detail = "bayes/smooth " + num(bayes_smooth) + " (solved " + num(rate * 100) + "%), greedy/smooth " +
               num(greedy_smooth) + ", bayes/ragged " + num(bayes_ragged) + ", greedy/ragged " +
               num(table.overall_mean("greedy", "ragged")) + ", max calls when solved " + std::to_string(max_solved) +
               ", " + num(secs) + " s" + (c.ok ? "" : "; " + c.detail);
    return c;
}

json oracle_manifest(const PolySphere& s, std::size_t objects, const std::vector<std::string>& categories) {
    std::set<CellId> canonical;
    for (auto v : kCanonicalViews) canonical.insert(canonical_cell(s, ViewConvention(), v));
    json recs = json::array();
    for (const auto& cat : categories) {
        for (std::size_t o = 0; o < objects; ++o) {
            const std::string obj = cat + "-" + std::to_string(o);
            const std::string split = o % 3 == 2 ? "test" : "train";
            for (auto v : kCanonicalViews) {
                recs.push_back({{"object", obj}, {"category", cat}, {"split", split}, {"view", to_string(v)},
                                {"image", obj + "/" + std::string(to_string(v)) + ".png"}});
            }
            for (CellId c = static_cast<CellId>(50 + o); c < s.size(); c += 250) {
                if (canonical.count(c)) continue;
                recs.push_back({{"object", obj}, {"category", cat}, {"split", split}, {"cell", c},
                                {"image", obj + "/cell" + std::to_string(c) + ".png"}});
            }
        }
    }
    return {{"format", "viewsphere.manifest"},
            {"version", 1},
            {"sphere_checksum", s.checksum()},
            {"view_convention", {{"up", "+Y"}, {"front", "-Z"}}},
            {"records", recs}};
}

Check retrieval_check() {
    Check c;
    auto ranked = RankedList::from_ordered_ids({"a", "b", "c", "d", "e"});
    const std::set<std::string> rel{"a", "c", "x"};
    c.require(precision_at_k(ranked, rel, 1) == 1.0, "P@1 fixture");
    c.require(precision_at_k(ranked, rel, 2) == 0.5, "P@2 fixture");
    c.require(precision_at_k(ranked, rel, 4) == 0.5, "P@4 fixture");
    c.require(precision_at_k(ranked, rel, 10) == 0.2, "P@10 fixture");
    c.require(recall_at_k(ranked, rel, 1) == 1.0 / 3.0, "R@1 fixture");
    c.require(recall_at_k(ranked, rel, 3) == 2.0 / 3.0, "R@3 fixture");
    c.require(recall_at_k(ranked, rel, 10) == 2.0 / 3.0, "R@10 fixture");
    const RankedList scored({{"q", 0.5}, {"p", 0.5}, {"r", 0.9}});
    c.require(scored.items()[0].id == "r" && scored.items()[1].id == "p", "score order with id tie-break");

    Rng rng(5);
    bool monotone = true;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.below(40);
        std::vector<RankedItem> items;
        std::set<std::string> relevant;
        for (std::size_t i = 0; i < n; ++i) {
            items.push_back({"i" + std::to_string(i), rng.uniform()});
            if (rng.uniform() < 0.3) relevant.insert("i" + std::to_string(i));
        }
        if (relevant.empty()) relevant.insert("i0");
        const RankedList r(items);
        double prev_recall = 0.0;
        for (std::size_t k = 1; k <= n + 2; ++k) {
            const double rk = recall_at_k(r, relevant, k);
            const double pk = precision_at_k(r, relevant, k);
            std::size_t hits = 0;
            for (std::size_t i = 0; i < std::min(k, n); ++i) hits += relevant.count(r.items()[i].id);
            monotone = monotone && rk >= prev_recall && rk <= 1.0 && pk >= 0.0 && pk <= 1.0 &&
                       pk == static_cast<double>(hits) / static_cast<double>(k) &&
                       rk == static_cast<double>(hits) / static_cast<double>(relevant.size());
            prev_recall = rk;
        }
        monotone = monotone && recall_at_k(r, relevant, n) == 1.0;
    }
    c.require(monotone, "monotonicity over random rankings");

    const auto s = PolySphere::build(10);
    const Manifest m = manifest_from_json(oracle_manifest(s, 6, {"car", "chair", "mug"}), s, "<oracle>", {},
                                          ManifestOptions{false});
    ViewOracleScorer oracle(s, ViewConvention(), OracleFamily{});
    const auto report = evaluate_retrieval(oracle, retrieval_candidates(m));
    c.require(!report.rows.empty(), "no retrieval rows");
    double min_p1 = 1.0;
    for (const auto& row : report.rows) min_p1 = std::min(min_p1, row.precision[0]);
    c.require(min_p1 == 1.0, "oracle P@1 " + num(min_p1));
    c.require(report.missing.empty(), "missing retrieval queries");
    if (c.ok) c.detail = "fixtures exact, 1000 random rankings monotone, oracle P@1 = 1 over " +
                         std::to_string(report.rows.size()) + " rows";
    return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = ss.str();
    }
    return out;
}

Check determinism_check() {
    Check c;
    const auto s = PolySphere::build(10);
    const fs::path base = fs::temp_directory_path() / ("viewsphere_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(base);
    const std::vector<std::string> commands = {
        "sphere build --freq 10 -o sphere.dat",
        "gold --sphere sphere.dat --categories object mug -o gold",
        "scoremap --sphere sphere.dat --scorer oracle:ragged --seed 7 -o maps",
        "scoremap --sphere sphere.dat --scorer oracle:smooth --views top -o smooth",
        "search run --sphere sphere.dat --scorer oracle:ragged --algo greedy --view=left --seed 7 -o greedy",
        "search run --sphere sphere.dat --scorer oracle:ragged --algo bayes --view=left --seed 7 -o bayes",
        "bench --sphere sphere.dat --scorer oracle:smooth --scorer oracle:ragged --runs 3 --seed 7 --traces -o bench",
        "bench --sphere sphere.dat --scorer cache:smooth --views top --runs 2 --seed 3 -o bench_cache",
        "render --sphere sphere.dat --scoremap maps/scoremap_object_left.json --trace bayes/trace.json --maxima -o svg",
        "render --sphere sphere.dat --gold-view top --title gold -o svg_gold",
        "eval kl --sphere sphere.dat --maps maps --maps gold -o kl",
        "eval retrieval --sphere sphere.dat --scorer oracle:ragged --seed 7 --manifest m.json --skip-file-check -o ret",
        "ablate --sphere sphere.dat --manifest m.json --skip-file-check --sizes 4 2 1 --seed 7 -o abl",
        "loss eval --sphere sphere.dat --cache emb.bin --manifest m.json --skip-file-check -o loss",
    };
    const json manifest = oracle_manifest(s, 6, {"car", "mug"});
    const Manifest m = manifest_from_json(manifest, s, "m.json", {}, ManifestOptions{false});
    EmbeddingCache cache(8);
    Rng rng(1);
    auto vec = [&] {
        Embedding v(8);
        for (auto& x : v) x = rng.normal();
        return v;
    };
    for (const auto& r : m.records) {
        cache.insert(r.image, vec());
        if (r.view && !cache.find(make_query(r.category, *r.view).text)) cache.insert(make_query(r.category, *r.view).text, vec());
    }
    std::vector<std::map<std::string, std::string>> trees;
    for (const std::string run : {"a", "b"}) {
        const fs::path root = base / run;
        fs::create_directories(root);
        std::ofstream(root / "m.json") << manifest.dump(1);
        write_cache(cache, root / "emb.bin");
        for (const auto& cmd : commands) {
            const std::string line = "cd '" + root.string() + "' && '" + VIEWSPHERE_CLI_PATH + "' " + cmd + " > /dev/null 2> err.txt";
            const int status = std::system(line.c_str());
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
                std::ifstream e(root / "err.txt");
                std::string msg;
                std::getline(e, msg);
                c.require(false, "'" + cmd + "' failed: " + msg);
            }
        }
        fs::remove(root / "err.txt");
        trees.push_back(tree(root));
    }
    fs::remove_all(base);
    c.require(trees[0].size() > commands.size(), "too few outputs");
    for (const auto& [name, bytes] : trees[0]) {
        const auto it = trees[1].find(name);
        c.require(it != trees[1].end(), name + " missing in second run");
        c.require(it == trees[1].end() || it->second == bytes, name + " differs between runs");
    }
    c.require(trees[0].size() == trees[1].size(), "output sets differ");
    c.require(trees[0].count("svg/hexmap.svg") && trees[0].count("svg_gold/hexmap.svg"), "hexmaps not rendered");
    if (c.ok) c.detail = std::to_string(commands.size()) + " commands, " + std::to_string(trees[0].size()) +
                         " files byte-identical across two runs";
    return c;
}

Check ablation_check() {
    Check c;
    const auto s = PolySphere::build(10);
    const std::vector<std::string> categories{"car", "chair"};
    json recs = json::array();
    for (const auto& cat : categories) {
        for (int o = 0; o < 1100; ++o) {
            for (auto v : kCanonicalViews) {
                recs.push_back({{"object", cat + std::to_string(o)}, {"category", cat}, {"split", "train"},
                                {"view", to_string(v)}, {"image", cat + std::to_string(o) + "_" + std::string(to_string(v))}});
            }
            if (o % 10 == 0) {
                recs.push_back({{"object", cat + std::to_string(o)}, {"category", cat}, {"split", "test"},
                                {"view", "front"}, {"image", cat + std::to_string(o) + "_test"}, {"radius", 4.0}});
            }
        }
    }
    const json mj{{"format", "viewsphere.manifest"}, {"version", 1}, {"sphere_checksum", s.checksum()}, {"records", recs}};
    const Manifest m = manifest_from_json(mj, s, "<ablation>", {}, ManifestOptions{false});
    const std::vector<std::size_t> sizes{1000, 100, 10, 1};
    const auto subsets = ablation_subsets(m, sizes, 42);
    const auto again = ablation_subsets(m, sizes, 42);
    c.require(subsets.size() == sizes.size(), "subset count");
    std::vector<std::set<std::string>> keys;
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        std::map<std::pair<std::string, int>, std::size_t> per;
        std::set<std::string> k;
        for (const auto& r : subsets[i].records) {
            c.require(r.split == "train" && r.view.has_value(), "subset holds a non-training record");
            ++per[{r.category, static_cast<int>(*r.view)}];
            k.insert(r.image);
        }
        c.require(per.size() == categories.size() * kCanonicalViews.size(), "strata missing at size " + std::to_string(sizes[i]));
        for (const auto& [key, n] : per) {
            c.require(n == sizes[i], key.first + " stratum has " + std::to_string(n) + " at size " + std::to_string(sizes[i]));
        }
        c.require(subsets[i].records == again[i].records, "not deterministic");
        keys.push_back(std::move(k));
    }
    for (std::size_t i = 1; i < keys.size(); ++i) {
        c.require(std::includes(keys[i - 1].begin(), keys[i - 1].end(), keys[i].begin(), keys[i].end()),
                  "size " + std::to_string(sizes[i]) + " not contained in size " + std::to_string(sizes[i - 1]));
    }
    if (c.ok) c.detail = "12 strata, sizes 1000/100/10/1 exact and nested";
    return c;
}

}  // namespace

int main() {
    report("sphere geometry", sphere_geometry);
    report("gold distribution", gold_distribution_check);
    report("kl divergence", kl_check);
    report("losses", losses_check);
    report("search orderings", search_check);
    report("retrieval metrics", retrieval_check);
    report("determinism", determinism_check);
    report("ablation sampler", ablation_check);
    return failures == 0 ? 0 : 1;
}
