#pragma once

// Greedy and Bayesian viewpoint search over the sphere.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "viewsphere/camera.hpp"
#include "viewsphere/errors.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/random.hpp"
#include "viewsphere/scorer.hpp"
#include "viewsphere/surrogate.hpp"

namespace viewsphere {

enum class StopReason { Solved, Budget, Stalled };

inline std::string_view to_string(StopReason r) {
    switch (r) {
        case StopReason::Solved: return "solved";
        case StopReason::Budget: return "budget";
        case StopReason::Stalled: return "stalled";
    }
    return "stalled";
}

inline StopReason parse_stop_reason(std::string_view s) {
    if (s == "solved") return StopReason::Solved;
    if (s == "budget") return StopReason::Budget;
    if (s == "stalled") return StopReason::Stalled;
    throw std::invalid_argument("unknown stop reason '" + std::string(s) + "'");
}

struct TraceEntry {
    std::size_t call = 0;  ///< 1-based
    CellId cell = 0;
    double radius = 0.0;
    std::optional<CameraPose> pose;
    double score = 0.0;
    double best_so_far = 0.0;
};

struct SearchTrace {
    std::string algorithm;
    std::vector<TraceEntry> entries;
    StopReason reason = StopReason::Stalled;

    std::size_t calls() const { return entries.size(); }

    const TraceEntry& best() const {
        if (entries.empty()) {
            throw std::logic_error("empty search trace has no best entry");
        }
        // first entry reaching the maximum
        return *std::max_element(entries.begin(), entries.end(),
                                 [](const TraceEntry& a, const TraceEntry& b) { return a.score < b.score; });
    }

    std::vector<CellId> visited_cells() const {
        std::vector<CellId> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.cell);
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json calls = nlohmann::json::array();
        for (const auto& e : entries) {
            nlohmann::json j{{"call", e.call}, {"cell", e.cell}, {"radius", e.radius}, {"score", e.score},
                             {"best", e.best_so_far}};
            if (e.pose) {
                j["pose"] = {e.pose->r, e.pose->theta, e.pose->phi, e.pose->x, e.pose->y};
            }
            calls.push_back(std::move(j));
        }
        nlohmann::json j{{"format", "viewsphere.trace"}, {"version", 1},    {"algorithm", algorithm},
                         {"reason", to_string(reason)},  {"calls", entries.size()}, {"trace", std::move(calls)}};
        if (!entries.empty()) {
            j["best_cell"] = best().cell;
            j["best_score"] = best().score;
        }
        return j;
    }
};

inline SearchTrace trace_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "viewsphere.trace" || j.value("version", 0) != 1) {
        throw std::invalid_argument("not a viewsphere trace (format/version mismatch)");
    }
    SearchTrace t;
    t.algorithm = j.at("algorithm").get<std::string>();
    t.reason = parse_stop_reason(j.at("reason").get<std::string>());
    for (const auto& e : j.at("trace")) {
        TraceEntry te;
        te.call = e.at("call").get<std::size_t>();
        te.cell = e.at("cell").get<CellId>();
        te.radius = e.at("radius").get<double>();
        te.score = e.at("score").get<double>();
        te.best_so_far = e.at("best").get<double>();
        if (e.contains("pose")) {
            const auto& p = e.at("pose");
            te.pose = CameraPose{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>(), p.at(3).get<double>(),
                                 p.at(4).get<double>()};
        }
        t.entries.push_back(te);
    }
    return t;
}

/// True iff any visited cell lies within two rings of gold.
inline bool is_solved(const SearchTrace& trace, const PolySphere& sphere, CellId gold) {
    if (trace.entries.empty()) {
        throw std::invalid_argument("is_solved: empty trace");
    }
    const auto d = sphere.distances_from(gold);
    return std::any_of(trace.entries.begin(), trace.entries.end(),
                       [&](const TraceEntry& e) { return e.cell < d.size() && d[e.cell] <= 2; });
}

/// Common inputs of one run. stop_when, if set, ends the run as solved as
/// soon as it holds for a newly scored cell.
struct SearchContext {
    const PolySphere& sphere;
    Scorer& scorer;
    const Query& query;
    std::size_t budget = 300;
    std::uint64_t seed = 0;
    ViewProvider provider;
    std::function<bool(CellId)> stop_when;
};

namespace detail {

class TraceRecorder {
public:
    TraceRecorder(const SearchContext& ctx, std::string algorithm) : ctx_(ctx) { trace_.algorithm = std::move(algorithm); }

    ViewRef view(CellId c, double r) const { return ctx_.provider ? ctx_.provider(c, r) : cell_view(c, r); }

    /// Records one scorer result. Returns true when the run must stop.
    bool record(CellId cell, double radius, double score, std::optional<CameraPose> pose = std::nullopt) {
        TraceEntry e;
        e.call = trace_.entries.size() + 1;
        e.cell = cell;
        e.radius = radius;
        e.pose = pose;
        e.score = score;
        e.best_so_far = trace_.entries.empty() ? score : std::max(trace_.entries.back().best_so_far, score);
        trace_.entries.push_back(e);
        if (ctx_.stop_when && ctx_.stop_when(cell)) {
            trace_.reason = StopReason::Solved;
            return true;
        }
        if (trace_.entries.size() >= ctx_.budget) {
            trace_.reason = StopReason::Budget;
            return true;
        }
        return false;
    }

    double score_one(CellId cell, double radius) {
        try {
            return ctx_.scorer.score(ctx_.query, view(cell, radius));
        } catch (const ScorerError& e) {
            throw ScorerError("search aborted at call " + std::to_string(trace_.entries.size() + 1) + " (cell " +
                              std::to_string(cell) + "): " + e.what());
        }
    }

    std::vector<double> score_many(const std::vector<CellId>& cells, double radius) {
        std::vector<ViewRef> views;
        views.reserve(cells.size());
        for (CellId c : cells) views.push_back(view(c, radius));
        try {
            return ctx_.scorer.score_batch(ctx_.query, views);
        } catch (const ViewScoreError& e) {
            const std::size_t i = e.batch_index();
            throw ScorerError("search aborted at call " + std::to_string(trace_.entries.size() + i + 1) + " (cell " +
                              std::to_string(i < cells.size() ? cells[i] : 0) + "): " + e.what());
        } catch (const ScorerError& e) {
            throw ScorerError("search aborted during batch of " + std::to_string(cells.size()) + " calls: " + e.what());
        }
    }

    SearchTrace& trace() { return trace_; }

private:
    const SearchContext& ctx_;
    SearchTrace trace_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Greedy

struct GreedyConfig {
    std::size_t k = 6;                 ///< random starting cells
    std::size_t cutoff = 3;            ///< frontier cells kept per iteration
    std::optional<double> cutoff_fraction;  ///< overrides cutoff when set, in (0, 1]
    int n = 1;                         ///< neighborhood range in rings
    std::size_t iterations = 1000;
    double radius = 5.0;

    void validate() const {
        if (k < 1 || cutoff < 1 || n < 1 || iterations < 1) {
            throw std::invalid_argument("greedy config requires k, c, n, i >= 1");
        }
        if (cutoff_fraction && !(*cutoff_fraction > 0.0 && *cutoff_fraction <= 1.0)) {
            throw std::invalid_argument("greedy cutoff fraction must lie in (0, 1]");
        }
        if (!(radius > 0.0)) {
            throw std::invalid_argument("greedy radius must be positive");
        }
    }
};

/// Seeded random starts, then repeated expansion of the unvisited
/// neighborhoods of the best frontier cells. The frontier is the set of
/// visited cells that still have an unvisited cell within n rings.
inline SearchTrace greedy_search(const SearchContext& ctx, const GreedyConfig& cfg) {
    cfg.validate();
    const PolySphere& s = ctx.sphere;
    if (ctx.budget < cfg.k) {
        throw std::invalid_argument("greedy search budget must be at least k");
    }
    if (cfg.k > s.size()) {
        throw std::invalid_argument("greedy k exceeds the number of cells");
    }
    detail::TraceRecorder rec(ctx, "greedy");
    Rng rng(ctx.seed);
    std::vector<char> visited(s.size(), 0);
    std::vector<double> score(s.size(), 0.0);

    std::vector<CellId> starts;
    while (starts.size() < cfg.k) {
        const auto c = static_cast<CellId>(rng.below(s.size()));
        if (!visited[c]) {
            visited[c] = 1;
            starts.push_back(c);
        }
    }
    const auto first = rec.score_many(starts, cfg.radius);
    bool stop = false;
    for (std::size_t i = 0; i < starts.size() && !stop; ++i) {
        score[starts[i]] = first[i];
        stop = rec.record(starts[i], cfg.radius, first[i]);
    }
    if (stop) {
        return std::move(rec.trace());
    }

    std::vector<std::vector<CellId>> balls(s.size());
    auto ball = [&](CellId c) -> const std::vector<CellId>& {
        if (balls[c].empty()) balls[c] = s.ball(c, cfg.n);
        return balls[c];
    };
    auto open = [&](CellId c) {
        const auto& b = ball(c);
        return std::any_of(b.begin(), b.end(), [&](CellId x) { return !visited[x]; });
    };

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        std::vector<CellId> frontier;
        for (CellId c = 0; c < s.size(); ++c) {
            if (visited[c] && open(c)) frontier.push_back(c);
        }
        if (frontier.empty()) {
            rec.trace().reason = StopReason::Stalled;
            return std::move(rec.trace());
        }
        std::stable_sort(frontier.begin(), frontier.end(), [&](CellId a, CellId b) { return score[a] > score[b]; });
        std::size_t keep = cfg.cutoff;
        if (cfg.cutoff_fraction) {
            keep = static_cast<std::size_t>(std::ceil(*cfg.cutoff_fraction * static_cast<double>(frontier.size())));
        }
        frontier.resize(std::min(std::max<std::size_t>(keep, 1), frontier.size()));
        std::set<CellId> fresh;
        for (CellId f : frontier) {
            for (CellId x : ball(f)) {
                if (!visited[x]) fresh.insert(x);
            }
        }
        for (CellId c : fresh) {
            visited[c] = 1;
            score[c] = rec.score_one(c, cfg.radius);
            if (rec.record(c, cfg.radius, score[c])) {
                return std::move(rec.trace());
            }
        }
    }
    rec.trace().reason = StopReason::Stalled;
    return std::move(rec.trace());
}

// ---------------------------------------------------------------------------
// Bayesian

struct SearchBounds {
    double r_min = 5.0, r_max = 5.0;
    double theta_min = 0.0, theta_max = kPi;
    double phi_min = 0.0, phi_max = kTwoPi;
    double x_min = 0.0, x_max = 0.0;
    double y_min = 0.0, y_max = 0.0;

    void validate() const {
        const double v[] = {r_min, r_max, theta_min, theta_max, phi_min, phi_max, x_min, x_max, y_min, y_max};
        for (double x : v) {
            if (!std::isfinite(x)) throw std::invalid_argument("search bounds must be finite");
        }
        if (!(r_min > 0.0) || r_max < r_min || theta_min < 0.0 || theta_max > kPi || theta_max < theta_min ||
            phi_max < phi_min || phi_max - phi_min > kTwoPi || x_max < x_min || y_max < y_min) {
            throw std::invalid_argument("search bounds are inconsistent");
        }
    }
};

struct BayesConfig {
    SearchBounds bounds;
    std::vector<double> radii{5.0};  ///< the r coordinate snaps to the nearest of these
    std::size_t initial_samples = 5;
    KernelParams kernel;
    double xi = 0.01;
    std::size_t candidates = 256;
    std::size_t local_candidates = 64;
    double local_sigma = 0.15;  ///< radians, for theta and phi perturbations
    bool optimize_hyperparameters = false;
};

namespace detail {

inline double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

inline PoseVector sample_pose(Rng& rng, const SearchBounds& b) {
    const double c_hi = std::cos(b.theta_min), c_lo = std::cos(b.theta_max);
    const double theta = std::acos(clampd(rng.uniform(c_lo, c_hi), -1.0, 1.0));
    const double phi = wrap_angle(rng.uniform(b.phi_min, b.phi_max));
    return {rng.uniform(b.r_min, b.r_max), theta, phi, rng.uniform(b.x_min, b.x_max), rng.uniform(b.y_min, b.y_max)};
}

inline PoseVector perturb_pose(Rng& rng, const PoseVector& p, const SearchBounds& b, double sigma) {
    PoseVector q = p;
    q[0] = clampd(p[0] + rng.normal() * 0.1 * (b.r_max - b.r_min), b.r_min, b.r_max);
    q[1] = clampd(p[1] + rng.normal() * sigma, b.theta_min, b.theta_max);
    q[2] = p[2] + rng.normal() * sigma / std::max(0.2, std::sin(p[1]));
    if (b.phi_max - b.phi_min >= kTwoPi) {
        q[2] = wrap_angle(q[2]);
    } else {
        q[2] = clampd(q[2], b.phi_min, b.phi_max);
    }
    q[3] = clampd(p[3] + rng.normal() * 0.1 * (b.x_max - b.x_min), b.x_min, b.x_max);
    q[4] = clampd(p[4] + rng.normal() * 0.1 * (b.y_max - b.y_min), b.y_min, b.y_max);
    return q;
}

inline std::size_t nearest_radius(const std::vector<double>& radii, double r) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < radii.size(); ++i) {
        if (std::abs(radii[i] - r) < std::abs(radii[best] - r)) best = i;
    }
    return best;
}

}  // namespace detail

/// GP-EI search over continuous poses. Each proposal is snapped to a
/// (cell, radius) slot; slots are scored at most once. The surrogate is fed
/// the snapped cell-center angles so repeated slots never duplicate inputs.
inline SearchTrace bayesian_search(const SearchContext& ctx, const BayesConfig& cfg) {
    cfg.bounds.validate();
    if (cfg.radii.empty()) {
        throw std::invalid_argument("bayesian search needs at least one radius");
    }
    if (cfg.initial_samples < 1 || ctx.budget <= cfg.initial_samples) {
        throw std::invalid_argument("bayesian search budget must exceed the initial sample count");
    }
    const PolySphere& s = ctx.sphere;
    const std::size_t slots = s.size() * cfg.radii.size();
    detail::TraceRecorder rec(ctx, "bayes");
    Rng rng(ctx.seed);
    std::vector<char> visited(slots, 0);
    std::vector<PoseVector> inputs;
    std::vector<double> targets;

    auto snap = [&](const PoseVector& p) {
        const CellId cell = s.nearest_cell(spherical_direction(p[1], p[2]));
        const std::size_t ri = detail::nearest_radius(cfg.radii, p[0]);
        return std::pair<CellId, std::size_t>{cell, ri};
    };
    auto evaluate = [&](CellId cell, std::size_t ri, const PoseVector& proposal) {
        visited[ri * s.size() + cell] = 1;
        const auto [theta, phi] = spherical_angles(s.center(cell));
        const PoseVector x{cfg.radii[ri], theta, phi, proposal[3], proposal[4]};
        const double y = rec.score_one(cell, cfg.radii[ri]);
        inputs.push_back(x);
        targets.push_back(y);
        return rec.record(cell, cfg.radii[ri], y, to_pose(x));
    };
    auto random_unvisited = [&]() -> std::optional<std::pair<CellId, std::size_t>> {
        std::vector<std::size_t> open;
        for (std::size_t i = 0; i < slots; ++i) {
            if (!visited[i]) open.push_back(i);
        }
        if (open.empty()) return std::nullopt;
        const std::size_t pick = open[static_cast<std::size_t>(rng.below(open.size()))];
        return std::pair<CellId, std::size_t>{static_cast<CellId>(pick % s.size()), pick / s.size()};
    };
    auto slot_pose = [&](CellId cell, std::size_t ri) {
        const auto [theta, phi] = spherical_angles(s.center(cell));
        return PoseVector{cfg.radii[ri], theta, phi, 0.5 * (cfg.bounds.x_min + cfg.bounds.x_max),
                          0.5 * (cfg.bounds.y_min + cfg.bounds.y_max)};
    };

    for (std::size_t i = 0; i < cfg.initial_samples; ++i) {
        PoseVector p = detail::sample_pose(rng, cfg.bounds);
        auto [cell, ri] = snap(p);
        for (int tries = 0; visited[ri * s.size() + cell] && tries < 100; ++tries) {
            p = detail::sample_pose(rng, cfg.bounds);
            std::tie(cell, ri) = snap(p);
        }
        if (visited[ri * s.size() + cell]) {
            const auto slot = random_unvisited();
            if (!slot) break;
            std::tie(cell, ri) = *slot;
            p = slot_pose(cell, ri);
        }
        if (evaluate(cell, ri, p)) {
            return std::move(rec.trace());
        }
    }

    while (true) {
        const GaussianSurrogate gp = [&] {
            if (cfg.optimize_hyperparameters) return fit_ml2(cfg.kernel, inputs, targets);
            GaussianSurrogate g(cfg.kernel);
            g.fit(inputs, targets);
            return g;
        }();
        const double best = *std::max_element(targets.begin(), targets.end());
        const std::size_t incumbent =
            static_cast<std::size_t>(std::max_element(targets.begin(), targets.end()) - targets.begin());

        std::vector<PoseVector> pool;
        pool.reserve(cfg.candidates + cfg.local_candidates);
        for (std::size_t i = 0; i < cfg.candidates; ++i) pool.push_back(detail::sample_pose(rng, cfg.bounds));
        for (std::size_t i = 0; i < cfg.local_candidates; ++i) {
            pool.push_back(detail::perturb_pose(rng, inputs[incumbent], cfg.bounds, cfg.local_sigma));
        }

        std::optional<std::pair<CellId, std::size_t>> choice;
        PoseVector chosen{};
        if (!gp.constant()) {
            std::vector<double> ei(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i) {
                ei[i] = expected_improvement(gp.predict(pool[i]), best, cfg.xi);
            }
            std::vector<std::size_t> order(pool.size());
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ei[a] > ei[b]; });
            for (std::size_t i : order) {
                if (!(ei[i] > 0.0)) break;
                const auto slot = snap(pool[i]);
                if (!visited[slot.second * s.size() + slot.first]) {
                    choice = slot;
                    chosen = pool[i];
                    break;
                }
            }
        }
        if (!choice) {
            choice = random_unvisited();
            if (!choice) {
                rec.trace().reason = StopReason::Stalled;
                return std::move(rec.trace());
            }
            chosen = slot_pose(choice->first, choice->second);
        }
        if (evaluate(choice->first, choice->second, chosen)) {
            return std::move(rec.trace());
        }
    }
}

}  // namespace viewsphere
