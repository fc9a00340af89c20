#pragma once

// Gold-standard viewpoint distributions, KL divergence against predicted
// score maps, and precision/recall at k.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "viewsphere/camera.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/scorer.hpp"
#include "viewsphere/table.hpp"

namespace viewsphere {

inline constexpr int kGoldRings = 3;
inline constexpr double kDefaultGoldSigma = 1.0;
inline constexpr double kDefaultKlEpsilon = 1e-9;

struct GoldDistribution {
    CellId gold = 0;
    double sigma = kDefaultGoldSigma;
    std::vector<double> weights;  ///< one probability per cell

    std::size_t support_size() const {
        return static_cast<std::size_t>(std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0; }));
    }
};

/// Discrete normal over hop rings of the gold cell: a cell in ring k <= 3
/// gets density phi(k / sigma), every other cell 0, then normalize.
inline GoldDistribution gold_distribution(const PolySphere& sphere, CellId gold, double sigma = kDefaultGoldSigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw std::invalid_argument("gold distribution sigma must be positive");
    }
    const auto hops = sphere.distances_from(gold);
    // The normal density's constant cancels; exp(-z^2/2) relative to ring 0.
    std::array<double, kGoldRings + 1> ring_density{};
    for (int k = 0; k <= kGoldRings; ++k) {
        const double z = k / sigma;
        ring_density[static_cast<std::size_t>(k)] = std::exp(-0.5 * z * z);
    }
    GoldDistribution g{gold, sigma, std::vector<double>(sphere.size(), 0.0)};
    double total = 0.0;
    for (CellId c = 0; c < sphere.size(); ++c) {
        if (hops[c] <= kGoldRings) {
            g.weights[c] = ring_density[static_cast<std::size_t>(hops[c])];
            total += g.weights[c];
        }
    }
    for (double& w : g.weights) {
        w /= total;
    }
    return g;
}

/// Shift-min linear normalization with an epsilon floor:
/// p_i = (s_i - min + eps) / sum_j (s_j - min + eps). Strictly positive.
inline std::vector<double> normalize_scores(std::span<const double> scores, double epsilon = kDefaultKlEpsilon) {
    if (scores.empty()) {
        throw std::invalid_argument("cannot normalize an empty score vector");
    }
    if (!(epsilon > 0.0)) {
        throw std::invalid_argument("normalization epsilon must be positive");
    }
    const double lo = *std::min_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw std::invalid_argument("cannot normalize non-finite scores");
        }
        p[i] = scores[i] - lo + epsilon;
        total += p[i];
    }
    for (double& x : p) {
        x /= total;
    }
    return p;
}

inline std::vector<double> normalize_map(const ScoreMap& map, double epsilon = kDefaultKlEpsilon) {
    return normalize_scores(map.scores, epsilon);
}

/// KL(gold || predicted) = sum over gold's support of g ln(g / p).
inline double kl_divergence(std::span<const double> gold, std::span<const double> predicted) {
    if (gold.size() != predicted.size()) {
        throw std::invalid_argument("kl_divergence: distributions have different cell counts");
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] > 0.0) {
            if (!(predicted[i] > 0.0)) {
                throw std::invalid_argument("kl_divergence: predicted mass is zero where gold is positive");
            }
            kl += gold[i] * std::log(gold[i] / predicted[i]);
        }
    }
    return std::max(kl, 0.0);
}

inline double kl_divergence(const GoldDistribution& gold, std::span<const double> predicted) {
    return kl_divergence(gold.weights, predicted);
}

// ---------------------------------------------------------------------------
// Retrieval metrics

struct RankedItem {
    std::string id;
    double score = 0.0;
};

/// Items in descending score order; equal scores ordered by id.
class RankedList {
public:
    RankedList() = default;

    explicit RankedList(std::vector<RankedItem> items) : items_(std::move(items)) {
        std::sort(items_.begin(), items_.end(), [](const RankedItem& a, const RankedItem& b) {
            return a.score != b.score ? a.score > b.score : a.id < b.id;
        });
    }

    /// Keeps the given order; it must already be non-increasing.
    static RankedList from_ordered_ids(const std::vector<std::string>& ids) {
        RankedList r;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            r.items_.push_back({ids[i], -static_cast<double>(i)});
        }
        return r;
    }

    const std::vector<RankedItem>& items() const noexcept { return items_; }
    std::size_t size() const noexcept { return items_.size(); }

private:
    std::vector<RankedItem> items_;
};

namespace detail {
inline std::size_t hits_at_k(const RankedList& ranking, const std::set<std::string>& relevant, std::size_t k) {
    std::size_t hits = 0;
    const std::size_t n = std::min(k, ranking.size());
    for (std::size_t i = 0; i < n; ++i) {
        hits += relevant.count(ranking.items()[i].id);
    }
    return hits;
}
}  // namespace detail

/// |top-k & relevant| / k. When k exceeds the list length only the available
/// items are counted but the denominator stays k.
inline double precision_at_k(const RankedList& ranking, const std::set<std::string>& relevant, std::size_t k) {
    if (k < 1) {
        throw std::invalid_argument("precision@k needs k >= 1");
    }
    return static_cast<double>(detail::hits_at_k(ranking, relevant, k)) / static_cast<double>(k);
}

inline double recall_at_k(const RankedList& ranking, const std::set<std::string>& relevant, std::size_t k) {
    if (k < 1) {
        throw std::invalid_argument("recall@k needs k >= 1");
    }
    if (relevant.empty()) {
        throw std::invalid_argument("recall@k needs a non-empty relevant set");
    }
    return static_cast<double>(detail::hits_at_k(ranking, relevant, k)) / static_cast<double>(relevant.size());
}

// ---------------------------------------------------------------------------
// Model evaluation reports

/// One KL measurement: a model's map for one object and query.
struct KlEntry {
    std::string model;
    std::string category;
    CanonicalView view = CanonicalView::Front;
    std::string object;
    double kl = 0.0;
};

/// KL of every map against the gold distribution of its query's view.
inline std::vector<KlEntry> kl_entries(const PolySphere& sphere, const ViewConvention& convention,
                                       const std::vector<ScoreMap>& maps, double sigma = kDefaultGoldSigma,
                                       double epsilon = kDefaultKlEpsilon) {
    std::vector<KlEntry> out;
    for (const auto& m : maps) {
        if (m.scores.size() != sphere.size() || m.sphere_checksum != sphere.checksum()) {
            throw std::invalid_argument("score map for '" + m.query.text + "' does not match the sphere");
        }
        const auto gold = gold_distribution(sphere, canonical_cell(sphere, convention, m.query.view), sigma);
        out.push_back({m.scorer_id, m.query.category, m.query.view, m.object,
                       kl_divergence(gold, normalize_map(m, epsilon))});
    }
    return out;
}

struct KlCell {
    std::string model;
    std::string category;
    CanonicalView view;
    std::size_t objects = 0;
    double mean_kl = 0.0;
};

/// Mean KL per (model, category, view), mirroring a model x view table per
/// category. Requested cells that have no entries are listed in `missing`.
using KlKey = std::tuple<std::string, std::string, CanonicalView>;  // model, category, view

struct KlReport {
    std::vector<KlCell> cells;
    std::vector<KlKey> missing;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& c : cells) {
            rows.push_back({{"model", c.model}, {"category", c.category}, {"view", std::string(to_string(c.view))},
                            {"objects", c.objects}, {"kl", c.mean_kl}});
        }
        nlohmann::json gaps = nlohmann::json::array();
        for (const auto& [model, category, view] : missing) {
            gaps.push_back({{"model", model}, {"category", category}, {"view", std::string(to_string(view))}});
        }
        return {{"format", "viewsphere.kl_report"}, {"version", 1}, {"cells", rows}, {"missing", gaps}};
    }

    std::string to_text() const {
        std::vector<std::string> header{"category", "model"};
        for (auto v : kCanonicalViews) {
            header.emplace_back(to_string(v));
        }
        TextTable t(header);
        std::vector<std::string> categories, models;
        for (const auto& c : cells) {
            if (std::find(categories.begin(), categories.end(), c.category) == categories.end()) categories.push_back(c.category);
            if (std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
        }
        for (const auto& m : missing) {
            if (std::find(categories.begin(), categories.end(), std::get<1>(m)) == categories.end()) categories.push_back(std::get<1>(m));
            if (std::find(models.begin(), models.end(), std::get<0>(m)) == models.end()) models.push_back(std::get<0>(m));
        }
        for (const auto& cat : categories) {
            t.add_rule();
            for (const auto& model : models) {
                std::vector<std::string> row{cat, model};
                for (auto v : kCanonicalViews) {
                    std::string cell = "-";
                    for (const auto& c : cells) {
                        if (c.category == cat && c.model == model && c.view == v) {
                            cell = fixed(c.mean_kl, 2);
                        }
                    }
                    for (const auto& m : missing) {
                        if (m == std::make_tuple(model, cat, v)) {
                            cell = "MISSING";
                        }
                    }
                    row.push_back(cell);
                }
                t.add_row(row);
            }
        }
        return t.render();
    }
};

/// Averages entries per (model, category, view). If `requested` is given,
/// every requested (model, category, view) must have data or is reported
/// missing.
inline KlReport evaluate_kl(const std::vector<KlEntry>& entries,
                            const std::vector<KlKey>& requested = {}) {
    std::map<std::tuple<std::string, std::string, int>, std::pair<std::size_t, double>> acc;
    for (const auto& e : entries) {
        auto& a = acc[{e.model, e.category, static_cast<int>(e.view)}];
        a.first += 1;
        a.second += e.kl;
    }
    KlReport r;
    for (const auto& [key, a] : acc) {
        r.cells.push_back({std::get<0>(key), std::get<1>(key), static_cast<CanonicalView>(std::get<2>(key)), a.first,
                           a.second / static_cast<double>(a.first)});
    }
    for (const auto& [model, category, view] : requested) {
        if (!acc.count({model, category, static_cast<int>(view)})) {
            r.missing.emplace_back(model, category, view);
        }
    }
    return r;
}

/// One retrievable item: an image (or cell) of an object with its split and,
/// if it depicts a canonical view, that view's label.
struct RetrievalCandidate {
    std::string id;
    std::string category;
    std::string split;
    std::optional<CanonicalView> label;
    ViewRef view;
};

inline constexpr std::array<std::size_t, 3> kRetrievalKs = {1, 5, 10};

struct RetrievalRow {
    std::string model;
    std::string split;
    std::string category;  ///< "all" for the split-level mean
    std::size_t queries = 0;
    std::array<double, 3> precision{};
    std::array<double, 3> recall{};
};

struct RetrievalReport {
    std::vector<RetrievalRow> rows;
    std::vector<std::string> missing;

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row{{"model", r.model}, {"split", r.split}, {"category", r.category}, {"queries", r.queries}};
            for (std::size_t i = 0; i < kRetrievalKs.size(); ++i) {
                row["P@" + std::to_string(kRetrievalKs[i])] = r.precision[i];
                row["R@" + std::to_string(kRetrievalKs[i])] = r.recall[i];
            }
            out.push_back(row);
        }
        return {{"format", "viewsphere.retrieval_report"}, {"version", 1}, {"rows", out}, {"missing", missing}};
    }

    std::string to_text() const {
        TextTable t({"split", "category", "model", "P@1", "P@5", "P@10", "R@1", "R@5", "R@10"});
        std::string last_split;
        for (const auto& r : rows) {
            if (r.split != last_split) {
                t.add_rule();
                last_split = r.split;
            }
            std::vector<std::string> row{r.split, r.category, r.model};
            for (double p : r.precision) row.push_back(fixed(p, 3));
            for (double x : r.recall) row.push_back(fixed(x, 3));
            t.add_row(row);
        }
        return t.render();
    }
};

/// For every (split, category, view) with candidates, ranks that category's
/// candidates by score for the view's query; relevant = candidates labeled
/// with the view. Means over queries per category and per split.
inline RetrievalReport evaluate_retrieval(Scorer& scorer, const std::vector<RetrievalCandidate>& candidates,
                                          std::string_view text_template = kDefaultQueryTemplate) {
    std::map<std::pair<std::string, std::string>, std::vector<const RetrievalCandidate*>> groups;
    for (const auto& c : candidates) {
        groups[{c.split, c.category}].push_back(&c);
    }
    RetrievalReport report;
    std::map<std::string, std::vector<RetrievalRow>> per_split;
    for (const auto& [key, members] : groups) {
        const auto& [split, category] = key;
        RetrievalRow row{scorer.id(), split, category, 0, {}, {}};
        for (auto v : kCanonicalViews) {
            std::set<std::string> relevant;
            for (const auto* m : members) {
                if (m->label == v) {
                    relevant.insert(m->id);
                }
            }
            if (relevant.empty()) {
                report.missing.push_back(split + "/" + category + "/" + std::string(to_string(v)) +
                                         ": no relevant items");
                continue;
            }
            const Query q = make_query(category, v, text_template);
            std::vector<ViewRef> refs;
            for (const auto* m : members) {
                refs.push_back(m->view);
            }
            const auto scores = scorer.score_batch(q, refs);
            std::vector<RankedItem> items;
            for (std::size_t i = 0; i < members.size(); ++i) {
                items.push_back({members[i]->id, scores[i]});
            }
            const RankedList ranking(std::move(items));
            for (std::size_t i = 0; i < kRetrievalKs.size(); ++i) {
                row.precision[i] += precision_at_k(ranking, relevant, kRetrievalKs[i]);
                row.recall[i] += recall_at_k(ranking, relevant, kRetrievalKs[i]);
            }
            row.queries += 1;
        }
        if (row.queries > 0) {
            for (std::size_t i = 0; i < kRetrievalKs.size(); ++i) {
                row.precision[i] /= static_cast<double>(row.queries);
                row.recall[i] /= static_cast<double>(row.queries);
            }
            per_split[split].push_back(row);
        }
    }
    for (const auto& [split, rows] : per_split) {
        RetrievalRow all{scorer.id(), split, "all", 0, {}, {}};
        for (const auto& r : rows) {
            for (std::size_t i = 0; i < kRetrievalKs.size(); ++i) {
                all.precision[i] += r.precision[i] * static_cast<double>(r.queries);
                all.recall[i] += r.recall[i] * static_cast<double>(r.queries);
            }
            all.queries += r.queries;
            report.rows.push_back(r);
        }
        for (std::size_t i = 0; i < kRetrievalKs.size(); ++i) {
            all.precision[i] /= static_cast<double>(all.queries);
            all.recall[i] /= static_cast<double>(all.queries);
        }
        report.rows.push_back(all);
    }
    return report;
}

}  // namespace viewsphere
