#pragma once

// Scoring functions S(view, query) and whole-sphere score maps.
//
// A Scorer is an abstract capability. Three families implement it:
// synthetic oracles with known ground truth, cached score maps, and the
// remote embedding-service scorer (remote_scorer.hpp).

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "viewsphere/camera.hpp"
#include "viewsphere/errors.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/random.hpp"

namespace viewsphere {

inline constexpr std::string_view kDefaultQueryTemplate = "a picture of a {category} from the {view}";

struct Query {
    std::string category;
    CanonicalView view = CanonicalView::Front;
    std::string text;

    friend bool operator==(const Query&, const Query&) = default;
};

inline Query make_query(std::string category, CanonicalView view,
                        std::string_view text_template = kDefaultQueryTemplate) {
    std::string text(text_template);
    auto substitute = [&text](std::string_view key, std::string_view value) {
        for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
            text.replace(pos, key.size(), value);
        }
    };
    substitute("{category}", category);
    substitute("{view}", to_string(view));
    return Query{std::move(category), view, std::move(text)};
}

inline nlohmann::json to_json(const Query& q) {
    return {{"category", q.category}, {"view", std::string(to_string(q.view))}, {"text", q.text}};
}

inline Query query_from_json(const nlohmann::json& j) {
    return Query{j.at("category").get<std::string>(), parse_view(j.at("view").get<std::string>()),
                 j.at("text").get<std::string>()};
}

using Embedding = std::vector<double>;

/// Cosine similarity; throws on dimension mismatch or zero vectors.
inline double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(u.size()) + " vs " +
                                    std::to_string(v.size()) + ")");
    }
    double dot = 0.0, uu = 0.0, vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    if (!(uu > 0.0) || !(vv > 0.0)) {
        throw std::invalid_argument("cosine: zero-norm embedding");
    }
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

/// What a scorer is asked to look at: a sphere cell at a radius, and/or a
/// concrete image (for scorers that need pixels).
struct ViewRef {
    std::optional<CellId> cell;
    double radius = 5.0;
    std::string image_id;
    std::string image_path;
};

inline ViewRef cell_view(CellId cell, double radius) { return ViewRef{cell, radius, {}, {}}; }

/// Failure to score one view. batch_index identifies the failing element
/// when the error surfaced from a batch call.
class ViewScoreError : public ScorerError {
public:
    ViewScoreError(const std::string& what, std::size_t batch_index)
        : ScorerError(what), batch_index_(batch_index) {}
    std::size_t batch_index() const noexcept { return batch_index_; }

private:
    std::size_t batch_index_;
};

class Scorer {
public:
    virtual ~Scorer() = default;

    virtual std::string id() const = 0;

    virtual double score(const Query& query, const ViewRef& view) = 0;

    /// Scores many views for one query. The default scores them one by one.
    virtual std::vector<double> score_batch(const Query& query, std::span<const ViewRef> views) {
        std::vector<double> out;
        out.reserve(views.size());
        for (std::size_t i = 0; i < views.size(); ++i) {
            try {
                out.push_back(score(query, views[i]));
            } catch (const ViewScoreError&) {
                throw;
            } catch (const std::exception& e) {
                throw ViewScoreError(e.what(), i);
            }
        }
        return out;
    }

    /// Whether concurrent score() calls from several search runs are safe.
    virtual bool concurrent() const { return true; }

    /// Whether the value depends only on (query, cell, radius).
    virtual bool cell_based() const { return true; }
};

// ---------------------------------------------------------------------------
// Score maps

inline constexpr int kScoreMapFormatVersion = 1;

struct ScoreMap {
    Query query;
    std::string scorer_id;
    double radius = 5.0;
    std::string sphere_checksum;
    std::string object;  ///< optional object id the map was computed for
    std::vector<double> scores;
};

inline nlohmann::json to_json(const ScoreMap& m) {
    return {{"format", "viewsphere.scoremap"}, {"version", kScoreMapFormatVersion},
            {"query", to_json(m.query)},       {"scorer", m.scorer_id},
            {"radius", m.radius},              {"sphere_checksum", m.sphere_checksum},
            {"object", m.object},              {"scores", m.scores}};
}

inline ScoreMap score_map_from_json(const nlohmann::json& j, const std::string& origin = "<json>") {
    try {
        if (j.at("format").get<std::string>() != "viewsphere.scoremap") {
            throw LoadError(origin, {"not a score-map file"});
        }
        if (j.at("version").get<int>() != kScoreMapFormatVersion) {
            throw LoadError(origin, {"unsupported score-map version"});
        }
        ScoreMap m;
        m.query = query_from_json(j.at("query"));
        m.scorer_id = j.at("scorer").get<std::string>();
        m.radius = j.at("radius").get<double>();
        m.sphere_checksum = j.at("sphere_checksum").get<std::string>();
        m.object = j.value("object", std::string{});
        m.scores = j.at("scores").get<std::vector<double>>();
        std::vector<std::string> problems;
        for (std::size_t i = 0; i < m.scores.size(); ++i) {
            if (!std::isfinite(m.scores[i])) {
                problems.push_back("score of cell " + std::to_string(i) + " is not finite");
            }
        }
        if (!problems.empty()) {
            throw LoadError(origin, std::move(problems));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(origin, {std::string("malformed score map: ") + e.what()});
    } catch (const std::invalid_argument& e) {
        throw LoadError(origin, {e.what()});
    }
}

inline void save_score_map(const ScoreMap& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write score map " + path.string());
    }
    out << to_json(m).dump(1) << '\n';
}

inline ScoreMap load_score_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw LoadError(path.string(), {"cannot open file"});
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(path.string(), {std::string("parse error: ") + e.what()});
    }
    return score_map_from_json(j, path.string());
}

/// Maps a cell at a radius to the view a scorer should look at.
using ViewProvider = std::function<ViewRef(CellId, double)>;

/// Scores every cell of the sphere for one query. Any failure aborts and
/// names the failing cell.
inline ScoreMap compute_score_map(Scorer& scorer, const PolySphere& sphere, const Query& query, double radius,
                                  const ViewProvider& provider = {}) {
    std::vector<ViewRef> views;
    views.reserve(sphere.size());
    for (CellId c = 0; c < sphere.size(); ++c) {
        views.push_back(provider ? provider(c, radius) : cell_view(c, radius));
    }
    ScoreMap map{query, scorer.id(), radius, sphere.checksum(), {}, {}};
    try {
        map.scores = scorer.score_batch(query, views);
    } catch (const ViewScoreError& e) {
        throw ScorerError("score map aborted at cell " + std::to_string(e.batch_index()) + ": " + e.what());
    }
    if (map.scores.size() != sphere.size()) {
        throw ScorerError("scorer returned " + std::to_string(map.scores.size()) + " scores for " +
                          std::to_string(sphere.size()) + " cells");
    }
    for (CellId c = 0; c < sphere.size(); ++c) {
        if (!std::isfinite(map.scores[c])) {
            throw ScorerError("score map aborted at cell " + std::to_string(c) + ": non-finite score");
        }
    }
    return map;
}

/// Cells whose value exceeds every neighbor's.
inline std::vector<CellId> local_maxima(const PolySphere& sphere, std::span<const double> values) {
    if (values.size() != sphere.size()) {
        throw std::invalid_argument("value count does not match the sphere");
    }
    std::vector<CellId> out;
    for (CellId c = 0; c < sphere.size(); ++c) {
        const auto nb = sphere.neighbors(c);
        if (std::all_of(nb.begin(), nb.end(), [&](CellId n) { return values[c] > values[n]; })) {
            out.push_back(c);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic oracles

enum class OracleKind { Smooth, Stepped, Ragged };

inline std::string_view to_string(OracleKind k) {
    switch (k) {
        case OracleKind::Smooth: return "smooth";
        case OracleKind::Stepped: return "stepped";
        case OracleKind::Ragged: return "ragged";
    }
    return "?";
}

inline OracleKind parse_oracle_kind(std::string_view s) {
    if (s == "smooth") return OracleKind::Smooth;
    if (s == "stepped") return OracleKind::Stepped;
    if (s == "ragged") return OracleKind::Ragged;
    throw std::invalid_argument("unknown oracle profile '" + std::string(s) + "'");
}

/// Shape of a synthetic scoring function centered on a gold cell.
///
/// smooth:  cos(angle to gold)
/// stepped: plateau value per ring 0..3 of gold, 0 beyond
/// ragged:  max(smooth, max over spurious s of height - drop * hops(c, s))
///          + amplitude * u(c), with u(c) in [-1, 1] a seeded per-cell hash
struct OracleProfile {
    OracleKind kind = OracleKind::Smooth;
    CellId gold = 0;
    std::uint64_t seed = 0;
    double amplitude = 0.0;
    std::vector<CellId> spurious;
    double spurious_height = 0.8;
    double spurious_drop = 0.15;
    std::array<double, 4> plateaus = {1.0, 0.75, 0.5, 0.25};
};

/// Scorer with a fixed gold cell; the whole map is tabulated at construction.
class OracleScorer final : public Scorer {
public:
    OracleScorer(std::string id, CellId gold, std::vector<double> table)
        : id_(std::move(id)), gold_(gold), table_(std::move(table)) {}

    std::string id() const override { return id_; }

    double score(const Query&, const ViewRef& view) override {
        if (!view.cell || *view.cell >= table_.size()) {
            throw ScorerError("oracle scorer needs a valid cell reference");
        }
        return table_[*view.cell];
    }

    CellId gold() const noexcept { return gold_; }
    const std::vector<double>& table() const noexcept { return table_; }

private:
    std::string id_;
    CellId gold_;
    std::vector<double> table_;
};

namespace detail {

inline double cell_noise(std::uint64_t seed, CellId cell) {
    return 2.0 * unit_from_bits(splitmix64(seed ^ splitmix64(0x5EED0000ULL + cell))) - 1.0;
}

}  // namespace detail

inline OracleScorer make_oracle(const OracleProfile& profile, const PolySphere& sphere) {
    if (!sphere.contains(profile.gold)) {
        throw std::invalid_argument("oracle gold cell out of range");
    }
    if (!(profile.amplitude >= 0.0)) {
        throw std::invalid_argument("oracle noise amplitude must be >= 0");
    }
    const std::size_t n = sphere.size();
    std::vector<double> table(n);
    const Vec3& g = sphere.center(profile.gold);
    for (CellId c = 0; c < n; ++c) {
        table[c] = std::clamp(sphere.center(c).dot(g), -1.0, 1.0);
    }
    table[profile.gold] = 1.0;

    switch (profile.kind) {
        case OracleKind::Smooth:
            break;
        case OracleKind::Stepped: {
            const auto hops = sphere.distances_from(profile.gold);
            for (CellId c = 0; c < n; ++c) {
                table[c] = hops[c] <= 3 ? profile.plateaus[static_cast<std::size_t>(hops[c])] : 0.0;
            }
            break;
        }
        case OracleKind::Ragged: {
            const double a = profile.amplitude;
            const double height = profile.spurious_height;
            const double drop = profile.spurious_drop;
            std::vector<std::vector<int>> bump_hops;
            for (std::size_t i = 0; i < profile.spurious.size(); ++i) {
                const CellId s = profile.spurious[i];
                if (!sphere.contains(s)) {
                    throw std::invalid_argument("spurious optimum cell out of range");
                }
                if (s == profile.gold) {
                    throw std::invalid_argument("spurious optimum placed at the gold cell");
                }
                if (!(drop > 2.0 * a)) {
                    throw std::invalid_argument("spurious drop must exceed twice the noise amplitude");
                }
                for (CellId nb : sphere.neighbors(s)) {
                    if (!(table[nb] < height - 2.0 * a)) {
                        throw std::invalid_argument("spurious optimum at cell " + std::to_string(s) +
                                                    " is too close to gold to stay a local maximum");
                    }
                }
                bump_hops.push_back(sphere.distances_from(s));
                for (std::size_t k = 0; k < i; ++k) {
                    if (bump_hops[k][s] < 2) {
                        throw std::invalid_argument("spurious optima must not touch each other");
                    }
                }
            }
            for (CellId c = 0; c < n; ++c) {
                double v = table[c];
                for (const auto& hops : bump_hops) {
                    v = std::max(v, height - drop * hops[c]);
                }
                table[c] = v + a * detail::cell_noise(profile.seed, c);
            }
            break;
        }
    }
    return OracleScorer("oracle:" + std::string(to_string(profile.kind)), profile.gold, std::move(table));
}

/// Picks `count` spurious-optimum cells whose neighbors all have a smooth
/// value (cosine to gold) below max_neighbor_similarity, pairwise at least
/// min_separation hops apart. Seeded and deterministic.
inline std::vector<CellId> place_spurious_optima(const PolySphere& sphere, CellId gold, std::size_t count,
                                                 std::uint64_t seed, double max_neighbor_similarity,
                                                 int min_separation = 6) {
    const Vec3& g = sphere.center(gold);
    std::vector<CellId> candidates;
    for (CellId c = 0; c < sphere.size(); ++c) {
        const auto nb = sphere.neighbors(c);
        const bool low = c != gold && std::all_of(nb.begin(), nb.end(), [&](CellId n) {
            return sphere.center(n).dot(g) < max_neighbor_similarity;
        });
        if (low) {
            candidates.push_back(c);
        }
    }
    Rng rng(seed);
    rng.shuffle(candidates);
    std::vector<CellId> chosen;
    std::vector<std::vector<int>> chosen_hops;
    for (CellId c : candidates) {
        if (chosen.size() == count) {
            break;
        }
        const bool apart = std::all_of(chosen_hops.begin(), chosen_hops.end(),
                                       [&](const std::vector<int>& h) { return h[c] >= min_separation; });
        if (apart) {
            chosen.push_back(c);
            chosen_hops.push_back(sphere.distances_from(c));
        }
    }
    if (chosen.size() < count) {
        throw std::invalid_argument("cannot place " + std::to_string(count) + " spurious optima on this sphere");
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

/// Oracle family parameters shared by every query; the gold cell comes from
/// the query's canonical view.
struct OracleFamily {
    OracleKind kind = OracleKind::Smooth;
    std::uint64_t seed = 0;
    double amplitude = 0.05;
    std::size_t spurious_count = 8;
    double spurious_height = 0.85;
    double spurious_drop = 0.15;
};

/// Oracle whose gold cell is the canonical cell of each query's view.
class ViewOracleScorer final : public Scorer {
public:
    ViewOracleScorer(const PolySphere& sphere, const ViewConvention& convention, const OracleFamily& family) {
        for (std::size_t v = 0; v < kCanonicalViews.size(); ++v) {
            OracleProfile p;
            p.kind = family.kind;
            p.gold = canonical_cell(sphere, convention, kCanonicalViews[v]);
            p.seed = derive_seed(family.seed, {v});
            if (family.kind == OracleKind::Ragged) {
                p.amplitude = family.amplitude;
                p.spurious_height = family.spurious_height;
                p.spurious_drop = family.spurious_drop;
                p.spurious = place_spurious_optima(sphere, p.gold, family.spurious_count, derive_seed(p.seed, {1}),
                                                   family.spurious_height - 2.0 * family.amplitude - 0.05);
            }
            oracles_.push_back(make_oracle(p, sphere));
        }
        id_ = "oracle:" + std::string(to_string(family.kind));
    }

    std::string id() const override { return id_; }

    double score(const Query& query, const ViewRef& view) override {
        return oracle(query.view).score(query, view);
    }

    OracleScorer& oracle(CanonicalView view) { return oracles_.at(static_cast<std::size_t>(view)); }

private:
    std::string id_;
    std::vector<OracleScorer> oracles_;
};

/// Scores looked up from precomputed score maps, bit-exact.
class CachedScorer final : public Scorer {
public:
    CachedScorer(std::vector<ScoreMap> maps, std::string source, const PolySphere* sphere = nullptr)
        : maps_(std::move(maps)), id_("cache:" + std::move(source)) {
        for (const auto& m : maps_) {
            if (sphere != nullptr) {
                if (m.sphere_checksum != sphere->checksum() || m.scores.size() != sphere->size()) {
                    throw std::invalid_argument("cached score map for '" + m.query.text +
                                                "' was computed on a different sphere");
                }
            }
        }
    }

    std::string id() const override { return id_; }

    double score(const Query& query, const ViewRef& view) override {
        const ScoreMap* m = find(query, view.radius);
        if (m == nullptr) {
            throw ScorerError("no cached score map for query '" + query.text + "' at radius " +
                              std::to_string(view.radius));
        }
        if (!view.cell || *view.cell >= m->scores.size()) {
            throw ScorerError("cached scorer needs a valid cell reference");
        }
        return m->scores[*view.cell];
    }

    const std::vector<ScoreMap>& maps() const noexcept { return maps_; }

private:
    const ScoreMap* find(const Query& query, double radius) const {
        for (const auto& m : maps_) {
            if (m.query.text == query.text && std::abs(m.radius - radius) <= 1e-9 * std::max(1.0, radius)) {
                return &m;
            }
        }
        return nullptr;
    }

    std::vector<ScoreMap> maps_;
    std::string id_;
};

}  // namespace viewsphere
