#pragma once

// Discretized viewpoint space: the cells of a class-I Goldberg polyhedron
// GP(v,0), represented by their dual vertices, i.e. the projected vertices of
// a frequency-v geodesic icosahedron. 10v^2+2 cells, exactly 12 pentagons.

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <queue>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "viewsphere/errors.hpp"

namespace viewsphere {

using CellId = std::uint32_t;
using Vec3 = Eigen::Vector3d;

struct Cell {
    CellId id = 0;
    Vec3 center = Vec3::Zero();
    bool is_pentagon = false;
};

inline constexpr int kSphereFormatVersion = 1;

class PolySphere {
public:
    /// Builds GP(frequency, 0). Cell ids 0..11 are the icosahedron vertices
    /// (the pentagons); 0 is the +Y pole and 11 the -Y pole.
    static PolySphere build(int frequency);

    int frequency() const noexcept { return frequency_; }
    std::size_t size() const noexcept { return cells_.size(); }
    const std::vector<Cell>& cells() const noexcept { return cells_; }
    const Cell& cell(CellId id) const { return cells_.at(check(id)); }
    const Vec3& center(CellId id) const { return cells_.at(check(id)).center; }
    std::span<const CellId> neighbors(CellId id) const { return adjacency_.at(check(id)); }
    const std::vector<std::vector<CellId>>& adjacency() const noexcept { return adjacency_; }
    bool contains(CellId id) const noexcept { return id < cells_.size(); }

    /// BFS hop counts from origin to every cell.
    std::vector<int> distances_from(CellId origin) const;

    /// Cells at graph distance exactly k from origin, ascending ids.
    std::vector<CellId> ring(CellId origin, int k) const;

    /// Cells at graph distance <= k from origin (origin included), ascending ids.
    std::vector<CellId> ball(CellId origin, int k) const;

    int graph_distance(CellId a, CellId b) const;

    /// Cell whose center has maximal dot product with direction. Dot products
    /// within kTieTolerance of the best are ties and resolve to the lowest id.
    CellId nearest_cell(const Vec3& direction) const;

    /// Great-circle angle between two cell centers (radians).
    double angular_distance(CellId a, CellId b) const;

    /// Hop distance from each cell to the closest pentagon.
    std::vector<int> pentagon_clearance() const;

    /// FNV-1a over frequency, center bit patterns and adjacency; 16 hex digits.
    std::string checksum() const;

    nlohmann::json to_json() const;
    static PolySphere from_json(const nlohmann::json& j, const std::string& origin = "<json>");

    void save(const std::filesystem::path& path) const;
    static PolySphere load(const std::filesystem::path& path);

    static constexpr double kTieTolerance = 1e-12;

private:
    PolySphere() = default;

    std::size_t check(CellId id) const {
        if (id >= cells_.size()) {
            throw std::invalid_argument("cell id " + std::to_string(id) + " out of range [0, " +
                                        std::to_string(cells_.size()) + ")");
        }
        return id;
    }

    /// Empty when every invariant holds.
    std::vector<std::string> invariant_violations() const;

    int frequency_ = 0;
    std::vector<Cell> cells_;
    std::vector<std::vector<CellId>> adjacency_;
};

namespace detail {

struct Icosahedron {
    std::array<Vec3, 12> vertices;
    std::array<std::array<int, 3>, 20> faces;
};

inline Icosahedron canonical_icosahedron() {
    Icosahedron ico;
    const double ring_y = 1.0 / std::sqrt(5.0);
    const double ring_r = 2.0 / std::sqrt(5.0);
    const double step = 2.0 * std::numbers::pi / 5.0;
    ico.vertices[0] = Vec3(0.0, 1.0, 0.0);
    for (int k = 0; k < 5; ++k) {
        const double upper = step * k;
        const double lower = step * k + step / 2.0;
        ico.vertices[1 + k] = Vec3(ring_r * std::cos(upper), ring_y, ring_r * std::sin(upper));
        ico.vertices[6 + k] = Vec3(ring_r * std::cos(lower), -ring_y, ring_r * std::sin(lower));
    }
    ico.vertices[11] = Vec3(0.0, -1.0, 0.0);

    int f = 0;
    for (int k = 0; k < 5; ++k) {
        const int u0 = 1 + k, u1 = 1 + (k + 1) % 5;
        const int l0 = 6 + k, l1 = 6 + (k + 1) % 5;
        ico.faces[f++] = {0, u0, u1};
        ico.faces[f++] = {u0, l0, u1};
        ico.faces[f++] = {u1, l0, l1};
        ico.faces[f++] = {11, l1, l0};
    }
    return ico;
}

// A lattice point is identified by its nonzero barycentric weights over the
// icosahedron corners, sorted by corner id, so points on shared edges and
// corners dedupe exactly and get bit-identical positions.
using LatticeKey = std::vector<std::pair<int, int>>;

inline Vec3 lattice_position(const Icosahedron& ico, const LatticeKey& key) {
    Vec3 p = Vec3::Zero();
    for (const auto& [corner, weight] : key) {
        p += static_cast<double>(weight) * ico.vertices[corner];
    }
    return p.normalized();
}

inline std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t v) {
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) {
        le[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    }
    return fnv1a(h, le, 8);
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace detail

inline PolySphere PolySphere::build(int frequency) {
    if (frequency < 1) {
        throw std::invalid_argument("sphere frequency must be >= 1, got " + std::to_string(frequency));
    }
    const detail::Icosahedron ico = detail::canonical_icosahedron();
    const int n = frequency;

    std::map<detail::LatticeKey, CellId> ids;
    std::vector<detail::LatticeKey> keys;
    auto intern = [&](detail::LatticeKey key) {
        std::sort(key.begin(), key.end());
        auto [it, inserted] = ids.emplace(key, static_cast<CellId>(keys.size()));
        if (inserted) {
            keys.push_back(std::move(key));
        }
        return it->second;
    };
    for (int v = 0; v < 12; ++v) {
        intern({{v, n}});
    }

    std::set<std::pair<CellId, CellId>> edges;
    auto link = [&](CellId a, CellId b) {
        if (a > b) {
            std::swap(a, b);
        }
        edges.emplace(a, b);
    };

    for (const auto& face : ico.faces) {
        // point (i, j) carries weights (n-i-j, i, j) on corners (A, B, C)
        auto point = [&](int i, int j) {
            detail::LatticeKey key;
            const int w[3] = {n - i - j, i, j};
            for (int c = 0; c < 3; ++c) {
                if (w[c] > 0) {
                    key.emplace_back(face[static_cast<std::size_t>(c)], w[c]);
                }
            }
            return intern(std::move(key));
        };
        for (int i = 0; i <= n; ++i) {
            for (int j = 0; i + j <= n; ++j) {
                const CellId here = point(i, j);
                if (i + 1 + j <= n) {
                    link(here, point(i + 1, j));
                    link(here, point(i, j + 1));
                }
                if (i >= 1) {
                    link(here, point(i - 1, j + 1));
                }
            }
        }
    }

    PolySphere sphere;
    sphere.frequency_ = frequency;
    sphere.cells_.resize(keys.size());
    sphere.adjacency_.resize(keys.size());
    for (const auto& [a, b] : edges) {
        sphere.adjacency_[a].push_back(b);
        sphere.adjacency_[b].push_back(a);
    }
    for (std::size_t id = 0; id < keys.size(); ++id) {
        auto& nb = sphere.adjacency_[id];
        std::sort(nb.begin(), nb.end());
        sphere.cells_[id] = Cell{static_cast<CellId>(id), detail::lattice_position(ico, keys[id]), nb.size() == 5};
    }
    return sphere;
}

inline std::vector<int> PolySphere::distances_from(CellId origin) const {
    check(origin);
    std::vector<int> dist(cells_.size(), -1);
    std::queue<CellId> frontier;
    dist[origin] = 0;
    frontier.push(origin);
    while (!frontier.empty()) {
        const CellId c = frontier.front();
        frontier.pop();
        for (CellId nb : adjacency_[c]) {
            if (dist[nb] < 0) {
                dist[nb] = dist[c] + 1;
                frontier.push(nb);
            }
        }
    }
    return dist;
}

inline std::vector<CellId> PolySphere::ring(CellId origin, int k) const {
    if (k < 0) {
        throw std::invalid_argument("ring index must be non-negative");
    }
    const auto dist = distances_from(origin);
    std::vector<CellId> out;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] == k) {
            out.push_back(static_cast<CellId>(i));
        }
    }
    return out;
}

inline std::vector<CellId> PolySphere::ball(CellId origin, int k) const {
    if (k < 0) {
        throw std::invalid_argument("ball radius must be non-negative");
    }
    const auto dist = distances_from(origin);
    std::vector<CellId> out;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] >= 0 && dist[i] <= k) {
            out.push_back(static_cast<CellId>(i));
        }
    }
    return out;
}

inline int PolySphere::graph_distance(CellId a, CellId b) const {
    check(b);
    if (a == b) {
        check(a);
        return 0;
    }
    return distances_from(a)[b];
}

inline CellId PolySphere::nearest_cell(const Vec3& direction) const {
    const double norm = direction.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw std::invalid_argument("nearest_cell needs a non-zero finite direction");
    }
    const Vec3 d = direction / norm;
    CellId best = 0;
    double best_dot = -std::numeric_limits<double>::infinity();
    for (const Cell& c : cells_) {
        const double dot = c.center.dot(d);
        if (dot > best_dot + kTieTolerance) {
            best_dot = dot;
            best = c.id;
        }
    }
    return best;
}

inline double PolySphere::angular_distance(CellId a, CellId b) const {
    const double dot = std::clamp(center(a).dot(center(b)), -1.0, 1.0);
    return std::acos(dot);
}

inline std::vector<int> PolySphere::pentagon_clearance() const {
    std::vector<int> dist(cells_.size(), -1);
    std::queue<CellId> frontier;
    for (const Cell& c : cells_) {
        if (c.is_pentagon) {
            dist[c.id] = 0;
            frontier.push(c.id);
        }
    }
    while (!frontier.empty()) {
        const CellId c = frontier.front();
        frontier.pop();
        for (CellId nb : adjacency_[c]) {
            if (dist[nb] < 0) {
                dist[nb] = dist[c] + 1;
                frontier.push(nb);
            }
        }
    }
    return dist;
}

inline std::string PolySphere::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = detail::fnv1a_u64(h, static_cast<std::uint64_t>(frequency_));
    h = detail::fnv1a_u64(h, cells_.size());
    for (const Cell& c : cells_) {
        for (int k = 0; k < 3; ++k) {
            h = detail::fnv1a_u64(h, std::bit_cast<std::uint64_t>(c.center[k]));
        }
        h = detail::fnv1a_u64(h, c.is_pentagon ? 1U : 0U);
        for (CellId nb : adjacency_[c.id]) {
            h = detail::fnv1a_u64(h, nb);
        }
        h = detail::fnv1a_u64(h, 0xffffffffffffffffULL);
    }
    return detail::hex64(h);
}

inline std::vector<std::string> PolySphere::invariant_violations() const {
    std::vector<std::string> problems;
    const std::size_t expected = 10U * static_cast<std::size_t>(frequency_) * static_cast<std::size_t>(frequency_) + 2U;
    if (frequency_ < 1) {
        problems.push_back("frequency must be >= 1");
    }
    if (cells_.size() != expected) {
        problems.push_back("cell count " + std::to_string(cells_.size()) + " != 10*f^2+2 = " + std::to_string(expected));
    }
    if (adjacency_.size() != cells_.size()) {
        problems.push_back("adjacency size does not match cell count");
        return problems;
    }
    std::size_t pentagons = 0;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const Cell& c = cells_[i];
        if (c.id != i) {
            problems.push_back("cell ids are not dense at index " + std::to_string(i));
        }
        if (std::abs(c.center.norm() - 1.0) > 1e-12) {
            problems.push_back("cell " + std::to_string(i) + " center is not a unit vector");
        }
        const auto& nb = adjacency_[i];
        if (nb.size() != 5 && nb.size() != 6) {
            problems.push_back("cell " + std::to_string(i) + " has " + std::to_string(nb.size()) + " neighbors");
        }
        if (c.is_pentagon != (nb.size() == 5)) {
            problems.push_back("cell " + std::to_string(i) + " pentagon flag disagrees with its degree");
        }
        pentagons += c.is_pentagon ? 1 : 0;
        for (CellId other : nb) {
            if (other >= cells_.size() || other == i) {
                problems.push_back("cell " + std::to_string(i) + " has an invalid neighbor " + std::to_string(other));
                continue;
            }
            const auto& back = adjacency_[other];
            if (std::find(back.begin(), back.end(), static_cast<CellId>(i)) == back.end()) {
                problems.push_back("adjacency " + std::to_string(i) + "->" + std::to_string(other) + " is not symmetric");
            }
        }
    }
    if (pentagons != 12) {
        problems.push_back("expected 12 pentagons, found " + std::to_string(pentagons));
    }
    if (problems.empty() && !cells_.empty()) {
        const auto dist = distances_from(0);
        if (std::any_of(dist.begin(), dist.end(), [](int d) { return d < 0; })) {
            problems.push_back("adjacency graph is not connected");
        }
    }
    return problems;
}

inline nlohmann::json PolySphere::to_json() const {
    nlohmann::json cells = nlohmann::json::array();
    for (const Cell& c : cells_) {
        cells.push_back({{"id", c.id},
                         {"center", {c.center.x(), c.center.y(), c.center.z()}},
                         {"pentagon", c.is_pentagon},
                         {"neighbors", adjacency_[c.id]}});
    }
    return {{"format", "viewsphere.sphere"},
            {"version", kSphereFormatVersion},
            {"frequency", frequency_},
            {"checksum", checksum()},
            {"cells", std::move(cells)}};
}

inline PolySphere PolySphere::from_json(const nlohmann::json& j, const std::string& origin) {
    PolySphere sphere;
    std::vector<std::string> problems;
    try {
        if (j.at("format").get<std::string>() != "viewsphere.sphere") {
            throw LoadError(origin, {"not a sphere file"});
        }
        const int version = j.at("version").get<int>();
        if (version != kSphereFormatVersion) {
            throw LoadError(origin, {"unsupported sphere format version " + std::to_string(version)});
        }
        sphere.frequency_ = j.at("frequency").get<int>();
        const auto& cells = j.at("cells");
        sphere.cells_.reserve(cells.size());
        sphere.adjacency_.reserve(cells.size());
        for (const auto& c : cells) {
            const auto& xyz = c.at("center");
            if (xyz.size() != 3) {
                throw LoadError(origin, {"cell center must have 3 components"});
            }
            sphere.cells_.push_back(Cell{c.at("id").get<CellId>(),
                                         Vec3(xyz[0].get<double>(), xyz[1].get<double>(), xyz[2].get<double>()),
                                         c.at("pentagon").get<bool>()});
            sphere.adjacency_.push_back(c.at("neighbors").get<std::vector<CellId>>());
        }
        problems = sphere.invariant_violations();
        if (problems.empty() && j.contains("checksum") && j.at("checksum").get<std::string>() != sphere.checksum()) {
            problems.push_back("stored checksum does not match contents");
        }
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(origin, {std::string("malformed sphere file: ") + e.what()});
    }
    if (!problems.empty()) {
        throw LoadError(origin, std::move(problems));
    }
    return sphere;
}

inline void PolySphere::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write sphere file " + path.string());
    }
    out << to_json().dump(1) << '\n';
}

inline PolySphere PolySphere::load(const std::filesystem::path& path) {
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
    return from_json(j, path.string());
}

}  // namespace viewsphere
