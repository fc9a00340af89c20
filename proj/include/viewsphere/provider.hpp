#pragma once

// Image manifests keyed by (object, cell, radius), the training-size
// ablation sampler and the binary embedding cache.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "viewsphere/camera.hpp"
#include "viewsphere/errors.hpp"
#include "viewsphere/goldeval.hpp"
#include "viewsphere/losses.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/random.hpp"
#include "viewsphere/scorer.hpp"

namespace viewsphere {

struct ManifestRecord {
    std::string object;
    std::string category;
    std::string split;  ///< "train" or "test"
    std::optional<CellId> cell;
    std::optional<CanonicalView> view;
    double radius = 5.0;
    std::string image;  ///< as written in the file

    bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
    std::vector<ManifestRecord> records;
    std::string sphere_checksum;
    ViewConvention convention;
    nlohmann::json provenance = nlohmann::json::object();
    std::filesystem::path base_dir;  ///< relative image paths resolve against this

    std::filesystem::path image_path(const ManifestRecord& r) const {
        const std::filesystem::path p(r.image);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }

    nlohmann::json to_json() const {
        nlohmann::json recs = nlohmann::json::array();
        for (const auto& r : records) {
            nlohmann::json j{{"object", r.object}, {"category", r.category}, {"split", r.split},
                             {"radius", r.radius},  {"image", r.image}};
            if (r.cell) j["cell"] = *r.cell;
            if (r.view) j["view"] = to_string(*r.view);
            recs.push_back(std::move(j));
        }
        return {{"format", "viewsphere.manifest"},
                {"version", 1},
                {"sphere_checksum", sphere_checksum},
                {"view_convention", {{"up", axis_name(convention.up())}, {"front", axis_name(convention.front())}}},
                {"provenance", provenance},
                {"records", std::move(recs)}};
    }
};

struct ManifestOptions {
    bool check_files = true;
};

namespace detail {

inline std::string record_key(const ManifestRecord& r) {
    return r.object + "@" + std::to_string(*r.cell) + "/r" + fixed(r.radius, 6);
}

}  // namespace detail

/// Parses and validates a manifest. View-only records get their cell from
/// the convention. Every problem found is reported in one LoadError.
inline Manifest manifest_from_json(const nlohmann::json& j, const PolySphere& sphere, const std::string& origin,
                                   const std::filesystem::path& base_dir, const ManifestOptions& opt = {}) {
    std::vector<std::string> problems;
    if (j.value("format", "") != "viewsphere.manifest" || j.value("version", 0) != 1) {
        throw LoadError(origin, {"not a viewsphere manifest (format/version mismatch)"});
    }
    Manifest m;
    m.base_dir = base_dir;
    m.sphere_checksum = j.value("sphere_checksum", "");
    if (m.sphere_checksum != sphere.checksum()) {
        problems.push_back("sphere checksum " + m.sphere_checksum + " does not match loaded sphere " +
                           sphere.checksum());
    }
    if (j.contains("view_convention")) {
        try {
            const auto& vc = j.at("view_convention");
            m.convention = ViewConvention::from_names(vc.at("up").get<std::string>(), vc.at("front").get<std::string>());
        } catch (const std::exception& e) {
            problems.push_back(std::string("bad view convention: ") + e.what());
        }
    }
    if (j.contains("provenance")) m.provenance = j.at("provenance");

    std::map<std::string, std::size_t> seen;
    const auto& recs = j.contains("records") ? j.at("records") : nlohmann::json::array();
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& rj = recs[i];
        const std::string where = "record " + std::to_string(i);
        ManifestRecord r;
        try {
            r.object = rj.at("object").get<std::string>();
            r.category = rj.at("category").get<std::string>();
            r.split = rj.value("split", "train");
            r.radius = rj.value("radius", 5.0);
            r.image = rj.at("image").get<std::string>();
            if (rj.contains("view")) r.view = parse_view(rj.at("view").get<std::string>());
            if (rj.contains("cell")) r.cell = rj.at("cell").get<CellId>();
        } catch (const std::exception& e) {
            problems.push_back(where + ": " + e.what());
            continue;
        }
        if (r.split != "train" && r.split != "test") {
            problems.push_back(where + ": split must be train or test, got '" + r.split + "'");
        }
        if (!(r.radius > 0.0)) {
            problems.push_back(where + ": radius must be positive");
        }
        if (!r.cell && !r.view) {
            problems.push_back(where + ": needs a cell or a view label");
            continue;
        }
        if (r.cell && !sphere.contains(*r.cell)) {
            problems.push_back(where + ": cell " + std::to_string(*r.cell) + " out of range");
            continue;
        }
        if (!r.cell) r.cell = canonical_cell(sphere, m.convention, *r.view);
        const auto key = detail::record_key(r);
        if (auto it = seen.find(key); it != seen.end()) {
            problems.push_back("duplicate key " + key + " (records " + std::to_string(it->second) + " and " +
                               std::to_string(i) + ")");
        } else {
            seen.emplace(key, i);
        }
        if (opt.check_files && !std::filesystem::is_regular_file(m.image_path(r))) {
            problems.push_back(where + ": missing image file " + m.image_path(r).string());
        }
        m.records.push_back(std::move(r));
    }
    if (!problems.empty()) {
        throw LoadError(origin, std::move(problems));
    }
    return m;
}

inline Manifest load_manifest(const std::filesystem::path& path, const PolySphere& sphere,
                              const ManifestOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) {
        throw LoadError(path.string(), {"cannot open file"});
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw LoadError(path.string(), {std::string("parse error: ") + e.what()});
    }
    return manifest_from_json(j, sphere, path.string(), std::filesystem::absolute(path).parent_path(), opt);
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write manifest " + path.string());
    }
    out << m.to_json().dump(2) << '\n';
    if (!out) {
        throw std::runtime_error("failed writing manifest " + path.string());
    }
}

// ---------------------------------------------------------------------------
// Ablation

/// Nested, seeded subsets of the view-labeled training records with
/// sizes[i] records per (category, view). Each stratum is shuffled once and
/// every subset takes a prefix, so smaller subsets are contained in larger
/// ones. Subsets keep the manifest's record order.
inline std::vector<Manifest> ablation_subsets(const Manifest& m, const std::vector<std::size_t>& sizes,
                                              std::uint64_t seed) {
    if (sizes.empty()) {
        throw std::invalid_argument("ablation needs at least one size");
    }
    std::map<std::pair<std::string, CanonicalView>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (r.split == "train" && r.view) strata[{r.category, *r.view}].push_back(i);
    }
    if (strata.empty()) {
        throw std::invalid_argument("manifest has no view-labeled training records to ablate");
    }
    const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());
    std::vector<std::string> shortfalls;
    for (const auto& [key, idx] : strata) {
        if (idx.size() < largest) {
            shortfalls.push_back(key.first + "/" + std::string(to_string(key.second)) + ": have " +
                                 std::to_string(idx.size()) + ", need " + std::to_string(largest));
        }
    }
    if (!shortfalls.empty()) {
        std::string msg = "insufficient records for ablation";
        for (const auto& s : shortfalls) msg += "; " + s;
        throw std::invalid_argument(msg);
    }
    for (auto& [key, idx] : strata) {
        Rng rng(derive_seed(seed, {seed_label(key.first), static_cast<std::uint64_t>(key.second)}));
        rng.shuffle(idx);
    }
    std::vector<Manifest> out;
    for (std::size_t size : sizes) {
        std::vector<std::size_t> chosen;
        for (const auto& [key, idx] : strata) {
            chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(size));
        }
        std::sort(chosen.begin(), chosen.end());
        Manifest sub = m;
        sub.records.clear();
        for (std::size_t i : chosen) sub.records.push_back(m.records[i]);
        sub.provenance["ablation"] = {{"per_view", size}, {"seed", seed}};
        out.push_back(std::move(sub));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Manifest-backed views

/// Candidates for retrieval evaluation, one per record.
inline std::vector<RetrievalCandidate> retrieval_candidates(const Manifest& m) {
    std::vector<RetrievalCandidate> out;
    for (const auto& r : m.records) {
        ViewRef v{r.cell, r.radius, r.image, m.image_path(r).string()};
        out.push_back({r.image, r.category, r.split, r.view, std::move(v)});
    }
    return out;
}

/// Maps (cell, radius) to the object's image. Unknown slots raise
/// ScorerError; they are never scored as zero.
inline ViewProvider manifest_provider(const Manifest& m, const std::string& object) {
    auto table = std::make_shared<std::map<std::pair<CellId, std::string>, ViewRef>>();
    for (const auto& r : m.records) {
        if (r.object == object) {
            (*table)[{*r.cell, fixed(r.radius, 6)}] = ViewRef{r.cell, r.radius, r.image, m.image_path(r).string()};
        }
    }
    if (table->empty()) {
        throw std::invalid_argument("manifest has no records for object '" + object + "'");
    }
    return [table, object](CellId cell, double radius) {
        const auto it = table->find({cell, fixed(radius, 6)});
        if (it == table->end()) {
            throw ScorerError("no image for object '" + object + "' at cell " + std::to_string(cell) + ", radius " +
                              fixed(radius, 3));
        }
        return it->second;
    };
}

// ---------------------------------------------------------------------------
// Embedding cache

class EmbeddingCache {
public:
    EmbeddingCache() = default;
    explicit EmbeddingCache(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, Embedding>& entries() const { return entries_; }

    /// Absent keys return nullptr.
    const Embedding* find(const std::string& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void insert(const std::string& key, Embedding v) {
        if (dim_ == 0) dim_ = v.size();
        if (v.size() != dim_ || dim_ == 0) {
            throw std::invalid_argument("embedding for '" + key + "' has dimension " + std::to_string(v.size()) +
                                        ", cache dimension is " + std::to_string(dim_));
        }
        entries_[key] = std::move(v);
    }

    void merge(const EmbeddingCache& other) {
        if (other.size() == 0) return;
        if (dim_ != 0 && other.dim_ != dim_) {
            throw std::invalid_argument("cannot merge embedding caches with dimensions " + std::to_string(dim_) +
                                        " and " + std::to_string(other.dim_));
        }
        for (const auto& [k, v] : other.entries_) insert(k, v);
    }

private:
    std::size_t dim_ = 0;
    std::map<std::string, Embedding> entries_;
};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace detail

/// Text header (format, dim, count, endian) terminated by an empty line,
/// then per entry: key length (u32 LE), key bytes, dim IEEE-754 doubles LE.
inline void write_cache(const EmbeddingCache& cache, const std::filesystem::path& path) {
    std::string out = "viewsphere.embcache 1\ndim " + std::to_string(cache.dim()) + "\ncount " +
                      std::to_string(cache.size()) + "\nendian little\n\n";
    for (const auto& [k, v] : cache.entries()) {
        const auto len = static_cast<std::uint32_t>(k.size());
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xffU));
        out += k;
        for (double d : v) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(d));
    }
    std::ofstream f(path, std::ios::binary);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) {
        throw std::runtime_error("failed writing embedding cache " + path.string());
    }
}

inline EmbeddingCache read_cache(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw LoadError(path.string(), {"cannot open file"});
    }
    const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    const auto end = data.find("\n\n");
    if (end == std::string::npos) {
        throw LoadError(path.string(), {"missing header terminator"});
    }
    std::istringstream header(data.substr(0, end));
    std::string magic, key;
    int version = 0;
    std::size_t dim = 0, count = 0;
    std::string endian;
    header >> magic >> version;
    std::vector<std::string> problems;
    if (magic != "viewsphere.embcache" || version != 1) problems.push_back("not a viewsphere embedding cache (v1)");
    while (header >> key) {
        if (key == "dim") header >> dim;
        else if (key == "count") header >> count;
        else if (key == "endian") header >> endian;
        else problems.push_back("unknown header field '" + key + "'");
    }
    if (endian != "little") problems.push_back("unsupported endianness '" + endian + "'");
    if (dim == 0 && count > 0) problems.push_back("dimension must be positive");
    if (!problems.empty()) throw LoadError(path.string(), std::move(problems));

    EmbeddingCache cache(dim);
    const auto* p = reinterpret_cast<const unsigned char*>(data.data()) + end + 2;
    const auto* stop = reinterpret_cast<const unsigned char*>(data.data()) + data.size();
    for (std::size_t e = 0; e < count; ++e) {
        if (stop - p < 4) throw LoadError(path.string(), {"truncated at entry " + std::to_string(e)});
        const std::uint32_t len = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        p += 4;
        if (static_cast<std::size_t>(stop - p) < len + 8 * dim) {
            throw LoadError(path.string(), {"truncated at entry " + std::to_string(e)});
        }
        std::string k(reinterpret_cast<const char*>(p), len);
        p += len;
        Embedding v(dim);
        for (std::size_t d = 0; d < dim; ++d, p += 8) v[d] = std::bit_cast<double>(detail::get_u64_le(p));
        if (cache.find(k)) throw LoadError(path.string(), {"duplicate key '" + k + "'"});
        cache.insert(k, std::move(v));
    }
    if (p != stop) throw LoadError(path.string(), {"trailing bytes after " + std::to_string(count) + " entries"});
    return cache;
}

/// Scores a view as the cosine between cached text and image embeddings.
/// Images are looked up by image id; misses raise ScorerError.
class EmbeddingCacheScorer final : public Scorer {
public:
    EmbeddingCacheScorer(EmbeddingCache cache, std::string source) : cache_(std::move(cache)), source_(std::move(source)) {}

    std::string id() const override { return "cache:" + source_; }
    bool cell_based() const override { return false; }

    double score(const Query& q, const ViewRef& v) override {
        const Embedding* t = cache_.find(q.text);
        if (!t) throw ScorerError("embedding cache has no entry for query '" + q.text + "'");
        const Embedding* i = cache_.find(v.image_id);
        if (!i) {
            throw ScorerError("embedding cache has no entry for image '" + v.image_id + "'");
        }
        return cosine(*t, *i);
    }

private:
    EmbeddingCache cache_;
    std::string source_;
};

// ---------------------------------------------------------------------------
// Loss batches

/// Pairs every view-labeled record of the split with its query text: Zv
/// holds image embeddings, Zq the query embeddings, Zr the embeddings of
/// all cell-only (random view) records of the split.
inline EmbeddingBatch embedding_batch(const Manifest& m, const EmbeddingCache& cache, const std::string& split,
                                      std::string_view text_template = kDefaultQueryTemplate) {
    std::vector<const Embedding*> v, q, r;
    std::set<std::string> missing;
    auto need = [&](const std::string& key, std::vector<const Embedding*>& into) {
        const Embedding* e = cache.find(key);
        if (!e) missing.insert(key);
        into.push_back(e);
    };
    for (const auto& rec : m.records) {
        if (rec.split != split) continue;
        if (rec.view) {
            need(rec.image, v);
            need(make_query(rec.category, *rec.view, text_template).text, q);
        } else {
            need(rec.image, r);
        }
    }
    if (!missing.empty()) {
        std::vector<std::string> list(missing.begin(), missing.end());
        throw LoadError("embedding cache", {"missing " + std::to_string(list.size()) + " embeddings, first: " + list[0]});
    }
    const auto dim = static_cast<Eigen::Index>(cache.dim());
    auto to_matrix = [dim](const std::vector<const Embedding*>& rows) {
        Matrix out(static_cast<Eigen::Index>(rows.size()), dim);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (Eigen::Index d = 0; d < dim; ++d) out(static_cast<Eigen::Index>(i), d) = (*rows[i])[static_cast<std::size_t>(d)];
        }
        return out;
    };
    return {to_matrix(v), to_matrix(q), to_matrix(r)};
}

}  // namespace viewsphere
