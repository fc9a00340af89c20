#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "viewsphere/provider.hpp"

using namespace viewsphere;
namespace fs = std::filesystem;

namespace {

const PolySphere& sphere10() {
    static const PolySphere s = PolySphere::build(10);
    return s;
}

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("viewsphere_provider_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

void touch(const fs::path& p) { std::ofstream(p) << "img"; }

nlohmann::json three_records(const std::string& checksum) {
    return {{"format", "viewsphere.manifest"},
            {"version", 1},
            {"sphere_checksum", checksum},
            {"view_convention", {{"up", "+y"}, {"front", "-z"}}},
            {"provenance", {{"renderer", "test"}}},
            {"records",
             {{{"object", "car-1"}, {"category", "car"}, {"split", "train"}, {"view", "front"}, {"radius", 5.0},
               {"image", "a.png"}},
              {{"object", "car-1"}, {"category", "car"}, {"split", "train"}, {"cell", 17}, {"radius", 5.0},
               {"image", "b.png"}},
              {{"object", "car-1"}, {"category", "car"}, {"split", "test"}, {"cell", 17}, {"radius", 7.5},
               {"image", "c.png"}}}}};
}

Manifest big_manifest(std::size_t per_view, const std::vector<std::string>& categories) {
    Manifest m;
    m.sphere_checksum = sphere10().checksum();
    for (const auto& cat : categories) {
        for (std::size_t o = 0; o < per_view; ++o) {
            for (auto v : kCanonicalViews) {
                ManifestRecord r;
                r.object = cat + "-" + std::to_string(o);
                r.category = cat;
                r.split = "train";
                r.view = v;
                r.cell = canonical_cell(sphere10(), m.convention, v);
                r.image = r.object + "/" + std::string(to_string(v)) + ".png";
                m.records.push_back(r);
            }
        }
        ManifestRecord extra;
        extra.object = cat + "-0";
        extra.category = cat;
        extra.split = "train";
        extra.cell = 3;
        extra.image = cat + "-random.png";
        m.records.push_back(extra);
    }
    return m;
}

}  // namespace

TEST(Manifest, LoadsWellFormedFile) {
    TempDir dir;
    for (auto f : {"a.png", "b.png", "c.png"}) touch(dir.path() / f);
    std::ofstream(dir.path() / "m.json") << three_records(sphere10().checksum()).dump();
    const auto m = load_manifest(dir.path() / "m.json", sphere10());
    ASSERT_EQ(m.records.size(), 3U);
    EXPECT_EQ(*m.records[0].cell, canonical_cell(sphere10(), m.convention, CanonicalView::Front));
    EXPECT_EQ(m.records[0].view, CanonicalView::Front);
    EXPECT_FALSE(m.records[1].view.has_value());
    EXPECT_EQ(m.image_path(m.records[2]), dir.path() / "c.png");
    EXPECT_EQ(m.provenance["renderer"], "test");
}

TEST(Manifest, RoundTripIsIdentity) {
    TempDir dir;
    for (auto f : {"a.png", "b.png", "c.png"}) touch(dir.path() / f);
    std::ofstream(dir.path() / "m.json") << three_records(sphere10().checksum()).dump();
    const auto a = load_manifest(dir.path() / "m.json", sphere10());
    save_manifest(a, dir.path() / "m2.json");
    const auto b = load_manifest(dir.path() / "m2.json", sphere10());
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Manifest, DuplicateKeyNamed) {
    auto j = three_records(sphere10().checksum());
    j["records"][2]["radius"] = 5.0;
    try {
        manifest_from_json(j, sphere10(), "dup.json", {}, {false});
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        ASSERT_EQ(e.problems().size(), 1U);
        EXPECT_NE(e.problems()[0].find("car-1@17"), std::string::npos) << e.problems()[0];
        EXPECT_EQ(e.file(), "dup.json");
    }
}

TEST(Manifest, WrongChecksumAndMissingFilesAllReported) {
    TempDir dir;
    touch(dir.path() / "a.png");
    try {
        manifest_from_json(three_records("0000000000000000"), sphere10(), "m.json", dir.path());
        FAIL() << "expected LoadError";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.problems().size(), 3U);
        EXPECT_NE(e.problems()[0].find("checksum"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("b.png"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("c.png"), std::string::npos);
    }
}

TEST(Manifest, RejectsBadRecords) {
    auto j = three_records(sphere10().checksum());
    j["records"][0].erase("view");
    j["records"][1]["cell"] = 5000;
    j["records"][2]["split"] = "val";
    try {
        manifest_from_json(j, sphere10(), "m.json", {}, {false});
        FAIL();
    } catch (const LoadError& e) {
        EXPECT_EQ(e.problems().size(), 3U);
    }
}

TEST(Ablation, PaperSizesAreNestedAndStratified) {
    const auto m = big_manifest(1000, {"car", "mug"});
    const auto subsets = ablation_subsets(m, {1000, 100, 10, 1}, 42);
    ASSERT_EQ(subsets.size(), 4U);
    const std::size_t expected[] = {6000, 600, 60, 6};
    std::vector<std::set<std::string>> images;
    for (std::size_t i = 0; i < 4; ++i) {
        std::map<std::pair<std::string, CanonicalView>, std::size_t> per;
        std::map<std::string, std::size_t> per_cat;
        std::set<std::string> ids;
        for (const auto& r : subsets[i].records) {
            ASSERT_TRUE(r.view.has_value());
            per[{r.category, *r.view}]++;
            per_cat[r.category]++;
            ids.insert(r.image);
        }
        for (const auto& [k, n] : per) EXPECT_EQ(n, expected[i] / 6);
        EXPECT_EQ(per.size(), 12U);
        EXPECT_EQ(per_cat["car"], expected[i]);
        EXPECT_EQ(per_cat["mug"], expected[i]);
        images.push_back(ids);
    }
    for (std::size_t i = 1; i < 4; ++i) {
        EXPECT_TRUE(std::includes(images[i - 1].begin(), images[i - 1].end(), images[i].begin(), images[i].end()));
    }
}

TEST(Ablation, FullSizeIsIdentityOverLabeledRecords) {
    const auto m = big_manifest(20, {"car"});
    const auto sub = ablation_subsets(m, {20}, 1);
    std::vector<ManifestRecord> labeled;
    for (const auto& r : m.records) {
        if (r.view) labeled.push_back(r);
    }
    EXPECT_EQ(sub[0].records, labeled);
}

TEST(Ablation, DeterministicAndSeedSensitive) {
    const auto m = big_manifest(50, {"car"});
    EXPECT_EQ(ablation_subsets(m, {10}, 3)[0].records, ablation_subsets(m, {10}, 3)[0].records);
    EXPECT_NE(ablation_subsets(m, {10}, 3)[0].records, ablation_subsets(m, {10}, 4)[0].records);
}

TEST(Ablation, ShortfallReported) {
    const auto m = big_manifest(5, {"car"});
    try {
        ablation_subsets(m, {10, 1}, 0);
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("car/front: have 5, need 10"), std::string::npos) << e.what();
    }
}

TEST(EmbeddingCache, WriteReadBitIdentical) {
    TempDir dir;
    Rng rng(5);
    EmbeddingCache c;
    for (int i = 0; i < 40; ++i) {
        Embedding v(33);
        for (auto& x : v) x = rng.normal() * std::pow(10.0, rng.uniform(-300, 300));
        c.insert("key-" + std::to_string(i), v);
    }
    c.insert("a picture of a car from the front", Embedding(33, -0.0));
    write_cache(c, dir.path() / "e.cache");
    const auto back = read_cache(dir.path() / "e.cache");
    ASSERT_EQ(back.size(), c.size());
    EXPECT_EQ(back.dim(), 33U);
    for (const auto& [k, v] : c.entries()) {
        const Embedding* w = back.find(k);
        ASSERT_NE(w, nullptr);
        ASSERT_EQ(std::memcmp(w->data(), v.data(), v.size() * sizeof(double)), 0) << k;
    }
}

TEST(EmbeddingCache, DimensionRules) {
    EmbeddingCache a, b;
    a.insert("x", Embedding(512, 1.0));
    b.insert("y", Embedding(256, 1.0));
    EXPECT_THROW(a.merge(b), std::invalid_argument);
    EXPECT_THROW(a.insert("z", Embedding(3, 1.0)), std::invalid_argument);
    EXPECT_EQ(a.find("missing"), nullptr);
}

TEST(EmbeddingCache, CorruptFilesRejected) {
    TempDir dir;
    EmbeddingCache c;
    c.insert("k", Embedding(4, 2.0));
    write_cache(c, dir.path() / "e.cache");
    std::string data;
    {
        std::ifstream f(dir.path() / "e.cache", std::ios::binary);
        data.assign(std::istreambuf_iterator<char>(f), {});
    }
    std::ofstream(dir.path() / "t.cache", std::ios::binary) << data.substr(0, data.size() - 3);
    EXPECT_THROW(read_cache(dir.path() / "t.cache"), LoadError);
    std::ofstream(dir.path() / "x.cache", std::ios::binary) << "something else\n\n";
    EXPECT_THROW(read_cache(dir.path() / "x.cache"), LoadError);
}

TEST(ManifestViews, ProviderAndRetrievalCandidates) {
    auto j = three_records(sphere10().checksum());
    const auto m = manifest_from_json(j, sphere10(), "m.json", "/data", {false});
    const auto provider = manifest_provider(m, "car-1");
    EXPECT_EQ(provider(17, 7.5).image_id, "c.png");
    EXPECT_EQ(provider(17, 7.5).image_path, "/data/c.png");
    EXPECT_THROW(provider(18, 5.0), ScorerError);
    EXPECT_THROW(manifest_provider(m, "nope"), std::invalid_argument);
    const auto cands = retrieval_candidates(m);
    ASSERT_EQ(cands.size(), 3U);
    EXPECT_EQ(cands[0].label, CanonicalView::Front);
    EXPECT_EQ(cands[2].split, "test");
}

TEST(ManifestViews, EmbeddingBatchLayout) {
    const auto m = big_manifest(3, {"car"});
    EmbeddingCache cache;
    Rng rng(1);
    for (const auto& r : m.records) {
        Embedding v(8);
        for (auto& x : v) x = rng.normal();
        cache.insert(r.image, v);
    }
    for (auto v : kCanonicalViews) cache.insert(make_query("car", v).text, Embedding(8, 1.0 + static_cast<double>(v)));
    const auto b = embedding_batch(m, cache, "train");
    EXPECT_EQ(b.Zv.rows(), 18);
    EXPECT_EQ(b.Zq.rows(), 18);
    EXPECT_EQ(b.Zr.rows(), 1);
    EXPECT_EQ(b.Zq(1, 0), 1.0 + static_cast<double>(m.records[1].view.value()));
    EmbeddingCache partial;
    partial.insert("car-0/front.png", Embedding(8, 1.0));
    EXPECT_THROW(embedding_batch(m, partial, "train"), LoadError);
}

TEST(ManifestViews, CacheScorerIsCosine) {
    EmbeddingCache cache;
    cache.insert("a picture of a car from the top", {1, 0, 0});
    cache.insert("img", {1, 1, 0});
    EmbeddingCacheScorer s(cache, "x");
    ViewRef v{3U, 5.0, "img", ""};
    EXPECT_NEAR(s.score(make_query("car", CanonicalView::Top), v), std::sqrt(0.5), 1e-15);
    EXPECT_THROW(s.score(make_query("car", CanonicalView::Back), v), ScorerError);
    v.image_id = "other";
    EXPECT_THROW(s.score(make_query("car", CanonicalView::Top), v), ScorerError);
}
