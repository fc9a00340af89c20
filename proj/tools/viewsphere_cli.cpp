// viewsphere_cli: sphere construction, scoring, evaluation, search,
// benchmarking and rendering. Every command writes into an output
// directory together with a run.json describing how to reproduce it.

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "viewsphere/viewsphere.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace viewsphere;

namespace {

constexpr const char* kLockName = ".viewsphere.lock";
constexpr const char* kRunFile = "run.json";

struct CliError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
    for (std::size_t p = s.find('\n'); p != std::string::npos; p = s.find('\n', p)) {
        s.replace(p, 1, "; ");
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == ';')) s.pop_back();
    return s;
}

std::string file_token(std::string s) {
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    return s;
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw LoadError(path.string(), {"cannot open file"});
    try {
        return json::parse(in);
    } catch (const std::exception& e) {
        throw LoadError(path.string(), {std::string("parse error: ") + e.what()});
    }
}

class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / kLockName) {
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
        if (fd_ < 0) throw CliError("cannot create lock file " + path_.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw CliError("output directory " + dir.string() + " is locked by another viewsphere run");
        }
    }
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;
    ~DirLock() {
        if (fd_ >= 0) {
            std::error_code ec;
            fs::remove(path_, ec);
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

private:
    fs::path path_;
    int fd_ = -1;
};

/// Files written by this run, removed again if the run fails.
class Outputs {
public:
    void open_dir(const fs::path& dir) {
        dir_ = dir;
        if (fs::exists(dir)) {
            if (!fs::is_directory(dir)) throw CliError("output path " + dir.string() + " is not a directory");
        } else {
            fs::create_directories(dir);
            created_dir_ = true;
        }
    }

    const fs::path& dir() const { return dir_; }

    void write(const fs::path& path, const std::string& content) {
        written_.push_back(path);
        fs::path tmp = path;
        tmp += ".partial";
        {
            std::ofstream out(tmp, std::ios::binary);
            out << content;
            if (!out) {
                std::error_code ec;
                fs::remove(tmp, ec);
                throw CliError("cannot write " + path.string());
            }
        }
        fs::rename(tmp, path);
    }

    void write_in_dir(const std::string& name, const std::string& content) { write(dir_ / name, content); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& p : written_) out.push_back(p.filename().string());
        std::sort(out.begin(), out.end());
        return out;
    }

    void rollback() noexcept {
        std::error_code ec;
        for (const auto& p : written_) {
            fs::remove(p, ec);
            fs::path tmp = p;
            tmp += ".partial";
            fs::remove(tmp, ec);
        }
        if (created_dir_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    }

private:
    fs::path dir_;
    bool created_dir_ = false;
    std::vector<fs::path> written_;
};

// ---------------------------------------------------------------------------
// Settings

struct Settings {
    std::string config;
    std::string out;
    std::uint64_t seed = 0;
    std::string sphere_file;
    int freq = 10;
    std::string up = "+Y";
    std::string front = "-Z";
    std::string text_template{kDefaultQueryTemplate};

    std::vector<std::string> scorers;
    std::string manifest;
    std::string object;
    bool skip_file_check = false;
    double amplitude = OracleFamily{}.amplitude;
    std::size_t spurious_count = OracleFamily{}.spurious_count;
    double spurious_height = OracleFamily{}.spurious_height;
    double spurious_drop = OracleFamily{}.spurious_drop;
    std::size_t remote_batch = RemoteOptions{}.max_batch;
    std::size_t remote_in_flight = RemoteOptions{}.max_in_flight;

    std::vector<std::string> categories{"object"};
    std::vector<std::string> views;
    std::string view = "front";
    double radius = 5.0;
    double sigma = kDefaultGoldSigma;
    double epsilon = kDefaultKlEpsilon;
    std::vector<std::string> maps;

    std::vector<std::string> algorithms{"greedy", "bayes"};
    std::string algorithm = "greedy";
    std::size_t budget = 300;
    bool exhaust = false;
    std::size_t runs = 10;
    std::size_t c_max = 300;
    unsigned threads = 0;
    bool traces = false;
    std::size_t k = GreedyConfig{}.k;
    std::size_t cutoff = GreedyConfig{}.cutoff;
    double cutoff_fraction = 0.0;
    int neighborhood = GreedyConfig{}.n;
    std::size_t iterations = GreedyConfig{}.iterations;
    std::vector<double> radii;
    std::size_t initial = BayesConfig{}.initial_samples;
    double xi = BayesConfig{}.xi;
    std::size_t candidates = BayesConfig{}.candidates;
    std::size_t local_candidates = BayesConfig{}.local_candidates;
    double local_sigma = BayesConfig{}.local_sigma;
    bool ml2 = false;
    std::vector<double> x_bounds{0.0, 0.0};
    std::vector<double> y_bounds{0.0, 0.0};

    std::string scoremap;
    std::string gold_view;
    std::string trace;
    bool maxima = false;
    bool no_rings = false;
    bool no_path = false;
    double width = HexMapStyle{}.width;
    double height = HexMapStyle{}.height;
    double margin = HexMapStyle{}.margin;
    double glyph_radius = 0.0;
    std::string low = color_hex(HexMapStyle{}.low);
    std::string high = color_hex(HexMapStyle{}.high);
    std::string background = color_hex(HexMapStyle{}.background);
    std::string title;
    std::string name = "hexmap.svg";

    std::string cache;
    std::string split = "train";
    double tau = LossConfig{}.tau;
    double G = LossConfig{}.G;
    double beta_hard = LossConfig{}.beta_hard;
    double alpha = LossConfig{}.alpha;
    double beta = LossConfig{}.beta;
    double gamma = LossConfig{}.gamma;

    std::vector<std::size_t> sizes{1000, 100, 10, 1};
};

struct Run {
    Settings& s;
    CLI::App* app = nullptr;
    std::string command;
    Outputs outputs;
    std::optional<PolySphere> sphere;
    json scorer_info = json::array();
    bool seeded = false;

    bool has(const std::string& name) const {
        const auto* opt = app->get_option_no_throw("--" + name);
        return opt != nullptr && opt->count() > 0;
    }

    void require_seed() {
        if (!has("seed")) throw CliError(command + " is stochastic and needs an explicit --seed");
        seeded = true;
    }

    void require(const std::string& name) {
        if (!has(name)) throw CliError(command + " needs --" + name);
    }

    ViewConvention convention() const { return ViewConvention::from_names(s.up, s.front); }

    const PolySphere& load_sphere() {
        if (!sphere) {
            sphere = s.sphere_file.empty() ? PolySphere::build(s.freq) : PolySphere::load(s.sphere_file);
        }
        return *sphere;
    }
};

void add_common(CLI::App* cmd, Settings& s, bool seed) {
    cmd->add_option("--config", s.config, "JSON configuration file; flags override it");
    cmd->add_option("-o,--out", s.out, "output directory")->capture_default_str();
    if (seed) cmd->add_option("--seed", s.seed, "master seed");
}

void add_sphere(CLI::App* cmd, Settings& s) {
    cmd->add_option("--sphere", s.sphere_file, "sphere file from 'sphere build'");
    cmd->add_option("--freq", s.freq, "frequency of the in-memory sphere when --sphere is absent");
    cmd->add_option("--up", s.up, "up axis of the view convention, e.g. +Y");
    cmd->add_option("--front", s.front, "front axis of the view convention, e.g. -Z (write --front=-Z)");
}

void add_scorer(CLI::App* cmd, Settings& s, bool many) {
    auto* o = cmd->add_option("--scorer", s.scorers, "oracle:<profile>, cache:<path> or remote:<url>");
    if (!many) o->expected(1);
    cmd->add_option("--manifest", s.manifest, "dataset manifest");
    cmd->add_option("--object", s.object, "object whose images image-based scorers look at");
    cmd->add_flag("--skip-file-check", s.skip_file_check, "do not require manifest images to exist");
    cmd->add_option("--template", s.text_template, "query text template");
    cmd->add_option("--amplitude", s.amplitude, "ragged oracle noise amplitude");
    cmd->add_option("--spurious-count", s.spurious_count, "ragged oracle spurious optima");
    cmd->add_option("--spurious-height", s.spurious_height, "ragged oracle spurious optimum height");
    cmd->add_option("--spurious-drop", s.spurious_drop, "ragged oracle score drop per ring");
    cmd->add_option("--remote-batch", s.remote_batch, "images per embedding request");
    cmd->add_option("--remote-in-flight", s.remote_in_flight, "concurrent embedding requests");
}

void add_queries(CLI::App* cmd, Settings& s) {
    cmd->add_option("--categories", s.categories, "object categories");
    cmd->add_option("--views", s.views, "canonical views (default: all six)");
    cmd->add_option("--template", s.text_template, "query text template");
}

std::vector<Query> queries(const Settings& s) {
    std::vector<CanonicalView> views;
    if (s.views.empty()) {
        views.assign(kCanonicalViews.begin(), kCanonicalViews.end());
    } else {
        for (const auto& v : s.views) views.push_back(parse_view(v));
    }
    std::vector<Query> out;
    for (const auto& c : s.categories) {
        for (auto v : views) out.push_back(make_query(c, v, s.text_template));
    }
    return out;
}

Manifest load_manifest_for(Run& run) {
    if (run.s.manifest.empty()) throw CliError(run.command + " needs --manifest");
    return load_manifest(run.s.manifest, run.load_sphere(), ManifestOptions{!run.s.skip_file_check});
}

bool embcache_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::string head(19, '\0');
    in.read(head.data(), static_cast<std::streamsize>(head.size()));
    return in && head == "viewsphere.embcache";
}

std::vector<ScoreMap> load_maps(const std::vector<std::string>& paths) {
    std::vector<ScoreMap> out;
    for (const auto& p : paths) {
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(p)) {
                if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files) {
                const json j = read_json(f);
                if (j.is_object() && j.value("format", "") == "viewsphere.scoremap") {
                    out.push_back(score_map_from_json(j, f.string()));
                }
            }
        } else {
            out.push_back(load_score_map(p));
        }
    }
    if (out.empty()) throw CliError("no score maps found");
    return out;
}

std::unique_ptr<Scorer> make_scorer(Run& run, const std::string& spec) {
    const Settings& s = run.s;
    const auto colon = spec.find(':');
    const std::string kind = spec.substr(0, colon);
    const std::string rest = colon == std::string::npos ? "" : spec.substr(colon + 1);
    const PolySphere& sphere = run.load_sphere();
    json info{{"spec", spec}};
    std::unique_ptr<Scorer> out;
    if (kind == "oracle") {
        OracleFamily f;
        f.kind = parse_oracle_kind(rest);
        if (f.kind == OracleKind::Ragged) {
            run.require_seed();
            f.seed = s.seed;
        }
        f.amplitude = s.amplitude;
        f.spurious_count = s.spurious_count;
        f.spurious_height = s.spurious_height;
        f.spurious_drop = s.spurious_drop;
        out = std::make_unique<ViewOracleScorer>(sphere, run.convention(), f);
    } else if (kind == "cache") {
        if (rest.empty()) throw CliError("cache scorer needs a path: cache:<path>");
        if (!fs::exists(rest)) throw CliError("cache path " + rest + " does not exist");
        if (!fs::is_directory(rest) && embcache_file(rest)) {
            out = std::make_unique<EmbeddingCacheScorer>(read_cache(rest), rest);
        } else {
            out = std::make_unique<CachedScorer>(load_maps({rest}), rest, &sphere);
        }
    } else if (kind == "remote") {
        std::string url = rest;
        if (url.empty()) {
            const char* env = std::getenv("VIEWSPHERE_SCORER_URL");
            if (env == nullptr || *env == '\0') {
                throw CliError("remote scorer needs a URL: remote:<url> or VIEWSPHERE_SCORER_URL");
            }
            url = env;
        }
        auto remote = std::make_unique<RemoteScorer>(url, RemoteOptions{s.remote_batch, s.remote_in_flight, 60});
        const auto health = remote->health();
        info["url"] = url;
        info["model"] = health.model;
        info["dim"] = health.dim;
        out = std::move(remote);
    } else {
        throw CliError("unknown scorer '" + spec + "' (expected oracle:<profile>, cache:<path> or remote:<url>)");
    }
    info["id"] = out->id();
    run.scorer_info.push_back(std::move(info));
    return out;
}

std::unique_ptr<Scorer> single_scorer(Run& run) {
    if (run.s.scorers.size() != 1) throw CliError(run.command + " needs exactly one --scorer");
    return make_scorer(run, run.s.scorers.front());
}

ViewProvider provider_for(Run& run, const Scorer& scorer) {
    if (scorer.cell_based()) return {};
    if (run.s.object.empty()) {
        throw CliError("scorer " + scorer.id() + " looks at images and needs --manifest and --object");
    }
    return manifest_provider(load_manifest_for(run), run.s.object);
}

GreedyConfig greedy_config(const Settings& s) {
    GreedyConfig g;
    g.k = s.k;
    g.cutoff = s.cutoff;
    if (s.cutoff_fraction > 0.0) g.cutoff_fraction = s.cutoff_fraction;
    g.n = s.neighborhood;
    g.iterations = s.iterations;
    g.radius = s.radius;
    return g;
}

BayesConfig bayes_config(const Settings& s) {
    BayesConfig b;
    b.radii = s.radii.empty() ? std::vector<double>{s.radius} : s.radii;
    b.bounds.r_min = *std::min_element(b.radii.begin(), b.radii.end());
    b.bounds.r_max = *std::max_element(b.radii.begin(), b.radii.end());
    b.initial_samples = s.initial;
    b.xi = s.xi;
    b.candidates = s.candidates;
    b.local_candidates = s.local_candidates;
    b.local_sigma = s.local_sigma;
    b.optimize_hyperparameters = s.ml2;
    b.bounds.x_min = s.x_bounds.at(0);
    b.bounds.x_max = s.x_bounds.at(1);
    b.bounds.y_min = s.y_bounds.at(0);
    b.bounds.y_max = s.y_bounds.at(1);
    return b;
}

void add_search_options(CLI::App* cmd, Settings& s) {
    cmd->add_option("--radius", s.radius, "camera radius of the greedy search and default Bayesian radius");
    cmd->add_option("--k", s.k, "greedy random starting cells");
    cmd->add_option("--cutoff", s.cutoff, "greedy frontier cells kept per iteration");
    cmd->add_option("--cutoff-fraction", s.cutoff_fraction, "greedy frontier fraction kept, overrides --cutoff");
    cmd->add_option("--neighborhood", s.neighborhood, "greedy neighborhood range in rings");
    cmd->add_option("--iterations", s.iterations, "greedy iteration cap");
    cmd->add_option("--radii", s.radii, "radii the Bayesian search may choose from");
    cmd->add_option("--initial", s.initial, "Bayesian initial random samples");
    cmd->add_option("--xi", s.xi, "expected improvement exploration margin");
    cmd->add_option("--candidates", s.candidates, "Bayesian random acquisition candidates");
    cmd->add_option("--local-candidates", s.local_candidates, "Bayesian local acquisition candidates");
    cmd->add_option("--local-sigma", s.local_sigma, "Bayesian local perturbation scale (radians)");
    cmd->add_flag("--ml2", s.ml2, "fit kernel length scales by marginal likelihood");
    cmd->add_option("--x-bounds", s.x_bounds, "Bayesian look-at x offset range: lo hi")->expected(2);
    cmd->add_option("--y-bounds", s.y_bounds, "Bayesian look-at y offset range: lo hi")->expected(2);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Commands

void cmd_sphere_build(Run& run) {
    run.require("out");
    const auto sphere = PolySphere::build(run.s.freq);
    run.sphere = sphere;
    run.outputs.write(run.s.out, sphere.to_json().dump(1) + "\n");
    std::cout << "sphere: frequency " << sphere.frequency() << ", " << sphere.size() << " cells, checksum "
              << sphere.checksum() << "\n";
}

void cmd_gold(Run& run) {
    const PolySphere& sphere = run.load_sphere();
    const auto conv = run.convention();
    for (const auto& q : queries(run.s)) {
        const auto g = gold_distribution(sphere, canonical_cell(sphere, conv, q.view), run.s.sigma);
        ScoreMap m{q, "gold", run.s.radius, sphere.checksum(), {}, g.weights};
        run.outputs.write_in_dir("gold_" + file_token(q.category) + "_" + std::string(to_string(q.view)) + ".json",
                                 dump(to_json(m)));
        std::cout << q.text << ": gold cell " << g.gold << ", support " << g.support_size() << "\n";
    }
}

void cmd_scoremap(Run& run) {
    const PolySphere& sphere = run.load_sphere();
    auto scorer = single_scorer(run);
    const auto provider = provider_for(run, *scorer);
    for (const auto& q : queries(run.s)) {
        ScoreMap m = compute_score_map(*scorer, sphere, q, run.s.radius, provider);
        m.object = run.s.object;
        run.outputs.write_in_dir("scoremap_" + file_token(q.category) + "_" + std::string(to_string(q.view)) + ".json",
                                 dump(to_json(m)));
        const auto best = std::max_element(m.scores.begin(), m.scores.end()) - m.scores.begin();
        std::cout << q.text << ": best cell " << best << ", score " << fixed(m.scores[best], 4) << "\n";
    }
}

void cmd_eval_kl(Run& run) {
    run.require("maps");
    const PolySphere& sphere = run.load_sphere();
    const auto maps = load_maps(run.s.maps);
    const auto entries = kl_entries(sphere, run.convention(), maps, run.s.sigma, run.s.epsilon);
    std::set<std::string> models, categories;
    std::set<CanonicalView> views;
    for (const auto& e : entries) {
        models.insert(e.model);
        categories.insert(e.category);
        views.insert(e.view);
    }
    std::vector<KlKey> requested;
    for (const auto& m : models) {
        for (const auto& c : categories) {
            for (auto v : views) requested.emplace_back(m, c, v);
        }
    }
    const auto report = evaluate_kl(entries, requested);
    const std::string text = report.to_text();
    run.outputs.write_in_dir("kl_report.json", dump(report.to_json()));
    run.outputs.write_in_dir("kl_report.txt", text);
    std::cout << text;
}

void cmd_eval_retrieval(Run& run) {
    const Manifest m = load_manifest_for(run);
    auto scorer = single_scorer(run);
    const auto report = evaluate_retrieval(*scorer, retrieval_candidates(m), run.s.text_template);
    const std::string text = report.to_text();
    run.outputs.write_in_dir("retrieval_report.json", dump(report.to_json()));
    run.outputs.write_in_dir("retrieval_report.txt", text);
    std::cout << text;
    for (const auto& gap : report.missing) std::cout << "missing: " << gap << "\n";
}

void cmd_search_run(Run& run) {
    run.require_seed();
    const Settings& s = run.s;
    if (s.algorithm != "greedy" && s.algorithm != "bayes") {
        throw CliError("unknown search algorithm '" + s.algorithm + "' (expected greedy or bayes)");
    }
    if (s.categories.size() != 1) throw CliError("search run takes a single --categories value");
    const PolySphere& sphere = run.load_sphere();
    auto scorer = single_scorer(run);
    const Query q = make_query(s.categories.front(), parse_view(s.view), s.text_template);
    const CellId gold = canonical_cell(sphere, run.convention(), q.view);
    const auto dist = sphere.distances_from(gold);
    SearchContext ctx{sphere, *scorer, q, s.budget, s.seed, provider_for(run, *scorer), {}};
    if (!s.exhaust) ctx.stop_when = [&dist](CellId c) { return dist[c] <= 2; };
    const SearchTrace t = s.algorithm == "greedy" ? greedy_search(ctx, greedy_config(s)) : bayesian_search(ctx, bayes_config(s));
    json j = t.to_json();
    j["query"] = to_json(q);
    j["gold"] = gold;
    j["solved"] = !t.entries.empty() && is_solved(t, sphere, gold);
    run.outputs.write_in_dir("trace.json", dump(j));
    std::cout << t.algorithm << " / " << scorer->id() << ": " << to_string(t.reason) << " after " << t.calls()
              << " calls";
    if (!t.entries.empty()) {
        std::cout << ", best cell " << t.best().cell << " (" << fixed(t.best().score, 4) << "), gold cell " << gold;
    }
    std::cout << "\n";
}

void cmd_bench(Run& run) {
    run.require_seed();
    const Settings& s = run.s;
    if (s.scorers.empty()) throw CliError("bench needs at least one --scorer");
    const PolySphere& sphere = run.load_sphere();
    std::vector<std::unique_ptr<Scorer>> owned;
    std::vector<BenchmarkScorer> scorers;
    std::set<std::string> labels;
    BenchmarkConfig cfg;
    for (const auto& spec : s.scorers) {
        owned.push_back(make_scorer(run, spec));
        const std::string label = owned.back()->id();
        if (!labels.insert(label).second) throw CliError("scorer " + label + " given twice");
        scorers.push_back({label, owned.back().get()});
        if (!owned.back()->cell_based() && !cfg.provider) cfg.provider = provider_for(run, *owned.back());
    }
    cfg.algorithms = s.algorithms;
    cfg.runs = s.runs;
    cfg.c_max = s.c_max;
    cfg.master_seed = s.seed;
    cfg.greedy = greedy_config(s);
    cfg.bayes = bayes_config(s);
    cfg.convention = run.convention();
    cfg.threads = s.threads;
    cfg.keep_traces = s.traces;
    const auto table = run_benchmark(sphere, scorers, queries(s), cfg);
    const std::string text = table.to_text();
    run.outputs.write_in_dir("benchmark.json", dump(table.to_json(s.traces)));
    run.outputs.write_in_dir("benchmark.txt", text);
    std::cout << text;
    for (const auto& c : table.cells) {
        for (const auto& r : c.runs) {
            if (r.error) {
                std::cerr << "warning: " << c.algorithm << " / " << c.scorer << " / " << to_string(c.view) << " run "
                          << r.index << " failed: " << one_line(*r.error) << "\n";
            }
        }
    }
}

void cmd_render(Run& run) {
    const Settings& s = run.s;
    if (s.scoremap.empty() == s.gold_view.empty()) throw CliError("render needs exactly one of --scoremap or --gold-view");
    const PolySphere& sphere = run.load_sphere();
    HexMapStyle style;
    style.width = s.width;
    style.height = s.height;
    style.margin = s.margin;
    style.glyph_radius = s.glyph_radius;
    style.low = parse_color(s.low);
    style.high = parse_color(s.high);
    style.background = parse_color(s.background);
    style.gold_rings = !s.no_rings;
    style.trace_path = !s.no_path;
    style.local_maxima = s.maxima;
    style.title = s.title;
    std::optional<SearchTrace> trace;
    if (!s.trace.empty()) trace = trace_from_json(read_json(s.trace));
    const SearchTrace* tp = trace ? &*trace : nullptr;
    std::string svg;
    if (!s.scoremap.empty()) {
        const ScoreMap m = load_score_map(s.scoremap);
        svg = render_hexmap(sphere, m, style, canonical_cell(sphere, run.convention(), m.query.view), tp);
    } else {
        const auto g = gold_distribution(sphere, canonical_cell(sphere, run.convention(), parse_view(s.gold_view)), s.sigma);
        svg = render_hexmap(sphere, g, style, tp);
    }
    if (s.name.empty() || fs::path(s.name).has_parent_path()) throw CliError("--name must be a plain file name");
    run.outputs.write_in_dir(s.name, svg);
    std::cout << "wrote " << (run.outputs.dir() / s.name).string() << "\n";
}

void cmd_loss_eval(Run& run) {
    run.require("cache");
    const Settings& s = run.s;
    const Manifest m = load_manifest_for(run);
    const EmbeddingBatch batch = embedding_batch(m, read_cache(s.cache), s.split, s.text_template);
    if (batch.Zv.rows() == 0) throw CliError("manifest has no view-labeled records in split '" + s.split + "'");
    const LossConfig cfg{s.tau, s.G, s.beta_hard, s.alpha, s.beta, s.gamma};
    const LossBreakdown b = total_loss(batch, cfg);
    const json j{{"format", "viewsphere.losses"},
                 {"version", 1},
                 {"split", s.split},
                 {"pairs", batch.Zv.rows()},
                 {"random_views", batch.Zr.rows()},
                 {"dim", batch.Zv.cols()},
                 {"contrastive", b.contrastive},
                 {"random", b.random},
                 {"hard", b.hard},
                 {"total", b.total}};
    run.outputs.write_in_dir("losses.json", dump(j));
    TextTable t({"component", "weight", "value"});
    t.add_row({"contrastive", fixed(s.alpha, 3), fixed(b.contrastive, 6)});
    t.add_row({"random", fixed(s.beta, 3), fixed(b.random, 6)});
    t.add_row({"hard", fixed(s.gamma, 3), fixed(b.hard, 6)});
    t.add_rule();
    t.add_row({"total", "", fixed(b.total, 6)});
    std::cout << t.render();
}

void cmd_ablate(Run& run) {
    run.require_seed();
    const Manifest m = load_manifest_for(run);
    const auto subsets = ablation_subsets(m, run.s.sizes, run.s.seed);
    const fs::path out_abs = fs::absolute(run.outputs.dir()).lexically_normal();
    for (std::size_t i = 0; i < subsets.size(); ++i) {
        Manifest sub = subsets[i];
        for (auto& r : sub.records) {
            const fs::path img = fs::absolute(m.image_path(r)).lexically_normal();
            r.image = img.lexically_relative(out_abs).generic_string();
        }
        run.outputs.write_in_dir("ablation_" + std::to_string(run.s.sizes[i]) + ".json", dump(sub.to_json()));
        std::cout << "per view " << run.s.sizes[i] << ": " << sub.records.size() << " records\n";
    }
}

// ---------------------------------------------------------------------------
// Configuration files

/// Values of a JSON config entry as option results.
std::vector<std::string> config_results(const json& v) {
    std::vector<std::string> out;
    auto one = [](const json& x) { return x.is_string() ? x.get<std::string>() : x.dump(); };
    if (v.is_array()) {
        for (const auto& x : v) out.push_back(one(x));
    } else {
        out.push_back(one(v));
    }
    return out;
}

void apply_config(CLI::App* leaf, const std::vector<std::string>& path, const std::string& file) {
    json j = read_json(file);
    if (j.is_object() && j.value("format", "") == "viewsphere.run") j = j.at("config");
    if (!j.is_object()) throw LoadError(file, {"configuration must be a JSON object"});

    auto apply = [&](const std::string& key, const json& value, bool strict) {
        if (key == "config" || key == "out") return;
        CLI::Option* opt = leaf->get_option_no_throw("--" + key);
        if (opt == nullptr) {
            if (strict) throw LoadError(file, {"unknown setting '" + key + "' for this command"});
            return;
        }
        if (opt->count() > 0 || value.is_null()) return;
        for (const auto& r : config_results(value)) opt->add_result(r);
        opt->run_callback();
    };
    for (const auto& [key, value] : j.items()) {
        if (!value.is_object()) apply(key, value, false);
    }
    const json* section = &j;
    for (const auto& p : path) {
        section = section->contains(p) && section->at(p).is_object() ? &section->at(p) : nullptr;
        if (section == nullptr) break;
    }
    std::string joined;
    for (const auto& p : path) joined += (joined.empty() ? "" : " ") + p;
    if (section == nullptr && path.size() > 1 && j.contains(joined) && j.at(joined).is_object()) section = &j.at(joined);
    if (section != nullptr && section != &j) {
        for (const auto& [key, value] : section->items()) {
            if (!value.is_object()) apply(key, value, true);
        }
    }
}

/// Effective settings of the leaf command, in the same shape a config file
/// accepts.
json effective_config(CLI::App* leaf) {
    json out = json::object();
    for (const CLI::Option* opt : leaf->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config" || name == "out") continue;
        if (opt->get_type_size() == 0) {
            out[name] = opt->count() > 0 && opt->as<bool>();
            continue;
        }
        std::vector<std::string> values = opt->results();
        if (values.empty()) {
            const std::string d = opt->get_default_str();
            if (d.empty() || d == "[]" || d == "{}") continue;
            if (d.size() > 1 && d.front() == '[' && d.back() == ']') {
                std::stringstream items(d.substr(1, d.size() - 2));
                for (std::string item; std::getline(items, item, ',');) values.push_back(item);
            } else {
                values.push_back(d);
            }
        }
        const bool many = opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1;
        if (many) {
            out[name] = values;
        } else {
            out[name] = values.front();
        }
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    Settings s;
    CLI::App app{"viewsphere: text-to-viewpoint retrieval on a Goldberg polysphere"};
    app.set_version_flag("--version", std::string(VIEWSPHERE_VERSION));
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    std::map<CLI::App*, std::pair<std::string, std::function<void(Run&)>>> handlers;
    auto leaf = [&](CLI::App* parent, const std::string& name, const std::string& desc, bool seed,
                    std::function<void(Run&)> fn) {
        CLI::App* cmd = parent->add_subcommand(name, desc);
        add_common(cmd, s, seed);
        std::string label = parent == &app ? name : parent->get_name() + " " + name;
        handlers[cmd] = {label, std::move(fn)};
        return cmd;
    };

    CLI::App* sphere_group = app.add_subcommand("sphere", "polysphere construction");
    sphere_group->require_subcommand(1);
    CLI::App* eval_group = app.add_subcommand("eval", "model evaluation");
    eval_group->require_subcommand(1);
    CLI::App* search_group = app.add_subcommand("search", "viewpoint search");
    search_group->require_subcommand(1);
    CLI::App* loss_group = app.add_subcommand("loss", "fine-tuning losses");
    loss_group->require_subcommand(1);

    {
        auto* c = leaf(sphere_group, "build", "build a sphere and write it to -o FILE", false, cmd_sphere_build);
        c->add_option("--freq", s.freq, "Goldberg frequency; 10 gives 1002 cells");
    }
    {
        auto* c = leaf(&app, "gold", "write gold distributions as score maps", false, cmd_gold);
        add_sphere(c, s);
        add_queries(c, s);
        c->add_option("--sigma", s.sigma, "gold distribution width in rings");
        c->add_option("--radius", s.radius, "radius recorded in the maps");
    }
    {
        auto* c = leaf(&app, "scoremap", "score every cell for each query", true, cmd_scoremap);
        add_sphere(c, s);
        add_scorer(c, s, false);
        c->add_option("--categories", s.categories, "object categories");
        c->add_option("--views", s.views, "canonical views (default: all six)");
        c->add_option("--radius", s.radius, "camera radius");
    }
    {
        auto* c = leaf(eval_group, "kl", "KL divergence of score maps against gold", false, cmd_eval_kl);
        add_sphere(c, s);
        c->add_option("--maps", s.maps, "score map files or directories");
        c->add_option("--sigma", s.sigma, "gold distribution width in rings");
        c->add_option("--epsilon", s.epsilon, "floor added after shifting scores to zero");
    }
    {
        auto* c = leaf(eval_group, "retrieval", "precision and recall at k over a manifest", true, cmd_eval_retrieval);
        add_sphere(c, s);
        add_scorer(c, s, false);
    }
    {
        auto* c = leaf(search_group, "run", "run one seeded search", true, cmd_search_run);
        add_sphere(c, s);
        add_scorer(c, s, false);
        c->add_option("--algo", s.algorithm, "greedy or bayes");
        c->add_option("--categories", s.categories, "object category");
        c->add_option("--view", s.view, "canonical view of the query");
        c->add_option("--budget", s.budget, "scorer call budget");
        c->add_flag("--exhaust", s.exhaust, "keep searching after reaching the gold neighborhood");
        add_search_options(c, s);
    }
    {
        auto* c = leaf(&app, "bench", "seeded search benchmark", true, cmd_bench);
        add_sphere(c, s);
        add_scorer(c, s, true);
        c->add_option("--categories", s.categories, "object categories");
        c->add_option("--views", s.views, "canonical views (default: all six)");
        c->add_option("--algo", s.algorithms, "greedy and/or bayes");
        c->add_option("--runs", s.runs, "seeded runs per cell");
        c->add_option("--cmax", s.c_max, "call cap; unsolved runs are charged this");
        c->add_option("--threads", s.threads, "worker threads, 0 for all cores");
        c->add_flag("--traces", s.traces, "include per-run traces in benchmark.json");
        add_search_options(c, s);
    }
    {
        auto* c = leaf(&app, "render", "hexagon heatmap of a score map or gold distribution", false, cmd_render);
        add_sphere(c, s);
        c->add_option("--scoremap", s.scoremap, "score map file");
        c->add_option("--gold-view", s.gold_view, "render the gold distribution of this view instead");
        c->add_option("--sigma", s.sigma, "gold distribution width in rings");
        c->add_option("--trace", s.trace, "search trace to overlay");
        c->add_flag("--maxima", s.maxima, "mark local maxima");
        c->add_flag("--no-rings", s.no_rings, "omit gold ring outlines");
        c->add_flag("--no-path", s.no_path, "omit the trace path");
        c->add_option("--width", s.width, "plot width");
        c->add_option("--height", s.height, "plot height");
        c->add_option("--margin", s.margin, "plot margin");
        c->add_option("--glyph-radius", s.glyph_radius, "hexagon radius, 0 for automatic");
        c->add_option("--low", s.low, "color of the lowest value");
        c->add_option("--high", s.high, "color of the highest value");
        c->add_option("--background", s.background, "color of cells outside the gold support");
        c->add_option("--title", s.title, "plot title");
        c->add_option("--name", s.name, "output file name");
    }
    {
        auto* c = leaf(loss_group, "eval", "evaluate the fine-tuning losses on cached embeddings", false, cmd_loss_eval);
        add_sphere(c, s);
        c->add_option("--cache", s.cache, "embedding cache file");
        c->add_option("--manifest", s.manifest, "dataset manifest");
        c->add_flag("--skip-file-check", s.skip_file_check, "do not require manifest images to exist");
        c->add_option("--template", s.text_template, "query text template");
        c->add_option("--split", s.split, "manifest split");
        c->add_option("--tau", s.tau, "temperature");
        c->add_option("--G", s.G, "hard negative pool weight");
        c->add_option("--beta-hard", s.beta_hard, "hard negative concentration");
        c->add_option("--alpha", s.alpha, "contrastive weight");
        c->add_option("--beta", s.beta, "random-view weight");
        c->add_option("--gamma", s.gamma, "hard negative weight");
    }
    {
        auto* c = leaf(&app, "ablate", "nested stratified training subsets", true, cmd_ablate);
        add_sphere(c, s);
        c->add_option("--manifest", s.manifest, "dataset manifest");
        c->add_flag("--skip-file-check", s.skip_file_check, "do not require manifest images to exist");
        c->add_option("--sizes", s.sizes, "records per (category, view), any order");
    }

    Run run{s};
    std::optional<DirLock> lock;
    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::Success& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            throw CliError(e.what());
        }

        CLI::App* chosen = nullptr;
        std::vector<std::string> path;
        for (CLI::App* a = &app; a != nullptr;) {
            const auto subs = a->get_subcommands();
            a = subs.empty() ? nullptr : subs.front();
            if (a != nullptr) {
                chosen = a;
                path.push_back(a->get_name());
            }
        }
        const auto h = handlers.find(chosen);
        if (h == handlers.end()) throw CliError("incomplete command");
        run.app = chosen;
        run.command = h->second.first;
        if (!s.config.empty()) apply_config(chosen, path, s.config);

        const bool single_file = run.command == "sphere build";
        fs::path dir = single_file ? fs::path(s.out).parent_path() : fs::path(s.out.empty() ? "." : s.out);
        if (dir.empty()) dir = ".";
        if (single_file && s.out.empty()) throw CliError("sphere build needs -o FILE");
        run.outputs.open_dir(dir);
        lock.emplace(dir);

        h->second.second(run);

        json meta{{"format", "viewsphere.run"},
                  {"version", 1},
                  {"command", run.command},
                  {"viewsphere_version", VIEWSPHERE_VERSION},
                  {"config", effective_config(chosen)},
                  {"seed", run.has("seed") ? json(s.seed) : json(nullptr)},
                  {"outputs", run.outputs.names()}};
        if (run.sphere) {
            meta["sphere"] = {{"checksum", run.sphere->checksum()},
                              {"frequency", run.sphere->frequency()},
                              {"cells", run.sphere->size()}};
        }
        if (!run.scorer_info.empty()) meta["scorers"] = run.scorer_info;
        const fs::path meta_path = single_file ? fs::path(s.out + ".run.json") : dir / kRunFile;
        run.outputs.write(meta_path, dump(meta));
        lock.reset();
        return 0;
    } catch (const std::exception& e) {
        lock.reset();
        run.outputs.rollback();
        std::cerr << "viewsphere_cli: error: " << one_line(e.what()) << "\n";
        return 1;
    }
}
