#pragma once

// Seeded search benchmark: n runs per (algorithm, scorer, query), calls to
// solve with unsolved runs counted at the call cap.

#include <algorithm>
#include <atomic>
#include <map>
#include <mutex>
#include <set>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "viewsphere/camera.hpp"
#include "viewsphere/polysphere.hpp"
#include "viewsphere/random.hpp"
#include "viewsphere/scorer.hpp"
#include "viewsphere/search.hpp"
#include "viewsphere/table.hpp"

namespace viewsphere {

struct BenchmarkScorer {
    std::string label;
    Scorer* scorer = nullptr;
};

struct BenchmarkConfig {
    std::vector<std::string> algorithms{"greedy", "bayes"};
    std::size_t runs = 10;
    std::size_t c_max = 300;
    std::uint64_t master_seed = 0;
    GreedyConfig greedy;
    BayesConfig bayes;
    ViewConvention convention;
    ViewProvider provider;
    unsigned threads = 0;  ///< 0: hardware concurrency
    bool keep_traces = true;
};

struct BenchmarkRun {
    std::size_t index = 0;
    std::uint64_t seed = 0;
    std::size_t calls = 0;  ///< scorer calls actually made
    bool solved = false;
    StopReason reason = StopReason::Stalled;
    std::optional<std::string> error;
    std::optional<SearchTrace> trace;

    /// Calls charged to the run: calls when solved, else the cap.
    std::size_t charged(std::size_t c_max) const { return solved ? calls : c_max; }
};

struct BenchmarkCell {
    std::string algorithm;
    std::string scorer;
    std::string category;
    CanonicalView view = CanonicalView::Front;
    CellId gold = 0;
    std::vector<BenchmarkRun> runs;
    double mean_calls = 0.0;
    double solve_rate = 0.0;
    double median_calls = 0.0;
};

struct BenchmarkTable {
    std::size_t c_max = 300;
    std::size_t runs = 10;
    std::uint64_t master_seed = 0;
    std::vector<BenchmarkCell> cells;

    const BenchmarkCell* find(const std::string& algo, const std::string& scorer, const std::string& category,
                              CanonicalView view) const {
        for (const auto& c : cells) {
            if (c.algorithm == algo && c.scorer == scorer && c.category == category && c.view == view) return &c;
        }
        return nullptr;
    }

    /// Mean of charged calls over every run of (algorithm, scorer).
    double overall_mean(const std::string& algo, const std::string& scorer) const {
        double total = 0.0;
        std::size_t n = 0;
        for (const auto& c : cells) {
            if (c.algorithm == algo && c.scorer == scorer) {
                for (const auto& r : c.runs) {
                    total += static_cast<double>(r.charged(c_max));
                    ++n;
                }
            }
        }
        return n ? total / static_cast<double>(n) : 0.0;
    }

    double overall_solve_rate(const std::string& algo, const std::string& scorer) const {
        std::size_t solved = 0, n = 0;
        for (const auto& c : cells) {
            if (c.algorithm == algo && c.scorer == scorer) {
                for (const auto& r : c.runs) {
                    solved += r.solved ? 1 : 0;
                    ++n;
                }
            }
        }
        return n ? static_cast<double>(solved) / static_cast<double>(n) : 0.0;
    }

    nlohmann::json to_json(bool with_traces = false) const {
        nlohmann::json out{{"format", "viewsphere.benchmark"}, {"version", 1}, {"c_max", c_max},
                           {"runs", runs}, {"master_seed", master_seed}};
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& c : cells) {
            nlohmann::json runs_j = nlohmann::json::array();
            for (const auto& r : c.runs) {
                nlohmann::json rj{{"run", r.index}, {"seed", r.seed}, {"calls", r.calls},
                                  {"solved", r.solved}, {"reason", to_string(r.reason)}};
                if (r.error) rj["error"] = *r.error;
                if (with_traces && r.trace) rj["trace"] = r.trace->to_json()["trace"];
                runs_j.push_back(std::move(rj));
            }
            arr.push_back({{"algorithm", c.algorithm},
                           {"scorer", c.scorer},
                           {"category", c.category},
                           {"view", to_string(c.view)},
                           {"gold", c.gold},
                           {"mean_calls", c.mean_calls},
                           {"median_calls", c.median_calls},
                           {"solve_rate", c.solve_rate},
                           {"per_run", std::move(runs_j)}});
        }
        out["cells"] = std::move(arr);
        return out;
    }

    /// Rows are algorithm / scorer (/ category when several), columns the
    /// canonical views, entries mean calls to solve.
    std::string to_text() const {
        std::vector<CanonicalView> views;
        std::vector<std::string> rows;
        std::set<std::string> categories;
        for (const auto& c : cells) {
            if (std::find(views.begin(), views.end(), c.view) == views.end()) views.push_back(c.view);
            categories.insert(c.category);
        }
        std::sort(views.begin(), views.end());
        auto row_label = [&](const BenchmarkCell& c) {
            std::string l = c.algorithm + " / " + c.scorer;
            if (categories.size() > 1) l += " / " + c.category;
            return l;
        };
        for (const auto& c : cells) {
            const auto l = row_label(c);
            if (std::find(rows.begin(), rows.end(), l) == rows.end()) rows.push_back(l);
        }
        std::vector<std::string> header{"algorithm / scorer"};
        for (auto v : views) header.emplace_back(to_string(v));
        header.emplace_back("mean");
        header.emplace_back("solved");
        TextTable t(header);
        for (const auto& l : rows) {
            std::vector<std::string> row{l};
            double sum = 0.0;
            std::size_t n = 0, solved = 0, total = 0;
            for (auto v : views) {
                const BenchmarkCell* hit = nullptr;
                for (const auto& c : cells) {
                    if (row_label(c) == l && c.view == v) hit = &c;
                }
                if (!hit) {
                    row.emplace_back("MISSING");
                    continue;
                }
                row.push_back(fixed(hit->mean_calls, 1));
                sum += hit->mean_calls;
                ++n;
                for (const auto& r : hit->runs) {
                    solved += r.solved ? 1 : 0;
                    ++total;
                }
            }
            row.push_back(n ? fixed(sum / static_cast<double>(n), 1) : "MISSING");
            row.push_back(std::to_string(solved) + "/" + std::to_string(total));
            t.add_row(std::move(row));
        }
        return "calls to solve (mean over " + std::to_string(runs) + " runs, unsolved counted as " +
               std::to_string(c_max) + ")\n" + t.render();
    }
};

inline std::uint64_t benchmark_seed(std::uint64_t master, const std::string& algo, const std::string& scorer,
                                    const Query& q, std::size_t run) {
    return derive_seed(master, {seed_label(algo), seed_label(scorer), seed_label(q.text), run});
}

inline BenchmarkTable run_benchmark(const PolySphere& sphere, const std::vector<BenchmarkScorer>& scorers,
                                    const std::vector<Query>& queries, const BenchmarkConfig& cfg) {
    if (cfg.runs < 1 || cfg.c_max < 1) {
        throw std::invalid_argument("benchmark needs at least one run and a positive call cap");
    }
    for (const auto& a : cfg.algorithms) {
        if (a != "greedy" && a != "bayes") throw std::invalid_argument("unknown search algorithm '" + a + "'");
    }
    for (const auto& s : scorers) {
        if (!s.scorer) throw std::invalid_argument("benchmark scorer '" + s.label + "' is null");
    }

    BenchmarkTable table;
    table.c_max = cfg.c_max;
    table.runs = cfg.runs;
    table.master_seed = cfg.master_seed;

    struct Job {
        std::size_t cell;
        std::size_t run;
    };
    std::vector<Job> jobs;
    std::vector<std::vector<int>> gold_distances;
    std::vector<const BenchmarkScorer*> cell_scorer;
    std::vector<const Query*> cell_query;
    for (const auto& algo : cfg.algorithms) {
        for (const auto& s : scorers) {
            for (const auto& q : queries) {
                BenchmarkCell c;
                c.algorithm = algo;
                c.scorer = s.label;
                c.category = q.category;
                c.view = q.view;
                c.gold = canonical_cell(sphere, cfg.convention, q.view);
                c.runs.resize(cfg.runs);
                for (std::size_t r = 0; r < cfg.runs; ++r) jobs.push_back({table.cells.size(), r});
                gold_distances.push_back(sphere.distances_from(c.gold));
                cell_scorer.push_back(&s);
                cell_query.push_back(&q);
                table.cells.push_back(std::move(c));
            }
        }
    }

    auto execute = [&](const Job& job) {
        BenchmarkCell& c = table.cells[job.cell];
        BenchmarkRun& run = c.runs[job.run];
        run.index = job.run;
        run.seed = benchmark_seed(cfg.master_seed, c.algorithm, c.scorer, *cell_query[job.cell], job.run);
        const auto& dist = gold_distances[job.cell];
        SearchContext ctx{sphere, *cell_scorer[job.cell]->scorer, *cell_query[job.cell], cfg.c_max, run.seed,
                          cfg.provider, [&dist](CellId x) { return dist[x] <= 2; }};
        try {
            SearchTrace t = c.algorithm == "greedy" ? greedy_search(ctx, cfg.greedy) : bayesian_search(ctx, cfg.bayes);
            run.calls = t.calls();
            run.reason = t.reason;
            run.solved = t.reason == StopReason::Solved;
            if (cfg.keep_traces) run.trace = std::move(t);
        } catch (const std::exception& e) {
            run.error = e.what();
            run.solved = false;
            run.reason = StopReason::Stalled;
        }
    };

    bool parallel = true;
    for (const auto& s : scorers) parallel = parallel && s.scorer->concurrent();
    unsigned threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
    if (!parallel) threads = 1;
    threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1)));
    if (threads <= 1) {
        for (const auto& j : jobs) execute(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) execute(jobs[i]);
            });
        }
        for (auto& th : pool) th.join();
    }

    for (auto& c : table.cells) {
        std::vector<double> charged;
        std::size_t solved = 0;
        for (const auto& r : c.runs) {
            charged.push_back(static_cast<double>(r.charged(cfg.c_max)));
            solved += r.solved ? 1 : 0;
        }
        double sum = 0.0;
        for (double x : charged) sum += x;
        c.mean_calls = sum / static_cast<double>(charged.size());
        c.solve_rate = static_cast<double>(solved) / static_cast<double>(charged.size());
        std::sort(charged.begin(), charged.end());
        const std::size_t m = charged.size();
        c.median_calls = m % 2 ? charged[m / 2] : 0.5 * (charged[m / 2 - 1] + charged[m / 2]);
    }
    return table;
}

}  // namespace viewsphere
