#pragma once

// Client for the HTTP embedding service. Scores are cosines between the
// service's text and image embeddings.
//
//   POST /embed_text  {"texts":[...]}                         -> {"dim":D,"vectors":[[...],...]}
//   POST /embed_image {"images":[{"id":..,"path"|"b64":..}]}  -> {"dim":D,"vectors":[[...],...]}
//   GET  /health                                              -> {"model":..,"dim":D}
//
// Responses may carry "ids"; vectors are then matched to requests by id,
// otherwise by position.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

// Eigen must be parsed before httplib: <resolv.h> defines a _res macro.
#include <Eigen/Dense>
#include <json.hpp>

#include "viewsphere/errors.hpp"
#include "viewsphere/scorer.hpp"

#include <httplib.h>

namespace viewsphere {

struct RemoteOptions {
    std::size_t max_batch = 32;
    std::size_t max_in_flight = 4;
    int timeout_seconds = 60;
};

struct ServiceInfo {
    std::string model;
    std::size_t dim = 0;
};

struct ServiceUrl {
    std::string scheme_host_port;  ///< e.g. http://localhost:8080
    std::string prefix;            ///< path prefix without trailing slash

    static ServiceUrl parse(const std::string& url) {
        const auto scheme = url.find("://");
        if (scheme == std::string::npos || url.substr(0, scheme) != "http") {
            throw std::invalid_argument("embedding service URL must start with http://, got '" + url + "'");
        }
        const auto path = url.find('/', scheme + 3);
        ServiceUrl u;
        u.scheme_host_port = url.substr(0, path);
        if (u.scheme_host_port.size() <= scheme + 3) {
            throw std::invalid_argument("embedding service URL has no host: '" + url + "'");
        }
        if (path != std::string::npos) {
            u.prefix = url.substr(path);
            while (!u.prefix.empty() && u.prefix.back() == '/') u.prefix.pop_back();
        }
        return u;
    }
};

class RemoteScorer final : public Scorer {
public:
    explicit RemoteScorer(std::string url, RemoteOptions options = {})
        : url_(std::move(url)), parsed_(ServiceUrl::parse(url_)), options_(options),
          slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, std::min<std::size_t>(options.max_in_flight, 1024)))) {
        if (options_.max_batch < 1) throw std::invalid_argument("remote batch size must be at least 1");
    }

    std::string id() const override { return "remote:" + url_; }
    bool cell_based() const override { return false; }

    ServiceInfo health() {
        const auto body = request("GET", "/health", {});
        ServiceInfo info;
        try {
            info.model = body.at("model").get<std::string>();
            info.dim = body.at("dim").get<std::size_t>();
        } catch (const std::exception& e) {
            throw ScorerError("embedding service /health reply is malformed: " + std::string(e.what()));
        }
        return info;
    }

    std::vector<Embedding> embed_texts(const std::vector<std::string>& texts) {
        nlohmann::json req{{"texts", texts}};
        return parse_vectors(request("POST", "/embed_text", req), texts.size(), {}, "/embed_text");
    }

    std::vector<Embedding> embed_images(std::span<const ViewRef> views) {
        nlohmann::json images = nlohmann::json::array();
        std::vector<std::string> ids;
        for (const auto& v : views) {
            const std::string key = image_key(v);
            nlohmann::json img{{"id", key}};
            img["path"] = v.image_path.empty() ? v.image_id : v.image_path;
            images.push_back(std::move(img));
            ids.push_back(key);
        }
        return parse_vectors(request("POST", "/embed_image", {{"images", images}}), views.size(), ids, "/embed_image");
    }

    double score(const Query& query, const ViewRef& view) override {
        return score_batch(query, std::span<const ViewRef>(&view, 1)).at(0);
    }

    /// Text embedding once per query; images in chunks of max_batch, each
    /// fetched once per scorer instance.
    std::vector<double> score_batch(const Query& query, std::span<const ViewRef> views) override {
        const Embedding text = text_embedding(query.text);
        std::vector<std::size_t> todo;
        {
            std::lock_guard lock(mutex_);
            for (std::size_t i = 0; i < views.size(); ++i) {
                if (image_key(views[i]).empty()) {
                    throw ViewScoreError("view has no image for the remote scorer", i);
                }
                if (!images_.count(image_key(views[i]))) todo.push_back(i);
            }
        }
        for (std::size_t start = 0; start < todo.size(); start += options_.max_batch) {
            std::vector<ViewRef> chunk;
            for (std::size_t j = start; j < std::min(todo.size(), start + options_.max_batch); ++j) {
                chunk.push_back(views[todo[j]]);
            }
            std::vector<Embedding> vecs;
            try {
                vecs = embed_images(chunk);
            } catch (const ScorerError& e) {
                throw ViewScoreError(e.what(), todo[start]);
            }
            std::lock_guard lock(mutex_);
            for (std::size_t j = 0; j < chunk.size(); ++j) images_[image_key(chunk[j])] = std::move(vecs[j]);
        }
        std::vector<double> out;
        out.reserve(views.size());
        std::lock_guard lock(mutex_);
        for (std::size_t i = 0; i < views.size(); ++i) {
            const auto& img = images_.at(image_key(views[i]));
            try {
                out.push_back(cosine(text, img));
            } catch (const std::invalid_argument& e) {
                throw ViewScoreError(std::string("cannot score remote embeddings: ") + e.what(), i);
            }
        }
        return out;
    }

private:
    static std::string image_key(const ViewRef& v) { return v.image_id.empty() ? v.image_path : v.image_id; }

    Embedding text_embedding(const std::string& text) {
        {
            std::lock_guard lock(mutex_);
            if (auto it = texts_.find(text); it != texts_.end()) return it->second;
        }
        auto v = embed_texts({text}).at(0);
        std::lock_guard lock(mutex_);
        return texts_.emplace(text, std::move(v)).first->second;
    }

    nlohmann::json request(const std::string& method, const std::string& path, const nlohmann::json& body) {
        slots_.acquire();
        struct Release {
            std::counting_semaphore<1024>& s;
            ~Release() { s.release(); }
        } release{slots_};
        httplib::Client cli(parsed_.scheme_host_port);
        cli.set_connection_timeout(options_.timeout_seconds, 0);
        cli.set_read_timeout(options_.timeout_seconds, 0);
        cli.set_write_timeout(options_.timeout_seconds, 0);
        const std::string full = parsed_.prefix + path;
        auto res = method == "GET" ? cli.Get(full) : cli.Post(full, body.dump(), "application/json");
        if (!res) {
            throw ScorerError("embedding service unreachable at " + url_ + " (" + httplib::to_string(res.error()) + ")");
        }
        if (res->status != 200) {
            std::string detail = res->body;
            try {
                const auto j = nlohmann::json::parse(res->body);
                if (j.contains("error")) detail = j.at("error").get<std::string>();
            } catch (const std::exception&) {
            }
            if (detail.size() > 200) detail.resize(200);
            throw ScorerError("embedding service returned HTTP " + std::to_string(res->status) + " for " + path +
                              (detail.empty() ? "" : ": " + detail));
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const std::exception& e) {
            throw ScorerError("embedding service reply to " + path + " is not valid JSON: " + e.what());
        }
    }

    static std::vector<Embedding> parse_vectors(const nlohmann::json& body, std::size_t expected,
                                                const std::vector<std::string>& ids, const std::string& path) {
        try {
            const auto dim = body.at("dim").get<std::size_t>();
            auto vectors = body.at("vectors").get<std::vector<Embedding>>();
            if (vectors.size() != expected) {
                throw ScorerError("embedding service returned " + std::to_string(vectors.size()) + " vectors for " +
                                  std::to_string(expected) + " inputs on " + path);
            }
            for (const auto& v : vectors) {
                if (v.size() != dim) {
                    throw ScorerError("embedding service vector length " + std::to_string(v.size()) +
                                      " differs from advertised dim " + std::to_string(dim) + " on " + path);
                }
            }
            if (body.contains("ids") && !ids.empty()) {
                const auto got = body.at("ids").get<std::vector<std::string>>();
                std::map<std::string, std::size_t> pos;
                for (std::size_t i = 0; i < got.size(); ++i) pos[got[i]] = i;
                std::vector<Embedding> ordered;
                for (const auto& id : ids) {
                    const auto it = pos.find(id);
                    if (it == pos.end() || it->second >= vectors.size()) {
                        throw ScorerError("embedding service reply to " + path + " lacks id '" + id + "'");
                    }
                    ordered.push_back(vectors[it->second]);
                }
                return ordered;
            }
            return vectors;
        } catch (const ScorerError&) {
            throw;
        } catch (const std::exception& e) {
            throw ScorerError("embedding service reply to " + path + " is malformed: " + e.what());
        }
    }

    std::string url_;
    ServiceUrl parsed_;
    RemoteOptions options_;
    std::counting_semaphore<1024> slots_;
    std::mutex mutex_;
    std::map<std::string, Embedding> texts_;
    std::map<std::string, Embedding> images_;
};

}  // namespace viewsphere
