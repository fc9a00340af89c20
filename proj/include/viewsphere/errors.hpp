#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace viewsphere {

/// Raised when a scorer cannot produce a value for a view (missing image,
/// unreachable service, cache miss). Never replaced by a default score.
class ScorerError : public std::runtime_error {
public:
    explicit ScorerError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when the Gaussian surrogate cannot be factorized even after
/// jitter escalation.
class NumericFailure : public std::runtime_error {
public:
    explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

/// Structured load failure. Carries every offending entry found while
/// validating a file, not only the first one.
class LoadError : public std::runtime_error {
public:
    LoadError(const std::string& file, std::vector<std::string> problems)
        : std::runtime_error(compose(file, problems)), file_(file), problems_(std::move(problems)) {}

    const std::string& file() const noexcept { return file_; }
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string compose(const std::string& file, const std::vector<std::string>& problems) {
        std::string msg = "failed to load '" + file + "'";
        for (std::size_t i = 0; i < problems.size() && i < 8; ++i) {
            msg += (i == 0 ? ": " : "; ") + problems[i];
        }
        if (problems.size() > 8) {
            msg += "; ... (" + std::to_string(problems.size() - 8) + " more)";
        }
        return msg;
    }

    std::string file_;
    std::vector<std::string> problems_;
};

}  // namespace viewsphere
