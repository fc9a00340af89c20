#pragma once

// Aligned plain-text tables and locale-independent number formatting for
// reports. Output bytes depend only on the inputs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace viewsphere {

inline std::string fixed(double v, int precision) {
    if (std::isnan(v)) {
        return "nan";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    std::string s(buf);
    if (s == "-0" || s.rfind("-0.", 0) == 0) {
        // avoid "-0.000" for tiny negatives
        if (s.find_first_not_of("-0.") == std::string::npos) {
            s.erase(0, 1);
        }
    }
    return s;
}

class TextTable {
public:
    explicit TextTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add_row(std::vector<std::string> row) {
        row.resize(header_.size());
        rows_.push_back(std::move(row));
    }

    /// Inserts a horizontal rule before the next row.
    void add_rule() { rules_.push_back(rows_.size()); }

    std::string render() const {
        std::vector<std::size_t> width(header_.size(), 0);
        for (std::size_t c = 0; c < header_.size(); ++c) {
            width[c] = header_[c].size();
            for (const auto& r : rows_) {
                width[c] = std::max(width[c], r[c].size());
            }
        }
        std::size_t total = 0;
        for (auto w : width) {
            total += w + 2;
        }
        const std::string rule(total > 2 ? total - 2 : total, '-');
        std::string out;
        auto line = [&](const std::vector<std::string>& cells) {
            std::string l;
            for (std::size_t c = 0; c < cells.size(); ++c) {
                const std::string pad(width[c] - cells[c].size(), ' ');
                l += c == 0 ? cells[c] + pad : pad + cells[c];
                if (c + 1 < cells.size()) {
                    l += "  ";
                }
            }
            out += l + "\n";
        };
        line(header_);
        out += rule + "\n";
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            if (std::find(rules_.begin(), rules_.end(), i) != rules_.end() && i != 0) {
                out += rule + "\n";
            }
            line(rows_[i]);
        }
        return out;
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> rules_;
};

}  // namespace viewsphere
