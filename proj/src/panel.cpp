#include "sddp/panel.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sddp {

namespace {

constexpr std::uint64_t kMaskStreamId = 0x6d61736bULL; // stream tag for inject_missing

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == delim) {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

// Shortest representation that round-trips an IEEE double exactly.
std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lf", &back);
            if (back == v) {
                return shorter;
            }
        }
    }
    return buf;
}

bool parse_double(const std::string& cell, double& out) {
    const std::string s = trim(cell);
    if (s.empty()) return false;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows; // time-major, raw cells
};

RawTable read_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open file: " + path);
    }
    RawTable table;
    std::string line;
    int lineno = 0;
    size_t arity = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split_line(line, options.delimiter);
        if (options.header && table.header.empty() && table.rows.empty()) {
            table.header = cells;
            arity = cells.size();
            continue;
        }
        if (arity == 0) {
            arity = cells.size();
        } else if (cells.size() != arity) {
            throw DataError("malformed CSV at line " + std::to_string(lineno) + " in " + path +
                            ": expected " + std::to_string(arity) + " cells, got " +
                            std::to_string(cells.size()));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.rows.empty()) {
        throw DataError("no data rows in " + path);
    }
    return table;
}

int resolve_target_column(const RawTable& table, const std::string& target_column,
                          const CsvOptions& options) {
    if (options.header) {
        for (size_t c = 0; c < table.header.size(); ++c) {
            if (table.header[c] == target_column) return static_cast<int>(c);
        }
    }
    int idx = 0;
    const std::string t = trim(target_column);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), idx);
    if (ec == std::errc() && ptr == t.data() + t.size() && idx >= 0 &&
        idx < static_cast<int>(table.rows.front().size())) {
        return idx;
    }
    throw ConfigError("target column '" + target_column + "' not found");
}

struct ParsedPanel {
    TimePanel panel;
    Matrix mask;       // 1 = observed
    bool any_missing = false;
};

ParsedPanel parse_panel(const RawTable& table, const std::string& target_column,
                        const CsvOptions& options, bool allow_missing) {
    const int target_idx = resolve_target_column(table, target_column, options);
    const int cols = static_cast<int>(table.rows.front().size());
    const int t_len = static_cast<int>(table.rows.size());
    const int n = cols - 1;
    if (n < 1) {
        throw DataError("panel needs at least one predictor column");
    }
    if (t_len < 2) {
        throw DataError("panel needs at least two time points");
    }

    ParsedPanel out;
    out.panel.values = Matrix::Zero(n, t_len);
    out.panel.target = Vector::Zero(t_len);
    out.mask = Matrix::Ones(n, t_len);
    if (options.header) {
        for (int c = 0; c < cols; ++c) {
            if (c != target_idx) out.panel.names.push_back(table.header[c]);
        }
    }

    for (int r = 0; r < t_len; ++r) {
        const auto& row = table.rows[r];
        int i = 0;
        for (int c = 0; c < cols; ++c) {
            double v = 0.0;
            const bool ok = parse_double(row[c], v);
            if (c == target_idx) {
                if (!ok) {
                    throw DataError("non-numeric target cell at data row " + std::to_string(r + 1));
                }
                out.panel.target(r) = v;
                continue;
            }
            if (!ok) {
                if (allow_missing && trim(row[c]).empty()) {
                    out.mask(i, r) = 0.0;
                    out.any_missing = true;
                } else {
                    throw DataError("non-numeric cell '" + row[c] + "' at data row " +
                                    std::to_string(r + 1) + ", column " + std::to_string(c + 1));
                }
            } else {
                out.panel.values(i, r) = v;
            }
            ++i;
        }
    }
    return out;
}

void write_rows(std::ofstream& out, const TimePanel& panel, const Matrix* mask,
                const std::string& target_name, const CsvOptions& options) {
    const char d = options.delimiter;
    if (options.header) {
        out << target_name;
        for (int i = 0; i < panel.n(); ++i) {
            out << d << (static_cast<size_t>(i) < panel.names.size() ? panel.names[i]
                                                                     : "x" + std::to_string(i + 1));
        }
        out << "\n";
    }
    for (int r = 0; r < panel.t(); ++r) {
        out << format_double(panel.target(r));
        for (int i = 0; i < panel.n(); ++i) {
            out << d;
            if (mask == nullptr || (*mask)(i, r) != 0.0) {
                out << format_double(panel.values(i, r));
            }
        }
        out << "\n";
    }
}

} // namespace

void TimePanel::validate() const {
    if (values.cols() != target.size()) {
        throw ShapeError("TimePanel: target length " + std::to_string(target.size()) +
                         " does not match T=" + std::to_string(values.cols()));
    }
    if (values.rows() < 1 || values.cols() < 1) {
        throw ShapeError("TimePanel: empty panel");
    }
    if (!names.empty() && static_cast<int>(names.size()) != n()) {
        throw ShapeError("TimePanel: name count does not match N");
    }
    if (!values.allFinite() || !target.allFinite()) {
        throw DataError("TimePanel: non-finite entries");
    }
}

void MaskedPanel::validate() const {
    panel.validate();
    if (mask.rows() != panel.values.rows() || mask.cols() != panel.values.cols()) {
        throw ShapeError("MaskedPanel: mask shape does not match panel");
    }
    for (int i = 0; i < mask.rows(); ++i) {
        for (int t = 0; t < mask.cols(); ++t) {
            const double w = mask(i, t);
            if (w != 0.0 && w != 1.0) {
                throw DataError("MaskedPanel: mask entries must be 0 or 1");
            }
        }
    }
}

TimePanel load_panel(const std::string& path, const std::string& target_column,
                     const CsvOptions& options) {
    const RawTable table = read_csv(path, options);
    ParsedPanel parsed = parse_panel(table, target_column, options, /*allow_missing=*/false);
    parsed.panel.validate();
    return std::move(parsed.panel);
}

void write_panel(const TimePanel& panel, const std::string& path, const CsvOptions& options) {
    panel.validate();
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open file for writing: " + path);
    }
    write_rows(out, panel, nullptr, "y", options);
}

MaskedPanel load_masked_panel(const std::string& path, const std::string& target_column,
                              const CsvOptions& options,
                              const std::optional<std::string>& mask_path) {
    const RawTable table = read_csv(path, options);
    ParsedPanel parsed = parse_panel(table, target_column, options, /*allow_missing=*/true);

    MaskedPanel mp;
    mp.panel = std::move(parsed.panel);
    mp.mask = std::move(parsed.mask);

    if (mask_path) {
        CsvOptions mask_options = options;
        mask_options.header = false;
        const RawTable mask_table = read_csv(*mask_path, mask_options);
        if (static_cast<int>(mask_table.rows.size()) != mp.panel.t() ||
            static_cast<int>(mask_table.rows.front().size()) != mp.panel.n()) {
            throw ShapeError("mask file shape does not match panel covariates");
        }
        for (int r = 0; r < mp.panel.t(); ++r) {
            for (int i = 0; i < mp.panel.n(); ++i) {
                double v = 0.0;
                if (!parse_double(mask_table.rows[r][i], v) || (v != 0.0 && v != 1.0)) {
                    throw DataError("mask file cell at row " + std::to_string(r + 1) +
                                    " is not 0 or 1");
                }
                if (v == 0.0) {
                    mp.panel.values(i, r) = 0.0;
                } else if (mp.mask(i, r) == 0.0) {
                    throw DataError("mask file marks an empty CSV cell as observed (row " +
                                    std::to_string(r + 1) + ")");
                }
                mp.mask(i, r) = v;
            }
        }
    }
    const double total = static_cast<double>(mp.mask.size());
    mp.realized_missing = (total - mp.mask.sum()) / total;
    mp.validate();
    return mp;
}

void write_masked_panel(const MaskedPanel& mpanel, const std::string& path,
                        const std::string& mask_path, const CsvOptions& options) {
    mpanel.validate();
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open file for writing: " + path);
    }
    write_rows(out, mpanel.panel, &mpanel.mask, "y", options);

    std::ofstream mout(mask_path);
    if (!mout) {
        throw DataError("cannot open file for writing: " + mask_path);
    }
    for (int r = 0; r < mpanel.panel.t(); ++r) {
        for (int i = 0; i < mpanel.panel.n(); ++i) {
            if (i) mout << options.delimiter;
            mout << (mpanel.mask(i, r) != 0.0 ? '1' : '0');
        }
        mout << "\n";
    }
}

std::pair<TimePanel, TimePanel> chronological_split(const TimePanel& panel,
                                                    double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    const int t_len = panel.t();
    const int t_train = static_cast<int>(std::floor(train_fraction * t_len));
    if (t_train < 2 || t_len - t_train < 1) {
        throw DataError("split too small: train=" + std::to_string(t_train) +
                        ", test=" + std::to_string(t_len - t_train));
    }
    TimePanel train;
    train.values = panel.values.leftCols(t_train);
    train.target = panel.target.head(t_train);
    train.names = panel.names;
    train.horizon_hint = panel.horizon_hint;

    TimePanel test;
    test.values = panel.values.rightCols(t_len - t_train);
    test.target = panel.target.tail(t_len - t_train);
    test.names = panel.names;
    test.horizon_hint = panel.horizon_hint;
    return {std::move(train), std::move(test)};
}

std::pair<TimePanel, StandardizationStats> standardize(
    const TimePanel& panel, const std::optional<StandardizationStats>& stats_in) {
    StandardizationStats stats;
    if (stats_in) {
        stats = *stats_in;
        if (stats.means.size() != panel.n() || stats.scales.size() != panel.n()) {
            throw ShapeError("standardize: stats length does not match N");
        }
    } else {
        const int n = panel.n();
        const double t_len = static_cast<double>(panel.t());
        stats.means = panel.values.rowwise().mean();
        stats.scales = Vector::Ones(n);
        for (int i = 0; i < n; ++i) {
            const double ss = (panel.values.row(i).array() - stats.means(i)).square().sum();
            const double var = panel.t() > 1 ? ss / (t_len - 1.0) : 0.0;
            if (var > 0.0) {
                stats.scales(i) = std::sqrt(var);
            } else {
                stats.degenerate_rows.push_back(i);
            }
        }
        stats.target_mean = panel.target.mean();
        const double tss = (panel.target.array() - stats.target_mean).square().sum();
        const double tvar = panel.t() > 1 ? tss / (t_len - 1.0) : 0.0;
        if (tvar > 0.0) {
            stats.target_scale = std::sqrt(tvar);
        } else {
            stats.target_scale = 1.0;
            stats.target_degenerate = true;
        }
    }

    TimePanel out = panel;
    out.values = (panel.values.colwise() - stats.means).array().colwise() /
                 stats.scales.array();
    out.target = (panel.target.array() - stats.target_mean) / stats.target_scale;
    return {std::move(out), std::move(stats)};
}

TimePanel destandardize(const TimePanel& panel, const StandardizationStats& stats) {
    if (stats.means.size() != panel.n() || stats.scales.size() != panel.n()) {
        throw ShapeError("destandardize: stats length does not match N");
    }
    TimePanel out = panel;
    out.values = (panel.values.array().colwise() * stats.scales.array()).colwise() +
                 stats.means.array();
    out.target = panel.target.array() * stats.target_scale + stats.target_mean;
    return out;
}

std::pair<MaskedPanel, StandardizationStats> standardize_masked(
    const MaskedPanel& mpanel, const std::optional<StandardizationStats>& stats_in) {
    StandardizationStats stats;
    const int n = mpanel.panel.n();
    if (stats_in) {
        stats = *stats_in;
        if (stats.means.size() != n || stats.scales.size() != n) {
            throw ShapeError("standardize_masked: stats length does not match N");
        }
    } else {
        stats.means = Vector::Zero(n);
        stats.scales = Vector::Ones(n);
        for (int i = 0; i < n; ++i) {
            double sum = 0.0, count = 0.0;
            for (int t = 0; t < mpanel.panel.t(); ++t) {
                if (mpanel.mask(i, t) != 0.0) {
                    sum += mpanel.panel.values(i, t);
                    count += 1.0;
                }
            }
            const double mean = count > 0.0 ? sum / count : 0.0;
            double ss = 0.0;
            for (int t = 0; t < mpanel.panel.t(); ++t) {
                if (mpanel.mask(i, t) != 0.0) {
                    const double d = mpanel.panel.values(i, t) - mean;
                    ss += d * d;
                }
            }
            stats.means(i) = mean;
            const double var = count > 1.0 ? ss / (count - 1.0) : 0.0;
            if (var > 0.0) {
                stats.scales(i) = std::sqrt(var);
            } else {
                stats.degenerate_rows.push_back(i);
            }
        }
        const double t_len = static_cast<double>(mpanel.panel.t());
        stats.target_mean = mpanel.panel.target.mean();
        const double tss = (mpanel.panel.target.array() - stats.target_mean).square().sum();
        const double tvar = mpanel.panel.t() > 1 ? tss / (t_len - 1.0) : 0.0;
        if (tvar > 0.0) {
            stats.target_scale = std::sqrt(tvar);
        } else {
            stats.target_scale = 1.0;
            stats.target_degenerate = true;
        }
    }

    MaskedPanel out = mpanel;
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < mpanel.panel.t(); ++t) {
            out.panel.values(i, t) =
                out.mask(i, t) != 0.0
                    ? (mpanel.panel.values(i, t) - stats.means(i)) / stats.scales(i)
                    : 0.0;
        }
    }
    out.panel.target =
        (mpanel.panel.target.array() - stats.target_mean) / stats.target_scale;
    return {std::move(out), std::move(stats)};
}

MaskedPanel inject_missing(const TimePanel& panel, double rate, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("missing rate must lie in [0, 1)");
    }
    MaskedPanel mp;
    mp.panel = panel;
    mp.mask = Matrix::Ones(panel.n(), panel.t());

    RngStream stream(seed, kMaskStreamId);
    int masked = 0;
    for (int i = 0; i < panel.n(); ++i) {
        for (int t = 0; t < panel.t(); ++t) {
            if (stream.bernoulli(rate)) {
                mp.mask(i, t) = 0.0;
                mp.panel.values(i, t) = 0.0;
                ++masked;
            }
        }
    }
    mp.realized_missing = static_cast<double>(masked) / static_cast<double>(panel.n() * panel.t());
    return mp;
}

} // namespace sddp
