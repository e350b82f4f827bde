#include "sddp/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sddp {

MetricPair metrics(const Vector& predictions, const Vector& targets) {
    if (predictions.size() != targets.size()) {
        throw ShapeError("metrics: prediction/target length mismatch");
    }
    if (predictions.size() < 1) {
        throw ShapeError("metrics: need at least one sample");
    }
    if (!predictions.allFinite() || !targets.allFinite()) {
        throw DataError("metrics: non-finite entries");
    }
    const Vector err = predictions - targets;
    MetricPair m;
    m.mae = err.cwiseAbs().mean();
    m.rmse = std::sqrt(err.squaredNorm() / static_cast<double>(err.size()));
    return m;
}

NormalizedColumn minmax_normalize(const Vector& column) {
    if (column.size() < 2) {
        throw ShapeError("minmax_normalize: need at least two methods");
    }
    const double lo = column.minCoeff();
    const double hi = column.maxCoeff();
    NormalizedColumn out;
    if (hi == lo) {
        out.values = Vector::Zero(column.size());
        out.degenerate = true;
        return out;
    }
    out.values = (column.array() - lo) / (hi - lo);
    return out;
}

void ErrorTable::validate() const {
    if (methods.empty() || datasets.empty()) {
        throw DataError("error table is empty");
    }
    if (entries.size() != methods.size()) {
        throw ShapeError("error table row count does not match methods");
    }
    for (const auto& row : entries) {
        if (row.size() != datasets.size()) {
            throw ShapeError("error table is not rectangular");
        }
    }
}

NormalizedErrors cumulative_normalized_error(const ErrorTable& table) {
    table.validate();
    const int m = static_cast<int>(table.methods.size());
    const int d = static_cast<int>(table.datasets.size());

    NormalizedErrors out;
    out.normalized = table;
    out.nce = Vector::Zero(m);

    for (int c = 0; c < d; ++c) {
        for (int metric = 0; metric < 2; ++metric) {
            Vector column(m);
            for (int r = 0; r < m; ++r) {
                column(r) = metric == 0 ? table.entries[r][c].mae : table.entries[r][c].rmse;
            }
            const NormalizedColumn norm = minmax_normalize(column);
            if (norm.degenerate) {
                out.degenerate_columns.push_back(table.datasets[c] +
                                                 (metric == 0 ? ":mae" : ":rmse"));
            }
            for (int r = 0; r < m; ++r) {
                if (metric == 0) {
                    out.normalized.entries[r][c].mae = norm.values(r);
                } else {
                    out.normalized.entries[r][c].rmse = norm.values(r);
                }
                out.nce(r) += norm.values(r);
            }
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        size_t b = 0;
        while (b < cell.size() && cell[b] == ' ') ++b;
        cells.push_back(cell.substr(b));
    }
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

} // namespace

ErrorTable load_error_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty error table: " + path);
    const auto header = split_csv_line(line);
    if (header.size() < 3 || header[0] != "method") {
        throw DataError("error table header must start with 'method' followed by "
                        "<dataset>_mae,<dataset>_rmse pairs");
    }

    ErrorTable table;
    for (size_t c = 1; c + 1 < header.size(); c += 2) {
        if (!ends_with(header[c], "_mae") || !ends_with(header[c + 1], "_rmse")) {
            throw DataError("error table columns must come in <dataset>_mae,<dataset>_rmse pairs");
        }
        const std::string ds = header[c].substr(0, header[c].size() - 4);
        if (header[c + 1].substr(0, header[c + 1].size() - 5) != ds) {
            throw DataError("mae/rmse column pair names disagree: " + header[c] + " vs " +
                            header[c + 1]);
        }
        table.datasets.push_back(ds);
    }
    if (header.size() != 1 + 2 * table.datasets.size()) {
        throw DataError("error table header has an unpaired metric column");
    }

    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError("error table row at line " + std::to_string(lineno) +
                            " has wrong arity");
        }
        table.methods.push_back(cells[0]);
        std::vector<MetricPair> row;
        for (size_t c = 1; c + 1 < cells.size(); c += 2) {
            MetricPair p;
            try {
                p.mae = std::stod(cells[c]);
                p.rmse = std::stod(cells[c + 1]);
            } catch (const std::exception&) {
                throw DataError("non-numeric error value at line " + std::to_string(lineno));
            }
            row.push_back(p);
        }
        table.entries.push_back(std::move(row));
    }
    table.validate();
    return table;
}

void write_error_table(const ErrorTable& table, const std::string& path) {
    table.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << "method";
    for (const auto& ds : table.datasets) {
        out << "," << ds << "_mae," << ds << "_rmse";
    }
    out << "\n";
    out.precision(17);
    for (size_t r = 0; r < table.methods.size(); ++r) {
        out << table.methods[r];
        for (size_t c = 0; c < table.datasets.size(); ++c) {
            out << "," << table.entries[r][c].mae << "," << table.entries[r][c].rmse;
        }
        out << "\n";
    }
}

void write_nce(const std::vector<std::string>& methods, const Vector& nce,
               const std::string& path) {
    if (static_cast<Eigen::Index>(methods.size()) != nce.size()) {
        throw ShapeError("write_nce: method/value length mismatch");
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out << "method,nce\n";
    out.precision(17);
    for (size_t r = 0; r < methods.size(); ++r) {
        out << methods[r] << "," << nce(static_cast<Eigen::Index>(r)) << "\n";
    }
}

} // namespace sddp
