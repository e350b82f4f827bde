#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sddp/metrics.hpp"
#include "test_util.hpp"

using namespace sddp;

TEST_CASE("metrics hand cases") {
    Vector y(2), p(2);
    y << 1, 1;
    p << 1, 1;
    const MetricPair perfect = metrics(p, y);
    CHECK(perfect.mae == 0.0);
    CHECK(perfect.rmse == 0.0);

    p << 2, 0; // errors (1, -1)
    const MetricPair sym = metrics(p, y);
    CHECK(sym.mae == doctest::Approx(1.0));
    CHECK(sym.rmse == doctest::Approx(1.0));

    p << 1, 3; // errors (0, 2)
    const MetricPair skew = metrics(p, y);
    CHECK(skew.mae == doctest::Approx(1.0));
    CHECK(skew.rmse == doctest::Approx(std::sqrt(2.0)));

    Vector bad(3);
    CHECK_THROWS_AS(metrics(p, bad), ShapeError);
}

TEST_CASE("rmse dominates mae on random errors") {
    RngStream stream(1, 0);
    for (int rep = 0; rep < 20; ++rep) {
        const int n = 5 + static_cast<int>(stream.integer(50));
        Vector y(n), p(n);
        for (int i = 0; i < n; ++i) {
            y(i) = stream.normal();
            p(i) = y(i) + stream.normal();
        }
        const MetricPair m = metrics(p, y);
        CHECK(m.rmse >= m.mae - 1e-15);
    }
}

TEST_CASE("minmax_normalize maps best to zero and worst to one") {
    Vector column(4);
    column << 3.0, 1.0, 5.0, 2.0;
    const NormalizedColumn norm = minmax_normalize(column);
    CHECK(!norm.degenerate);
    CHECK(norm.values(1) == 0.0);
    CHECK(norm.values(2) == 1.0);
    CHECK(norm.values(0) == doctest::Approx(0.5));

    // Affine invariance with positive scale.
    const NormalizedColumn shifted = minmax_normalize((2.5 * column.array() + 7.0).matrix());
    CHECK((shifted.values - norm.values).cwiseAbs().maxCoeff() <= 1e-12);

    // Idempotence on a non-degenerate normalized column.
    const NormalizedColumn twice = minmax_normalize(norm.values);
    CHECK((twice.values - norm.values).cwiseAbs().maxCoeff() <= 1e-12);

    const NormalizedColumn flat = minmax_normalize(Vector::Constant(3, 4.0));
    CHECK(flat.degenerate);
    CHECK(flat.values.cwiseAbs().maxCoeff() == 0.0);

    Vector one(1);
    CHECK_THROWS_AS(minmax_normalize(one), ShapeError);
}

TEST_CASE("published-table spot values reproduce") {
    // Climate columns of the 21-method comparison: MAE min 2.936 max 4.781,
    // RMSE min 3.628 max 6.107.
    CHECK((3.169 - 2.936) / (4.781 - 2.936) == doctest::Approx(0.1263).epsilon(5e-3));
    CHECK((3.673 - 3.628) / (6.107 - 3.628) == doctest::Approx(0.0180).epsilon(5e-2));
}

TEST_CASE("cumulative normalized error on a dominance case") {
    ErrorTable table;
    table.methods = {"a", "b"};
    table.datasets = {"d1", "d2", "d3"};
    table.entries = {
        {{1.0, 2.0}, {0.5, 1.0}, {2.0, 3.0}},
        {{2.0, 3.0}, {1.5, 2.0}, {4.0, 5.0}},
    };
    const NormalizedErrors result = cumulative_normalized_error(table);
    CHECK(result.nce(0) == doctest::Approx(0.0));
    CHECK(result.nce(1) == doctest::Approx(2.0 * 3.0)); // 2 metrics x 3 datasets
    CHECK(result.degenerate_columns.empty());
}

TEST_CASE("single-method tables degenerate to flagged zeros") {
    ErrorTable table;
    table.methods = {"only"};
    table.datasets = {"d1", "d2"};
    table.entries = {{{1.0, 2.0}, {3.0, 4.0}}};
    CHECK_THROWS_AS(cumulative_normalized_error(table), ShapeError);

    // Two identical methods: every column ties, all flagged.
    table.methods = {"a", "b"};
    table.entries = {{{1.0, 2.0}, {3.0, 4.0}}, {{1.0, 2.0}, {3.0, 4.0}}};
    const NormalizedErrors result = cumulative_normalized_error(table);
    CHECK(result.nce(0) == 0.0);
    CHECK(result.nce(1) == 0.0);
    CHECK(result.degenerate_columns.size() == 4);
}

TEST_CASE("NCE is invariant to positive per-dataset rescaling") {
    ErrorTable table;
    table.methods = {"a", "b", "c"};
    table.datasets = {"d1", "d2"};
    table.entries = {
        {{1.0, 2.0}, {5.0, 6.0}},
        {{2.0, 2.5}, {4.0, 7.0}},
        {{1.5, 3.0}, {6.0, 5.0}},
    };
    const Vector base = cumulative_normalized_error(table).nce;

    ErrorTable scaled = table;
    for (auto& row : scaled.entries) {
        row[0].mae = row[0].mae * 3.0 + 1.0;
        row[0].rmse = row[0].rmse * 0.5 + 2.0;
        row[1].mae = row[1].mae * 10.0;
        row[1].rmse = row[1].rmse * 7.0 + 0.3;
    }
    const Vector rescaled = cumulative_normalized_error(scaled).nce;
    CHECK((base - rescaled).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("error table CSV round trip") {
    ErrorTable table;
    table.methods = {"m1", "m2", "m3"};
    table.datasets = {"climate", "energy"};
    RngStream stream(5, 0);
    for (int r = 0; r < 3; ++r) {
        std::vector<MetricPair> row;
        for (int c = 0; c < 2; ++c) {
            MetricPair p;
            p.mae = std::abs(stream.normal()) + 0.1;
            p.rmse = p.mae + std::abs(stream.normal());
            row.push_back(p);
        }
        table.entries.push_back(row);
    }
    const auto path = (std::filesystem::temp_directory_path() / "sddp_table.csv").string();
    write_error_table(table, path);
    const ErrorTable back = load_error_table(path);
    CHECK(back.methods == table.methods);
    CHECK(back.datasets == table.datasets);
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 2; ++c) {
            CHECK(back.entries[r][c].mae == table.entries[r][c].mae);
            CHECK(back.entries[r][c].rmse == table.entries[r][c].rmse);
        }
    }

    // Malformed headers are rejected.
    std::ofstream bad(path);
    bad << "method,climate_mae,energy_rmse\nm1,1,2\n";
    bad.close();
    CHECK_THROWS_AS(load_error_table(path), DataError);
}
