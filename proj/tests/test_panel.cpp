#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "sddp/panel.hpp"
#include "test_util.hpp"

using namespace sddp;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

TimePanel random_panel(int n, int t, std::uint64_t seed) {
    RngStream stream(seed, 0);
    TimePanel panel;
    panel.values = Matrix::Zero(n, t);
    panel.target = Vector::Zero(t);
    for (int i = 0; i < n; ++i) {
        for (int tt = 0; tt < t; ++tt) panel.values(i, tt) = stream.normal();
    }
    for (int tt = 0; tt < t; ++tt) panel.target(tt) = stream.normal();
    for (int i = 0; i < n; ++i) panel.names.push_back("x" + std::to_string(i + 1));
    return panel;
}

} // namespace

TEST_CASE("load_panel parses a small CSV") {
    const std::string path = temp_path("sddp_small.csv");
    write_file(path, "y,a,b\n1,2,3\n4,5,6\n7,8,9\n10,11,12\n");
    const TimePanel panel = load_panel(path, "y");
    CHECK(panel.n() == 2);
    CHECK(panel.t() == 4);
    CHECK(panel.target(0) == 1.0);
    CHECK(panel.target(3) == 10.0);
    CHECK(panel.values(0, 0) == 2.0); // predictor a
    CHECK(panel.values(1, 3) == 12.0);
    CHECK(panel.names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_panel error cases") {
    const std::string path = temp_path("sddp_bad.csv");

    // Non-numeric cell: the error cites the offending data row.
    write_file(path, "y,a\n1,1\n2,2\n3,3\n4,4\n5,5\n6,6\n7,abc\n8,8\n");
    try {
        load_panel(path, "y");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("7") != std::string::npos);
    }

    // Ragged row.
    write_file(path, "y,a\n1,2\n3\n");
    CHECK_THROWS_AS(load_panel(path, "y"), DataError);

    // Missing target column.
    write_file(path, "y,a\n1,2\n3,4\n");
    CHECK_THROWS_AS(load_panel(path, "z"), ConfigError);

    CHECK_THROWS_AS(load_panel(temp_path("does_not_exist.csv"), "y"), DataError);
}

TEST_CASE("load_panel accepts a column index without a header") {
    const std::string path = temp_path("sddp_nohdr.csv");
    write_file(path, "1,10\n2,20\n3,30\n");
    CsvOptions options;
    options.header = false;
    const TimePanel panel = load_panel(path, "1", options);
    CHECK(panel.target(1) == 20.0);
    CHECK(panel.values(0, 2) == 3.0);
}

TEST_CASE("write_panel then load_panel is the identity") {
    const TimePanel panel = random_panel(3, 17, 99);
    const std::string path = temp_path("sddp_roundtrip.csv");
    write_panel(panel, path);
    const TimePanel back = load_panel(path, "y");
    CHECK(testutil::bit_equal(back.values, panel.values)); // bit-exact
    CHECK(testutil::bit_equal(back.target, panel.target));
    CHECK(back.names == panel.names);
}

TEST_CASE("chronological_split follows the floor rule") {
    const TimePanel p10 = random_panel(2, 10, 1);
    auto [train, test] = chronological_split(p10, 0.8);
    CHECK(train.t() == 8);
    CHECK(test.t() == 2);

    const TimePanel p5 = random_panel(2, 5, 2);
    auto [train5, test5] = chronological_split(p5, 0.5);
    CHECK(train5.t() == 2);
    CHECK(test5.t() == 3);

    CHECK_THROWS_AS(chronological_split(p10, 1.0), ConfigError);
    CHECK_THROWS_AS(chronological_split(p10, 0.0), ConfigError);
    CHECK_THROWS_AS(chronological_split(random_panel(2, 3, 3), 0.4), DataError);
}

TEST_CASE("chronological_split preserves the column multiset exactly") {
    const TimePanel panel = random_panel(4, 23, 5);
    auto [train, test] = chronological_split(panel, 0.7);
    Matrix joined(panel.n(), panel.t());
    joined.leftCols(train.t()) = train.values;
    joined.rightCols(test.t()) = test.values;
    CHECK(testutil::bit_equal(joined, panel.values));
    Vector target(panel.t());
    target.head(train.t()) = train.target;
    target.tail(test.t()) = test.target;
    CHECK(testutil::bit_equal(target, panel.target));
}

TEST_CASE("standardize hits hand values") {
    TimePanel panel;
    panel.values = Matrix::Zero(2, 3);
    panel.values.row(0) << 1, 2, 3;
    panel.values.row(1) << 5, 5, 5; // constant row
    panel.target = Vector::Zero(3);
    panel.target << 2, 4, 6;

    auto [std_panel, stats] = standardize(panel);
    CHECK(std_panel.values(0, 0) == doctest::Approx(-1.0));
    CHECK(std_panel.values(0, 1) == doctest::Approx(0.0));
    CHECK(std_panel.values(0, 2) == doctest::Approx(1.0));
    for (int t = 0; t < 3; ++t) CHECK(std_panel.values(1, t) == 0.0);
    CHECK(stats.scales(1) == 1.0);
    CHECK(stats.degenerate_rows == std::vector<int>{1});
}

TEST_CASE("standardize with train stats round-trips on test data") {
    const TimePanel full = random_panel(4, 40, 11);
    auto [train, test] = chronological_split(full, 0.75);
    auto [train_std, stats] = standardize(train);
    (void)train_std;
    auto [test_std, same_stats] = standardize(test, stats);
    (void)same_stats;
    const TimePanel back = destandardize(test_std, stats);
    CHECK((back.values - test.values).cwiseAbs().maxCoeff() <=
          1e-12 * test.values.cwiseAbs().maxCoeff());
    CHECK((back.target - test.target).cwiseAbs().maxCoeff() <=
          1e-12 * test.target.cwiseAbs().maxCoeff());
}

TEST_CASE("inject_missing basics") {
    const TimePanel panel = random_panel(100, 400, 7);

    const MaskedPanel none = inject_missing(panel, 0.0, 7);
    CHECK(none.mask.sum() == doctest::Approx(100.0 * 400.0));
    CHECK(testutil::bit_equal(none.panel.values, panel.values));

    const MaskedPanel some = inject_missing(panel, 0.25, 7);
    CHECK(some.realized_missing == doctest::Approx(0.25).epsilon(0.08));
    CHECK(std::abs(some.realized_missing - 0.25) < 0.02);
    CHECK(testutil::bit_equal(some.panel.target, panel.target));

    const MaskedPanel again = inject_missing(panel, 0.25, 7);
    CHECK(testutil::bit_equal(again.mask, some.mask)); // bit-identical

    const MaskedPanel other = inject_missing(panel, 0.25, 8);
    CHECK(!testutil::bit_equal(other.mask, some.mask));

    CHECK_THROWS_AS(inject_missing(panel, 1.0, 1), ConfigError);

    // Missing cells hold the zero sentinel.
    for (int i = 0; i < panel.n(); ++i) {
        for (int t = 0; t < panel.t(); ++t) {
            if (some.mask(i, t) == 0.0) CHECK(some.panel.values(i, t) == 0.0);
        }
    }
}

TEST_CASE("masked CSV round trip with sidecar mask") {
    const TimePanel panel = random_panel(3, 12, 13);
    const MaskedPanel masked = inject_missing(panel, 0.3, 5);

    const std::string path = temp_path("sddp_masked.csv");
    const std::string mask_path = temp_path("sddp_masked.mask.csv");
    write_masked_panel(masked, path, mask_path);

    const MaskedPanel back = load_masked_panel(path, "y", {}, mask_path);
    CHECK(testutil::bit_equal(back.mask, masked.mask));
    CHECK(testutil::bit_equal(back.panel.values, masked.panel.values));
    CHECK(testutil::bit_equal(back.panel.target, masked.panel.target));

    // Empty cells alone (no sidecar) give the same mask.
    const MaskedPanel inferred = load_masked_panel(path, "y");
    CHECK(testutil::bit_equal(inferred.mask, masked.mask));
}

TEST_CASE("standardize_masked uses observed moments only") {
    TimePanel panel;
    panel.values = Matrix::Zero(1, 4);
    panel.values.row(0) << 1, 2, 3, 100; // the 100 will be masked out
    panel.target = Vector::Zero(4);
    panel.target << 1, 2, 3, 4;
    MaskedPanel masked;
    masked.panel = panel;
    masked.panel.values(0, 3) = 0.0;
    masked.mask = Matrix::Ones(1, 4);
    masked.mask(0, 3) = 0.0;
    masked.realized_missing = 0.25;

    auto [std_masked, stats] = standardize_masked(masked);
    CHECK(stats.means(0) == doctest::Approx(2.0));
    CHECK(stats.scales(0) == doctest::Approx(1.0));
    CHECK(std_masked.panel.values(0, 3) == 0.0);
    CHECK(std_masked.panel.values(0, 2) == doctest::Approx(1.0));
}
