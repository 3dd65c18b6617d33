#include <doctest.h>

#include <cmath>

#include "catgen/csv.hpp"
#include "catgen/errors.hpp"
#include "catgen/exec.hpp"
#include "catgen/hash.hpp"
#include "catgen/mathutil.hpp"
#include "catgen/rng.hpp"
#include "test_helpers.hpp"

using namespace catgen;

TEST_CASE("format_double round-trips exactly") {
    for (double x : {0.0, 1.0, -3.25, 0.1, 1.0 / 3.0, 1e-17, 6.02e23, -1.2345678901234567e-5}) {
        std::string s = format_double(x);
        CHECK(std::strtod(s.c_str(), nullptr) == x);
    }
}

TEST_CASE("csv reader handles header, absent cells, and strict errors") {
    auto dir = make_temp_dir("csv");
    write_file(dir / "t.csv", "a,b\n1,2\n,NA\n");
    CsvTable t = read_csv(dir / "t.csv");
    CHECK(t.header.size() == 2);
    CHECK(t.rows.size() == 2);
    CHECK(t.column_index("b") == 1);
    CHECK(t.column_index("missing") == -1);
    CHECK(is_absent_cell(t.rows[1][0]));
    CHECK(is_absent_cell(t.rows[1][1]));
    CHECK(parse_numeric_cell(t.rows[0][1], "b", 1) == 2.0);
    CHECK_THROWS_AS(parse_numeric_cell("1.2.3", "b", 1), DataError);

    write_file(dir / "ragged.csv", "a,b\n1\n");
    CHECK_THROWS_AS(read_csv(dir / "ragged.csv"), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("derive_seed is stable and stream-separated") {
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
    CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}

TEST_CASE("for_each_index: serial and OpenMP agree bitwise and propagate errors") {
    const int n = 5000;
    std::vector<double> serial(n), parallel(n);
    auto work = [](std::int64_t i) {
        double x = std::sin(static_cast<double>(i)) * 1e-3;
        return std::exp(x) + std::sqrt(static_cast<double>(i));
    };
    for_each_index(n, Exec::Serial, [&](std::int64_t i) { serial[i] = work(i); });
    for_each_index(n, Exec::OpenMP, [&](std::int64_t i) { parallel[i] = work(i); });
    CHECK(serial == parallel);

    CHECK_THROWS_AS(for_each_index(100, Exec::OpenMP,
                                   [](std::int64_t i) {
                                       if (i == 37) throw DataError("boom");
                                   }),
                    DataError);
}

TEST_CASE("normal quantile matches known values") {
    CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-9));
    CHECK(normal_quantile(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-9));
}

TEST_CASE("fnv1a64 digest is stable") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") != fnv1a64("b"));
    CHECK(to_hex(0x1234abcdULL) == "000000001234abcd");
}
