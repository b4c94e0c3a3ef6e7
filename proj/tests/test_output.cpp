#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "subloc/csv.hpp"
#include "subloc/svg.hpp"

using namespace subloc;

TEST_CASE("csv numbers render deterministically") {
    REQUIRE(csv_num(0.0) == "0");
    REQUIRE(csv_num(-0.0) == "0");
    REQUIRE(csv_num(1.5) == "1.5");
    REQUIRE(csv_num(0.1) == "0.1");
    REQUIRE(csv_num(-2.25) == "-2.25");
    REQUIRE(csv_num(std::numeric_limits<double>::infinity()) == "inf");
    REQUIRE(csv_num(-std::numeric_limits<double>::infinity()) == "-inf");
    REQUIRE(csv_num(std::numeric_limits<double>::quiet_NaN()) == "nan");
    REQUIRE(csv_num(1.0 / 3.0) == "0.333333333333");
    REQUIRE(csv_num(1.23456789012e12) == "1.23456789012e+12");
}

TEST_CASE("csv tables enforce width and round-trip through a file") {
    CsvTable t({"t", "value"});
    t.add_numeric_row({0.0, 1.0});
    t.add_numeric_row({0.5, -0.25});
    REQUIRE(t.row_count() == 2);
    REQUIRE(t.str() == "t,value\n0,1\n0.5,-0.25\n");
    REQUIRE_THROWS_AS(t.add_numeric_row({1.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(CsvTable({}), std::invalid_argument);

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "subloc_csv_test";
    fs::create_directories(dir);
    const std::string path = (dir / "table.csv").string();
    t.save(path);
    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    REQUIRE(content == t.str());
    fs::remove_all(dir);
}

TEST_CASE("line plots render well-formed svg") {
    LinePlot plot("demo & sketch", "t", "value<1");
    plot.add("first", {0.0, 1.0, 2.0}, {0.0, 1.0, 0.5});
    plot.add("second", {0.0, 1.0, 2.0}, {1.0, 0.25, 0.75});
    const std::string svg = plot.render();
    REQUIRE(svg.rfind("<svg", 0) == 0);
    REQUIRE(svg.find("</svg>") != std::string::npos);
    REQUIRE(svg.find("demo &amp; sketch") != std::string::npos);
    REQUIRE(svg.find("value&lt;1") != std::string::npos);
    REQUIRE(svg.find(">first</text>") != std::string::npos);
    REQUIRE(svg.find(">second</text>") != std::string::npos);

    std::size_t polylines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1))
        ++polylines;
    REQUIRE(polylines == 2);
    REQUIRE(plot.render() == svg);
}

TEST_CASE("log-scale plots break lines at invalid values") {
    LinePlot plot("tails", "r", "alpha", true);
    plot.add("alpha", {0.0, 1.0, 2.0, 3.0, 4.0}, {0.5, 0.1, 0.0, 0.01, 0.001});
    const std::string svg = plot.render();
    // the zero cannot be drawn on a log axis, so the series splits in two
    std::size_t polylines = 0;
    for (std::size_t pos = svg.find("<polyline"); pos != std::string::npos;
         pos = svg.find("<polyline", pos + 1))
        ++polylines;
    REQUIRE(polylines == 2);
    REQUIRE(svg.find("(log scale)") != std::string::npos);

    LinePlot empty("nothing", "x", "y");
    REQUIRE_NOTHROW(empty.render());
    LinePlot bad("bad", "x", "y");
    REQUIRE_THROWS_AS(bad.add("s", {0.0, 1.0}, {0.0}), std::invalid_argument);
}
