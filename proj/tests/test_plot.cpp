#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mcm/errors.hpp"
#include "mcm/plot.hpp"
#include "mcm/rng.hpp"

using namespace mcm;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(std::string p) : path(std::move(p)) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool has_png_signature(const std::string& bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8) return false;
    for (int i = 0; i < 8; ++i)
        if (static_cast<unsigned char>(bytes[size_t(i)]) != sig[i]) return false;
    return true;
}

// IHDR dimensions live at fixed offsets right after the signature.
long png_width(const std::string& b) {
    return (long(static_cast<unsigned char>(b[16])) << 24) |
           (long(static_cast<unsigned char>(b[17])) << 16) |
           (long(static_cast<unsigned char>(b[18])) << 8) |
           long(static_cast<unsigned char>(b[19]));
}
long png_height(const std::string& b) {
    return (long(static_cast<unsigned char>(b[20])) << 24) |
           (long(static_cast<unsigned char>(b[21])) << 16) |
           (long(static_cast<unsigned char>(b[22])) << 8) |
           long(static_cast<unsigned char>(b[23]));
}

}  // namespace

TEST_CASE("line chart writes a real PNG of the requested size, deterministically") {
    Series a{"loss_g", {}, {}};
    Series b{"loss_d", {}, {}};
    for (long i = 0; i < 50; ++i) {
        a.xs.push_back(double(i));
        a.ys.push_back(1.0 / (1.0 + double(i)));
        b.xs.push_back(double(i));
        b.ys.push_back(0.5 + 0.1 * std::sin(double(i)));
    }

    TempFile f1("test_chart1.png"), f2("test_chart2.png");
    write_line_chart("losses", {a, b}, f1.path, 720, 440);
    write_line_chart("losses", {a, b}, f2.path, 720, 440);

    std::string bytes = read_bytes(f1.path);
    CHECK(has_png_signature(bytes));
    CHECK(png_width(bytes) == 720);
    CHECK(png_height(bytes) == 440);
    CHECK(bytes == read_bytes(f2.path));

    // A different curve must change the image.
    a.ys[10] += 0.4;
    TempFile f3("test_chart3.png");
    write_line_chart("losses", {a, b}, f3.path, 720, 440);
    CHECK(read_bytes(f3.path) != bytes);
}

TEST_CASE("non-finite points break the line instead of poisoning the chart") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    Series s{"metric", {0, 1, 2, 3, 4}, {1.0, nan, 2.0, nan, 1.5}};
    TempFile f("test_chart_nan.png");
    CHECK_NOTHROW(write_line_chart("with gaps", {s}, f.path));
    CHECK(has_png_signature(read_bytes(f.path)));

    SUBCASE("an all-NaN series still produces a chart") {
        Series dead{"dead", {0, 1}, {nan, nan}};
        TempFile g("test_chart_dead.png");
        CHECK_NOTHROW(write_line_chart("empty", {dead}, g.path));
    }
    SUBCASE("a constant series gets a padded axis rather than a zero range") {
        Series flat{"flat", {0, 1, 2}, {3.0, 3.0, 3.0}};
        TempFile g("test_chart_flat.png");
        CHECK_NOTHROW(write_line_chart("flat", {flat}, g.path));
    }
}

TEST_CASE("chart input validation") {
    Series bad{"bad", {0, 1}, {1.0}};
    CHECK_THROWS_AS(write_line_chart("x", {bad}, "never_written.png"), ParameterError);
    Series ok{"ok", {0}, {1.0}};
    CHECK_THROWS_AS(write_line_chart("x", {ok}, "never_written.png", 40, 30), ParameterError);
    CHECK_THROWS_AS(write_line_chart("x", {ok}, "no_such_dir_xyz/chart.png"), IoError);
}

TEST_CASE("frame grid tiles clips with the documented geometry") {
    auto g = derive_rng(4, "test.plot.grid");
    std::vector<Tensor> clips;
    for (int i = 0; i < 3; ++i) clips.push_back(Tensor::randn({4, 1, 16, 16}, g, 0.5));

    TempFile f("test_grid.png");
    write_frame_grid(clips, f.path);
    std::string bytes = read_bytes(f.path);
    CHECK(has_png_signature(bytes));
    // F frames wide, one row per clip, 2-pixel gaps all around.
    CHECK(png_width(bytes) == 4 * (16 + 2) + 2);
    CHECK(png_height(bytes) == 3 * (16 + 2) + 2);

    SUBCASE("clip cap respected") {
        TempFile f2("test_grid_cap.png");
        write_frame_grid(clips, f2.path, 2);
        CHECK(png_height(read_bytes(f2.path)) == 2 * (16 + 2) + 2);
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(write_frame_grid({}, "never_written.png"), ParameterError);
        std::vector<Tensor> flat{Tensor::zeros({16, 16})};
        CHECK_THROWS_AS(write_frame_grid(flat, "never_written.png"), ShapeError);
        std::vector<Tensor> mixed{clips[0], Tensor::zeros({2, 1, 16, 16})};
        CHECK_THROWS_AS(write_frame_grid(mixed, "never_written.png"), ShapeError);
    }
}
