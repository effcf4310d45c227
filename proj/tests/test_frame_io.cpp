#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <thread>

#include "crossgap/errors.hpp"
#include "crossgap/frame.hpp"
#include "test_util.hpp"

using namespace crossgap;
using testutil::TempDir;

namespace {

void write_pgm_bytes(const std::filesystem::path& file, int w, int h, const std::vector<unsigned char>& px,
                     int maxval = 255) {
    std::ofstream out(file, std::ios::binary);
    out << "P5\n# synthetic\n" << w << " " << h << "\n" << maxval << "\n";
    out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

}  // namespace

TEST_CASE("pgm directory stream: order, timestamps, normalization") {
    TempDir dir("pgmdir");
    for (int i = 0; i < 3; ++i) {
        std::vector<unsigned char> px(64, static_cast<unsigned char>(i * 100));
        px[0] = 255;
        px[1] = 0;
        char name[32];
        std::snprintf(name, sizeof(name), "f%03d.pgm", i);
        write_pgm_bytes(dir.path() / name, 8, 8, px);
    }
    StreamConfig cfg;
    cfg.source = dir.path().string();
    cfg.fps = 8.0;
    auto s = open_stream(cfg);
    CHECK(s->width() == 8);
    int n = 0;
    double expected_t[] = {0.0, 0.125, 0.25};
    while (auto f = s->next()) {
        CHECK(f->index == n);
        CHECK(f->timestamp == doctest::Approx(expected_t[n]).epsilon(1e-12));
        CHECK(f->luma[0] == doctest::Approx(1.0));
        CHECK(f->luma[1] == doctest::Approx(0.0));
        ++n;
    }
    CHECK(n == 3);
}

TEST_CASE("pgm round trip is bit-identical") {
    TempDir dir("pgmrt");
    Frame f = testutil::random_frame(17, 9, 42);
    write_pgm(dir.path() / "a.pgm", f);
    Frame g = read_pgm(dir.path() / "a.pgm");
    REQUIRE(g.luma.size() == f.luma.size());
    for (std::size_t i = 0; i < f.luma.size(); ++i) CHECK(g.luma[i] == f.luma[i]);
}

TEST_CASE("pgm errors: magic, maxval, truncation") {
    TempDir dir("pgmerr");
    std::vector<unsigned char> px(16, 7);
    {
        std::ofstream out(dir.path() / "p2.pgm");
        out << "P2\n4 4\n255\n";
    }
    CHECK_THROWS_AS(read_pgm(dir.path() / "p2.pgm"), DataError);

    write_pgm_bytes(dir.path() / "wide.pgm", 4, 4, std::vector<unsigned char>(32, 1), 65535);
    CHECK_THROWS_AS(read_pgm(dir.path() / "wide.pgm"), DataError);

    {
        std::ofstream out(dir.path() / "trunc.pgm", std::ios::binary);
        out << "P5\n4 4\n255\n";
        out.write("abc", 3);
    }
    CHECK_THROWS_AS(read_pgm(dir.path() / "trunc.pgm"), DataError);
}

TEST_CASE("dimension mismatch mid-stream is an error") {
    TempDir dir("pgmmix");
    write_pgm_bytes(dir.path() / "a.pgm", 4, 4, std::vector<unsigned char>(16, 1));
    write_pgm_bytes(dir.path() / "b.pgm", 8, 8, std::vector<unsigned char>(64, 1));
    StreamConfig cfg;
    cfg.source = dir.path().string();
    auto s = open_stream(cfg);
    CHECK(s->next().has_value());
    CHECK_THROWS_AS(s->next(), DataError);
}

TEST_CASE("y4m mono write/read and 420 chroma skip") {
    TempDir dir("y4m");
    std::vector<Frame> frames;
    for (int i = 0; i < 7; ++i) frames.push_back(testutil::random_frame(16, 12, 100 + i, i));
    write_y4m(dir.path() / "clip.y4m", frames, 8.0);

    StreamConfig cfg;
    cfg.source = (dir.path() / "clip.y4m").string();
    cfg.format = StreamFormat::kY4m;
    cfg.fps = 8.0;
    auto s = open_stream(cfg);
    int n = 0;
    while (auto f = s->next()) {
        for (std::size_t i = 0; i < f->luma.size(); ++i) CHECK(f->luma[i] == frames[n].luma[i]);
        ++n;
    }
    CHECK(n == 7);

    // Hand-built 4:2:0 file: Y plane used, chroma ignored.
    {
        std::ofstream out(dir.path() / "c420.y4m", std::ios::binary);
        out << "YUV4MPEG2 W4 H2 F8:1 Ip A1:1 C420jpeg\nFRAME\n";
        unsigned char y[8] = {0, 51, 102, 153, 204, 255, 0, 51};
        unsigned char uv[4] = {9, 9, 9, 9};
        out.write(reinterpret_cast<char*>(y), 8);
        out.write(reinterpret_cast<char*>(uv), 4);
    }
    cfg.source = (dir.path() / "c420.y4m").string();
    auto c = open_stream(cfg);
    auto f = c->next();
    REQUIRE(f.has_value());
    CHECK(f->luma[1] == doctest::Approx(51.0 / 255.0));
    CHECK_FALSE(c->next().has_value());
}

TEST_CASE("decimation keeps original indices and timestamps") {
    TempDir dir("dec");
    std::vector<Frame> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(testutil::random_frame(16, 12, i, i));
    write_y4m(dir.path() / "clip.y4m", frames, 8.0);
    StreamConfig cfg;
    cfg.source = (dir.path() / "clip.y4m").string();
    cfg.format = StreamFormat::kY4m;
    cfg.fps = 8.0;
    cfg.decimation = 3;
    auto s = open_stream(cfg);
    std::vector<std::int64_t> indices;
    std::vector<double> stamps;
    while (auto f = s->next()) {
        indices.push_back(f->index);
        stamps.push_back(f->timestamp);
    }
    CHECK(indices == std::vector<std::int64_t>{0, 3, 6, 9});
    CHECK(stamps[1] == doctest::Approx(3.0 / 8.0));
    // k=3 at 8 fps: inter-frame gap 0.375 s.
    CHECK(stamps[1] - stamps[0] == doctest::Approx(0.375));
}

TEST_CASE("decimation composes multiplicatively") {
    TempDir dir("dec2");
    std::vector<Frame> frames;
    for (int i = 0; i < 24; ++i) frames.push_back(testutil::random_frame(16, 12, i, i));
    write_y4m(dir.path() / "clip.y4m", frames, 8.0);
    StreamConfig cfg;
    cfg.source = (dir.path() / "clip.y4m").string();
    cfg.format = StreamFormat::kY4m;

    auto once = decimate(decimate(open_stream(cfg), 2), 3);
    auto direct = decimate(open_stream(cfg), 6);
    while (true) {
        auto a = once->next();
        auto b = direct->next();
        CHECK(a.has_value() == b.has_value());
        if (!a) break;
        CHECK(a->index == b->index);
    }
}

TEST_CASE("raw8 stream and truncation error") {
    TempDir dir("raw");
    {
        std::ofstream out(dir.path() / "v.raw", std::ios::binary);
        std::vector<char> bytes(12 * 2, 3);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    StreamConfig cfg;
    cfg.source = (dir.path() / "v.raw").string();
    cfg.format = StreamFormat::kRaw8;
    cfg.width = 4;
    cfg.height = 3;
    auto s = open_stream(cfg);
    CHECK(s->next().has_value());
    CHECK(s->next().has_value());
    CHECK_FALSE(s->next().has_value());

    {
        std::ofstream out(dir.path() / "bad.raw", std::ios::binary);
        std::vector<char> bytes(12 + 5, 3);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    cfg.source = (dir.path() / "bad.raw").string();
    auto t = open_stream(cfg);
    CHECK(t->next().has_value());
    CHECK_THROWS_AS(t->next(), DataError);
}

TEST_CASE("stream config validation") {
    StreamConfig cfg;
    cfg.source = "nowhere";
    cfg.fps = 0.0;
    CHECK_THROWS_AS(open_stream(cfg), DataError);
    cfg.fps = 8.0;
    cfg.decimation = 0;
    CHECK_THROWS_AS(open_stream(cfg), DataError);
    cfg.decimation = 1;
    CHECK_THROWS_AS(open_stream(cfg), DataError);  // missing directory
}

TEST_CASE("bounded queue blocks, preserves order, drops nothing") {
    BoundedQueue<int> q(2);
    std::thread producer([&q] {
        for (int i = 0; i < 200; ++i) q.push(i);
        q.close();
    });
    int expect = 0;
    while (auto v = q.pop()) {
        CHECK(*v == expect);
        ++expect;
        if (expect % 16 == 0) std::this_thread::sleep_for(std::chrono::microseconds(100));
    }
    CHECK(expect == 200);
    producer.join();
}

TEST_CASE("queued stream delivers every frame in order") {
    TempDir dir("queued");
    std::vector<Frame> frames;
    for (int i = 0; i < 40; ++i) frames.push_back(testutil::random_frame(16, 12, i, i));
    write_y4m(dir.path() / "clip.y4m", frames, 8.0);
    StreamConfig cfg;
    cfg.source = (dir.path() / "clip.y4m").string();
    cfg.format = StreamFormat::kY4m;
    QueuedStream s(open_stream(cfg), 4);
    std::int64_t expect = 0;
    while (auto f = s.next()) {
        CHECK(f->index == expect);
        ++expect;
    }
    CHECK(expect == 40);
}
