#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "vtok/video.hpp"

using namespace vtok;
namespace fs = std::filesystem;

TEST_CASE("pixel quantization") {
    CHECK(quantize_pixel(-1.0f) == 0);
    CHECK(quantize_pixel(1.0f) == 255);
    CHECK(quantize_pixel(0.0f) == 128);  // 127.5 rounds away from zero
    CHECK(quantize_pixel(-3.0f) == 0);
    CHECK(quantize_pixel(3.0f) == 255);
    for (int b = 0; b < 256; ++b) CHECK(quantize_pixel(dequantize_pixel(std::uint8_t(b))) == b);
}

TEST_CASE("NVT1 round trip") {
    const auto dir = testutil::scratch_dir("nvt");
    VideoClip c;
    c.frames = Tensor<float>({3, 2, 4, 5});
    for (std::size_t i = 0; i < c.frames.numel(); ++i) c.frames[i] = dequantize_pixel(std::uint8_t(i * 7 % 256));
    save_clip(c, dir / "a.nvt");
    const VideoClip d = load_clip(dir / "a.nvt");
    CHECK(bitwise_equal(c.frames, d.frames));
    CHECK(fs::file_size(dir / "a.nvt") == 20 + 3 * 2 * 4 * 5);
}

TEST_CASE("NVT1 error cases") {
    const auto dir = testutil::scratch_dir("nvt_err");
    {
        std::ofstream f(dir / "magic.nvt", std::ios::binary);
        f << "XXXX0000000000000000";
    }
    CHECK_THROWS_AS(load_clip(dir / "magic.nvt"), FormatError);
    VideoClip c;
    c.frames = Tensor<float>({2, 1, 4, 4});
    save_clip(c, dir / "t.nvt");
    fs::resize_file(dir / "t.nvt", 20 + 20);
    CHECK_THROWS_AS(load_clip(dir / "t.nvt"), TruncationError);
    fs::resize_file(dir / "t.nvt", 10);
    CHECK_THROWS_AS(load_clip(dir / "t.nvt"), TruncationError);
    CHECK_THROWS_AS(load_clip(dir / "missing.nvt"), IoError);
}

TEST_CASE("chunk plans") {
    SUBCASE("30 frames, 17 with overlap 4") {
        const ChunkPlan p = plan_chunks(30, 17, 4);
        REQUIRE(p.spans.size() == 2);
        CHECK(p.spans[0] == std::pair{0, 17});
        CHECK(p.spans[1] == std::pair{13, 30});
    }
    SUBCASE("short clip is one span") {
        const ChunkPlan p = plan_chunks(9, 17, 4);
        REQUIRE(p.spans.size() == 1);
        CHECK(p.spans[0] == std::pair{0, 9});
    }
    SUBCASE("no overlap tiles exactly") {
        const ChunkPlan p = plan_chunks(68, 17, 0);
        REQUIRE(p.spans.size() == 4);
        CHECK(p.spans[3] == std::pair{51, 68});
    }
    SUBCASE("last span clamped") {
        const ChunkPlan p = plan_chunks(40, 17, 4);
        REQUIRE(p.spans.size() == 3);
        CHECK(p.spans[2] == std::pair{23, 40});
    }
    CHECK_THROWS_AS(plan_chunks(30, 17, 17), ConfigError);
    CHECK_THROWS_AS(plan_chunks(0, 17, 4), ConfigError);
}

TEST_CASE("synthetic clips are deterministic per index") {
    SynthSpec s;
    s.num_clips = 3;
    s.height = s.width = 16;
    s.frames_per_clip = 5;
    s.seed = 42;
    const auto a = synthesize_clip(s, 1), b = synthesize_clip(s, 1), c = synthesize_clip(s, 2);
    CHECK(bitwise_equal(a.frames, b.frames));
    CHECK_FALSE(bitwise_equal(a.frames, c.frames));
    for (std::size_t i = 0; i < a.frames.numel(); ++i) {
        CHECK(a.frames[i] >= -1.f);
        CHECK(a.frames[i] <= 1.f);
    }
    s.max_shapes = 0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("corpus manifest and split") {
    const auto dir = testutil::scratch_dir("corpus");
    SynthSpec s;
    s.num_clips = 5;
    s.height = s.width = 8;
    s.frames_per_clip = 5;
    generate_synthetic(s, dir);
    const Corpus c = Corpus::open(dir);
    REQUIRE(c.size() == 5);
    CHECK(bitwise_equal(c.load(3).frames, [&] {
        VideoClip v = synthesize_clip(s, 3);
        for (std::size_t i = 0; i < v.frames.numel(); ++i) v.frames[i] = dequantize_pixel(quantize_pixel(v.frames[i]));
        return v.frames;
    }()));
    const auto [train, held] = c.split(2);
    CHECK(train.size() == 3);
    CHECK(held.size() == 2);
    CHECK(held.entries[0] == "clip_00003.nvt");
    CHECK_THROWS_AS(Corpus::open(dir / "nope"), IoError);
}

TEST_CASE("clip subsampling") {
    VideoClip c;
    c.frames = Tensor<float>({17, 1, 2, 2});
    c.fps = 24;
    const VideoClip s = subsample_frames(c, 4);
    CHECK(s.length() == 5);
    CHECK(s.fps == 6);
}
