#include <doctest.h>

#include "helpers.hpp"
#include "vtok/checkpoint.hpp"
#include "vtok/video.hpp"

using namespace vtok;
namespace fs = std::filesystem;

TEST_CASE("tokenizer checkpoints round-trip with flags and lineage") {
    const auto dir = testutil::scratch_dir("ckpt");
    const TokenizerModel m = testutil::tiny_model(16);
    CheckpointInfo info;
    info.parent_hash = "0123456789abcdef";
    info.step = 17;
    info.trainer = {{"note", "x"}};
    info.extra_tensors.push_back({"opt.m.something", testutil::randn<float>({3}, 1), 0, false});
    save_tokenizer(dir / "m.vtck", m, info);

    CheckpointInfo back;
    const TokenizerModel r = load_tokenizer(dir / "m.vtck", &back);
    CHECK(r.k() == 16);
    CHECK(back.parent_hash == info.parent_hash);
    CHECK(back.step == 17);
    CHECK(back.trainer["note"] == "x");
    REQUIRE(back.extra_tensors.size() == 1);
    CHECK(back.extra_tensors[0].name == "opt.m.something");
    const auto a = m.parameters(), b = r.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i]->name == b[i]->name);
        CHECK(a[i]->frozen == b[i]->frozen);
        CHECK(a[i]->stage == b[i]->stage);
        CHECK(bitwise_equal(a[i]->value, b[i]->value));
    }
}

TEST_CASE("ablation lineage survives a round trip") {
    const auto dir = testutil::scratch_dir("ckpt_ab");
    const TokenizerModel m = testutil::tiny_model(8, false);
    save_tokenizer(dir / "m.vtck", m);
    CHECK(growth_mixing(load_tokenizer(dir / "m.vtck")) == std::vector<bool>{false});
}

TEST_CASE("checkpoint corruption is reported") {
    const auto dir = testutil::scratch_dir("ckpt_bad");
    save_tokenizer(dir / "m.vtck", testutil::tiny_model(4));
    fs::resize_file(dir / "m.vtck", fs::file_size(dir / "m.vtck") - 8);
    CHECK_THROWS_AS(load_tokenizer(dir / "m.vtck"), TruncationError);
    save_image_model(dir / "i.vtck", ImageAutoencoder::build(testutil::tiny_plan(4), 1));
    CHECK_THROWS_AS(load_tokenizer(dir / "i.vtck"), FormatError);
    CHECK_THROWS_AS(read_archive(dir / "none.vtck"), IoError);
}

TEST_CASE("file hashes change with content") {
    const auto dir = testutil::scratch_dir("hash");
    save_tokenizer(dir / "a.vtck", testutil::tiny_model(4, true, 1));
    save_tokenizer(dir / "b.vtck", testutil::tiny_model(4, true, 2));
    CHECK(hash_file(dir / "a.vtck") == hash_file(dir / "a.vtck"));
    CHECK(hash_file(dir / "a.vtck") != hash_file(dir / "b.vtck"));
    Fnv1a h;
    h.update("a");
    CHECK(h.value() == 0xaf63dc4c8601ec8cULL);
}
