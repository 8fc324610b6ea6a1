#include <doctest.h>

#include <fstream>

#include "helpers.hpp"
#include "vtok/config.hpp"

using namespace vtok;

TEST_CASE("config sections and defaults") {
    const auto j = nlohmann::json::parse(R"({
        "seed": 9,
        "data": {"corpus": "c", "synth": {"num_clips": 5, "frames": 9}},
        "model": {"widths": [8, 16, 32], "res_units": 1},
        "stage": {"k": 8, "budgets": [3, 2, 1]},
        "optim": {"lr": 0.001, "batch": 4, "discriminator": {"lr": 0.002}},
        "losses": {"kl": 1e-6},
        "logging": {"log_every": 5}
    })");
    const Config c = Config::from_json(j);
    CHECK(c.seed == 9);
    CHECK(c.data.synth.num_clips == 5);
    CHECK(c.model.widths == std::vector<int>{8, 16, 32});
    CHECK(c.optim.generator.lr == 0.001);
    CHECK(c.optim.discriminator.lr == 0.002);
    CHECK(c.optim.generator.beta2 == 0.99);
    CHECK(c.losses.weights(4).gan == 0.1);
    CHECK(c.losses.weights(8).gan == 0.0);
    CHECK(c.losses.weights(4).kl == 1e-6);
    CHECK(Config::from_json(c.to_json()).to_json() == c.to_json());
    CHECK(Config::from_json(c.to_json()).fingerprint() == c.fingerprint());
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"bogus": {}})")), ConfigError);
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"optim": {"batch": 0}})")), ConfigError);
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"model": {"widths": "x"}})")), ConfigError);
    CHECK_THROWS_AS(Config::from_json(nlohmann::json::parse(R"({"model": {"widths": [8, 16]}})")), ConfigError);
    CHECK_THROWS_AS(Config::load("/nonexistent/config.json"), ConfigError);
    const auto dir = testutil::scratch_dir("cfg");
    std::ofstream(dir / "bad.json") << "{ nope";
    CHECK_THROWS_AS(Config::load(dir / "bad.json"), ConfigError);
}
