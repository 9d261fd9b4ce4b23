#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "f2f/checkpoint.hpp"
#include "f2f/config.hpp"

using namespace f2f;

namespace {
std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("f2f_ckpt_" + name)).string();
}
}  // namespace

TEST_CASE("tensor archive round trips exactly") {
    Rng rng(1);
    std::vector<std::pair<std::string, Tensor>> tensors{
        {"a", rng.normal_tensor({2, 3})},
        {"b.weight", rng.normal_tensor({4})},
        {"c", Tensor({1, 1, 1}, -0.f)},
    };
    std::string path = temp_file("archive.f2ft");
    save_tensors(path, tensors);
    auto back = load_tensors(path);
    REQUIRE(back.size() == 3u);
    for (const auto& [name, t] : tensors) {
        REQUIRE(back.count(name) == 1u);
        REQUIRE(back.at(name).shape == t.shape);
        REQUIRE(back.at(name).data == t.data);
    }
    REQUIRE_THROWS(load_tensors(temp_file("missing.f2ft")));
}

TEST_CASE("param checkpoint restores weights and metadata") {
    Rng rng(2);
    nn::Linear src(6, 4, rng), dst(6, 4, rng);
    nn::ParamList src_pl, dst_pl;
    src.params(src_pl, "layer");
    dst.params(dst_pl, "layer");
    REQUIRE(src.W->value.data != dst.W->value.data);

    std::string path = temp_file("linear.f2ft");
    save_params(path, src_pl, {{"kind", "linear"}, {"steps", 12}});
    load_params(path, dst_pl);
    REQUIRE(dst.W->value.data == src.W->value.data);
    REQUIRE(dst.b->value.data == src.b->value.data);

    nlohmann::json meta = load_metadata(path);
    REQUIRE(meta.at("kind") == "linear");
    REQUIRE(meta.at("steps") == 12);
}

TEST_CASE("loading flags missing tensors and shape mismatches") {
    Rng rng(3);
    nn::Linear small(3, 2, rng), renamed(3, 2, rng), wide(5, 2, rng);
    nn::ParamList pl_small, pl_renamed, pl_wide;
    small.params(pl_small, "x");
    renamed.params(pl_renamed, "y");
    wide.params(pl_wide, "x");

    std::string path = temp_file("strict.f2ft");
    save_params(path, pl_small, {});
    REQUIRE_THROWS(load_params(path, pl_renamed));
    REQUIRE_THROWS(load_params(path, pl_wide));
}

TEST_CASE("run config snapshot round trips and rejects unknown keys") {
    RunConfig c;
    c.guidance_gs = 12.f;
    c.strength = 0.5f;
    c.prox_enabled = true;
    c.data_root = "data/toy";
    c.seed = 77;
    std::string path = temp_file("config.json");
    save_config(path, c);
    RunConfig back = load_config(path);
    REQUIRE(back.guidance_gs == 12.f);
    REQUIRE(back.strength == 0.5f);
    REQUIRE(back.prox_enabled);
    REQUIRE(back.data_root == "data/toy");
    REQUIRE(back.seed == 77u);
    REQUIRE(back.t_train == 1000);

    nlohmann::json bad{{"guidance", {{"GS", 4.0}, {"bogus", 1}}}};
    REQUIRE_THROWS_AS(config_from_json(bad), std::invalid_argument);
    nlohmann::json bad_top{{"not_a_key", 1}};
    REQUIRE_THROWS_AS(config_from_json(bad_top), std::invalid_argument);
}

TEST_CASE("dotted-path overrides set nested values") {
    RunConfig c;
    apply_override(c, "guidance.GS", "12.0");
    apply_override(c, "guidance.S", "0.5");
    apply_override(c, "guidance.prox_enabled", "true");
    apply_override(c, "alpha", "0.75");
    apply_override(c, "dataset.root", "elsewhere");
    REQUIRE(c.guidance_gs == 12.f);
    REQUIRE(c.strength == 0.5f);
    REQUIRE(c.prox_enabled);
    REQUIRE(c.alpha == 0.75f);
    REQUIRE(c.data_root == "elsewhere");
    REQUIRE_THROWS_AS(apply_override(c, "guidance.nope", "1"), std::invalid_argument);

    GuidanceConfig g = c.guidance();
    REQUIRE(g.guidance_scale == 12.f);
    REQUIRE(g.strength == 0.5f);
    REQUIRE(g.prox_enabled);
}
