#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ditpaint/pipeline.hpp"
#include "ditpaint/selftest.hpp"

using namespace ditpaint;
namespace fs = std::filesystem;

namespace {

TrainConfig smoke_config(size_t iters = 3) {
    TrainConfig cfg = TrainConfig::tiny();
    cfg.model.num_blocks = 1;
    cfg.model.num_heads = 2;
    cfg.model.head_dim = 8;
    cfg.model.t_freq_dim = 32;
    cfg.stages = {StageConfig{16, 16, 5, iters}};
    cfg.batch_size = 2;
    cfg.checkpoint_every = 0;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("defaults plus overrides") {
        const TrainConfig cfg = parse_train_config_text(
            "blocks = 2\nheads=2\nhead_dim = 8\n# comment line\nlr = 0.001  # inline\n"
            "stages = 1\nstage1.width = 32\nstage1.height=48\nstage1.frames = 9\n"
            "stage1.iters = 7\nmask.drift = 4.5\n");
        CHECK(cfg.model.num_blocks == 2);
        CHECK(cfg.model.head_dim == 8);
        CHECK(cfg.lr == doctest::Approx(0.001));
        REQUIRE(cfg.stages.size() == 1);
        CHECK(cfg.stages[0].width == 32);
        CHECK(cfg.stages[0].height == 48);
        CHECK(cfg.stages[0].iters == 7);
        CHECK(cfg.mask.drift == doctest::Approx(4.5));
    }
    SUBCASE("unknown keys rejected") {
        CHECK_THROWS_WITH_AS(parse_train_config_text("learning_rate = 0.1\n"),
                             doctest::Contains("unknown key"), std::invalid_argument);
    }
    SUBCASE("duplicate keys rejected") {
        CHECK_THROWS_WITH_AS(parse_train_config_text("lr = 0.1\nlr = 0.2\n"),
                             doctest::Contains("duplicate"), std::invalid_argument);
    }
    SUBCASE("malformed lines rejected") {
        CHECK_THROWS_AS(parse_train_config_text("just a line without equals\n"),
                        std::invalid_argument);
        CHECK_THROWS_AS(parse_train_config_text("lr =\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_train_config_text("blocks = abc\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_train_config_text("output_mode = wrong\n"), std::invalid_argument);
    }
    SUBCASE("validation catches bad stage geometry") {
        CHECK_THROWS_AS(parse_train_config_text("stage1.width = 20\n"), std::invalid_argument);
        CHECK_THROWS_AS(parse_train_config_text("stage1.frames = 8\n"), std::invalid_argument);
    }
}

TEST_CASE("training smoke run is finite and deterministic") {
    const TrainConfig cfg = smoke_config();
    SyntheticDataSource data;
    const TrainResult a = train(cfg, data);
    REQUIRE(a.losses.size() == 3);
    for (float l : a.losses) CHECK(std::isfinite(l));
    CHECK(a.checkpoint.step == 3);

    SyntheticDataSource data2;
    const TrainResult b = train(cfg, data2);
    for (size_t i = 0; i < a.losses.size(); ++i) CHECK(a.losses[i] == b.losses[i]);
    for (const auto& [name, t] : a.checkpoint.params) {
        const auto& u = b.checkpoint.params.at(name);
        for (size_t i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);  // bitwise
    }
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
    TrainConfig cfg = smoke_config(2);
    cfg.lr = 0.0;
    cfg.weight_decay = 0.0;
    SyntheticDataSource data;
    const TrainResult r = train(cfg, data);
    RngStream init_rng(cfg.seed, 0xd17);
    const auto fresh = init_params<float>(cfg.model, init_rng);
    for (const auto& [name, t] : fresh) {
        const auto& u = r.checkpoint.params.at(name);
        for (size_t i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
    }
}

TEST_CASE("checkpoint roundtrip is bitwise") {
    const fs::path path = fs::temp_directory_path() / "ditpaint_test_ckpt.dtck";
    TrainConfig cfg = smoke_config(1);
    SyntheticDataSource data;
    const TrainResult r = train(cfg, data);
    save_checkpoint(r.checkpoint, path);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.step == r.checkpoint.step);
    CHECK(loaded.config.num_blocks == cfg.model.num_blocks);
    CHECK(loaded.config.head_dim == cfg.model.head_dim);
    for (const auto& [name, t] : r.checkpoint.params) {
        const auto& u = loaded.params.at(name);
        REQUIRE(u.shape() == t.shape());
        for (size_t i = 0; i < t.size(); ++i) CHECK(t[i] == u[i]);
    }
    // corrupting the magic makes loading fail loudly
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::invalid_argument);
    fs::remove(path);
}

TEST_CASE("resume continues the step counter") {
    TrainConfig cfg = smoke_config(2);
    SyntheticDataSource data;
    const TrainResult first = train(cfg, data);
    CHECK(first.checkpoint.step == 2);
    SyntheticDataSource data2;
    const TrainResult second = train(cfg, data2, nullptr, nullptr, &first.checkpoint);
    CHECK(second.checkpoint.step == 4);
}

TEST_CASE("inpainting composites only inside the mask") {
    TrainConfig cfg = smoke_config(1);
    SyntheticDataSource data;
    const TrainResult r = train(cfg, data);

    RngStream vrng(5, 0);
    const VideoTensor video = gen_synthetic_video(vrng, 16, 16, 5, 1);
    MaskSpec spec;
    spec.kind = MaskKind::Stationary;
    spec.count = 1;
    RngStream mrng(6, 0);
    const MaskTensor mask = gen_masks(mrng, 16, 16, 5, spec);

    InpaintOptions opts;
    opts.steps = 2;
    const VideoTensor out = inpaint_video(video, mask, r.checkpoint, opts);
    REQUIRE(out.same_shape(video));
    size_t masked = 0;
    for (size_t i = 0; i < 16; ++i)
        for (size_t j = 0; j < 16; ++j)
            for (size_t f = 0; f < 5; ++f) {
                if (mask.at4(i, j, f, 0) > 0.5f) {
                    ++masked;
                } else {
                    for (size_t c = 0; c < 3; ++c)
                        CHECK(out.at4(i, j, f, c) == video.at4(i, j, f, c));  // bitwise passthrough
                }
            }
    CHECK(masked > 0);
    for (size_t i = 0; i < out.size(); ++i) CHECK(std::isfinite(out[i]));

    // deterministic per seed
    const VideoTensor out2 = inpaint_video(video, mask, r.checkpoint, opts);
    for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == out2[i]);
}

TEST_CASE("inpaint uses the sliding-window plan for long sequences") {
    TrainConfig cfg = smoke_config(1);
    SyntheticDataSource data;
    const TrainResult r = train(cfg, data);
    RngStream vrng(7, 0);
    const VideoTensor video = gen_synthetic_video(vrng, 16, 16, 21, 1);  // n' = 6 latent frames
    MaskSpec spec;
    spec.count = 1;
    RngStream mrng(8, 0);
    const MaskTensor mask = gen_masks(mrng, 16, 16, 21, spec);
    InpaintOptions opts;
    opts.steps = 2;
    opts.window = 4;
    opts.stride = 2;
    const VideoTensor out = inpaint_video(video, mask, r.checkpoint, opts);
    CHECK(out.same_shape(video));
    for (size_t i = 0; i < out.size(); ++i) CHECK(std::isfinite(out[i]));
}

TEST_CASE("directory data source crops and downscales") {
    const fs::path root = fs::temp_directory_path() / "ditpaint_test_data";
    fs::remove_all(root);
    RngStream vrng(9, 0);
    write_frames(gen_synthetic_video(vrng, 32, 32, 17, 1), root / "video_000");
    DirectoryDataSource src(root);
    RngStream rng(10, 0);
    const VideoTensor v = src.sample(rng, 16, 16, 5);
    CHECK(v.shape() == std::vector<size_t>{16, 16, 5, 3});
    RngStream rng2(11, 0);
    CHECK_THROWS_AS(src.sample(rng2, 16, 16, 21), std::invalid_argument);  // too few frames
    CHECK_THROWS_AS(DirectoryDataSource(root / "missing"), std::invalid_argument);
    fs::remove_all(root);
}

TEST_CASE("selftest invariants all pass") {
    for (const auto& c : selftest_cases()) {
        INFO(c.name);
        CHECK(c.run());
    }
}
