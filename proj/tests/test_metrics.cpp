#include <doctest.h>

#include <filesystem>

#include "ditpaint/metrics.hpp"

using namespace ditpaint;
namespace fs = std::filesystem;

TEST_CASE("psnr closed forms") {
    VideoTensor a({16, 16, 1, 3}), b({16, 16, 1, 3});
    for (size_t i = 0; i < a.size(); ++i) {
        a[i] = 0.5f;
        b[i] = 0.0f;
    }
    CHECK(psnr(a, b) == doctest::Approx(6.0206).epsilon(1e-4));
    for (size_t i = 0; i < b.size(); ++i) b[i] = 0.4f;  // uniform error 0.1
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(psnr(a, a) == 99.0);
    CHECK_THROWS_AS(psnr(a, VideoTensor({8, 8, 1, 3})), std::invalid_argument);
}

TEST_CASE("ssim properties") {
    RngStream rng(1, 0);
    VideoTensor x({24, 24, 2, 3});
    for (size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

    // inverted image: strongly anticorrelated, ssim well below 1
    VideoTensor inv(x.shape());
    for (size_t i = 0; i < x.size(); ++i) inv[i] = 1.0f - x[i];
    CHECK(ssim(x, inv) < 0.2);

    // constant luminance shift lowers ssim but less than inversion
    VideoTensor shifted(x.shape());
    for (size_t i = 0; i < x.size(); ++i) shifted[i] = x[i] * 0.5f;
    const double s = ssim(x, shifted);
    CHECK(s < 1.0);
    CHECK(s > ssim(x, inv));

    CHECK_THROWS_AS(ssim(VideoTensor({8, 24, 1, 3}), VideoTensor({8, 24, 1, 3})),
                    std::invalid_argument);
}

TEST_CASE("resize preserves constants and interpolates ramps") {
    VideoTensor c({16, 16, 1, 3});
    for (size_t i = 0; i < c.size(); ++i) c[i] = 0.3f;
    auto small = resize_video(c, 8, 12);
    CHECK(small.shape() == std::vector<size_t>{8, 12, 1, 3});
    for (size_t i = 0; i < small.size(); ++i) CHECK(small[i] == doctest::Approx(0.3).epsilon(1e-6));

    // a horizontal ramp stays monotone after resize
    VideoTensor ramp({16, 32, 1, 3});
    for (size_t i = 0; i < 16; ++i)
        for (size_t j = 0; j < 32; ++j)
            for (size_t ch = 0; ch < 3; ++ch)
                ramp.at4(i, j, 0, ch) = static_cast<float>(j) / 31.0f;
    auto r = resize_video(ramp, 16, 16);
    for (size_t j = 0; j + 1 < 16; ++j) CHECK(r.at4(8, j, 0, 0) < r.at4(8, j + 1, 0, 0));
}

TEST_CASE("evaluate scores aligned directories and reports JSON") {
    const fs::path root = fs::temp_directory_path() / "ditpaint_test_eval";
    fs::remove_all(root);
    RngStream rng(2, 0);
    const VideoTensor gt = gen_synthetic_video(rng, 16, 16, 5, 1);
    VideoTensor pred = gt;
    for (size_t i = 0; i < pred.size(); ++i)
        pred[i] = std::min(1.0f, pred[i] + 0.1f);
    write_frames(gt, root / "gt" / "video_000");
    write_frames(pred, root / "pred" / "video_000");
    const EvalReport rep = evaluate(root / "pred", root / "gt");
    REQUIRE(rep.videos.size() == 1);
    CHECK(rep.videos[0].name == "video_000");
    CHECK(rep.mean_psnr > 15.0);
    CHECK(rep.mean_psnr < 99.0);
    CHECK(rep.mean_ssim > 0.5);
    const std::string js = rep.to_json();
    CHECK(js.find("\"mean_psnr\"") != std::string::npos);
    CHECK(js.find("video_000") != std::string::npos);

    // resize path
    const EvalReport rep2 = evaluate(root / "pred", root / "gt", {{12, 12}});
    CHECK(rep2.mean_psnr > 15.0);

    // mismatched video sets are rejected
    write_frames(gt, root / "pred" / "video_001");
    CHECK_THROWS_AS(evaluate(root / "pred", root / "gt"), std::invalid_argument);
    fs::remove_all(root);
}
