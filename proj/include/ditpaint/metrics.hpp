#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ditpaint/media_io.hpp"

namespace ditpaint {

/// 10*log10(1/MSE) over all pixels, capped at 99 dB for identical inputs.
double psnr(const VideoTensor& pred, const VideoTensor& gt);

/// Mean SSIM over frames and channels: 11x11 Gaussian window (sigma 1.5),
/// C1 = 0.01^2, C2 = 0.03^2, valid positions only. Frames must be >= 11x11.
double ssim(const VideoTensor& pred, const VideoTensor& gt);

/// Bilinear resize of every frame to out_h x out_w.
VideoTensor resize_video(const VideoTensor& video, size_t out_h, size_t out_w);

struct VideoScore {
    std::string name;
    double psnr = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<VideoScore> videos;
    double mean_psnr = 0;
    double mean_ssim = 0;

    std::string to_json() const;
};

/// Score aligned pred/gt directories (each a frame directory, or a directory
/// of per-video frame directories). `resize` applies the (height, width)
/// evaluation resolution to both sides first.
EvalReport evaluate(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                    std::optional<std::pair<size_t, size_t>> resize = std::nullopt);

}  // namespace ditpaint
