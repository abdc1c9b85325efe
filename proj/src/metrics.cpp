#include "ditpaint/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace ditpaint {

namespace fs = std::filesystem;

double psnr(const VideoTensor& pred, const VideoTensor& gt) {
    require_same_shape(pred, gt, "psnr");
    double mse = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(pred.size());
    if (mse <= 0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr size_t kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
    static const std::vector<double> kernel = [] {
        std::vector<double> k(kWin * kWin);
        double sum = 0;
        for (size_t i = 0; i < kWin; ++i)
            for (size_t j = 0; j < kWin; ++j) {
                const double di = static_cast<double>(i) - 5.0, dj = static_cast<double>(j) - 5.0;
                k[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSigma * kSigma));
                sum += k[i * kWin + j];
            }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return kernel;
}

}  // namespace

double ssim(const VideoTensor& pred, const VideoTensor& gt) {
    require_same_shape(pred, gt, "ssim");
    const size_t H = pred.dim(0), W = pred.dim(1), N = pred.dim(2), C = pred.dim(3);
    if (H < kWin || W < kWin)
        throw std::invalid_argument("ssim: frames must be at least 11x11, got " +
                                    shape_str(pred.shape()));
    const auto& kernel = gaussian_kernel();
    double total = 0;
    size_t windows = 0;
    for (size_t f = 0; f < N; ++f)
        for (size_t c = 0; c < C; ++c)
            for (size_t i0 = 0; i0 + kWin <= H; ++i0)
                for (size_t j0 = 0; j0 + kWin <= W; ++j0) {
                    double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
                    for (size_t i = 0; i < kWin; ++i)
                        for (size_t j = 0; j < kWin; ++j) {
                            const double wgt = kernel[i * kWin + j];
                            const double x = pred.at4(i0 + i, j0 + j, f, c);
                            const double y = gt.at4(i0 + i, j0 + j, f, c);
                            mx += wgt * x;
                            my += wgt * y;
                            xx += wgt * x * x;
                            yy += wgt * y * y;
                            xy += wgt * x * y;
                        }
                    const double vx = xx - mx * mx, vy = yy - my * my, cov = xy - mx * my;
                    total += ((2 * mx * my + kC1) * (2 * cov + kC2)) /
                             ((mx * mx + my * my + kC1) * (vx + vy + kC2));
                    ++windows;
                }
    return total / static_cast<double>(windows);
}

VideoTensor resize_video(const VideoTensor& video, size_t out_h, size_t out_w) {
    const size_t H = video.dim(0), W = video.dim(1), N = video.dim(2), C = video.dim(3);
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_video: zero output size");
    VideoTensor out({out_h, out_w, N, C});
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    for (size_t i = 0; i < out_h; ++i)
        for (size_t j = 0; j < out_w; ++j) {
            const double fy = std::clamp((static_cast<double>(i) + 0.5) * sy - 0.5, 0.0,
                                         static_cast<double>(H - 1));
            const double fx = std::clamp((static_cast<double>(j) + 0.5) * sx - 0.5, 0.0,
                                         static_cast<double>(W - 1));
            const size_t y0 = static_cast<size_t>(fy), x0 = static_cast<size_t>(fx);
            const size_t y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
            const double wy = fy - static_cast<double>(y0), wx = fx - static_cast<double>(x0);
            for (size_t f = 0; f < N; ++f)
                for (size_t c = 0; c < C; ++c) {
                    const double v =
                        (1 - wy) * ((1 - wx) * video.at4(y0, x0, f, c) + wx * video.at4(y0, x1, f, c)) +
                        wy * ((1 - wx) * video.at4(y1, x0, f, c) + wx * video.at4(y1, x1, f, c));
                    out.at4(i, j, f, c) = static_cast<float>(v);
                }
        }
    return out;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["videos"] = nlohmann::json::array();
    for (const auto& v : videos)
        j["videos"].push_back({{"name", v.name}, {"psnr", v.psnr}, {"ssim", v.ssim}});
    j["mean_psnr"] = mean_psnr;
    j["mean_ssim"] = mean_ssim;
    return j.dump(2);
}

namespace {

std::vector<std::string> list_videos(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw std::invalid_argument("not a directory: " + dir.string());
    if (fs::exists(dir / "frame_00000.ppm")) return {"."};
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory() && fs::exists(e.path() / "frame_00000.ppm"))
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw std::invalid_argument("no videos found in " + dir.string());
    return names;
}

}  // namespace

EvalReport evaluate(const fs::path& pred_dir, const fs::path& gt_dir,
                    std::optional<std::pair<size_t, size_t>> resize) {
    const auto pred_names = list_videos(pred_dir);
    const auto gt_names = list_videos(gt_dir);
    if (pred_names != gt_names)
        throw std::invalid_argument("evaluate: video sets differ between " + pred_dir.string() +
                                    " and " + gt_dir.string());
    EvalReport report;
    for (const auto& name : pred_names) {
        VideoTensor pred = read_frames(pred_dir / name);
        VideoTensor gt = read_frames(gt_dir / name);
        if (resize) {
            pred = resize_video(pred, resize->first, resize->second);
            gt = resize_video(gt, resize->first, resize->second);
        }
        VideoScore s;
        s.name = name;
        s.psnr = psnr(pred, gt);
        s.ssim = ssim(pred, gt);
        report.mean_psnr += s.psnr;
        report.mean_ssim += s.ssim;
        report.videos.push_back(std::move(s));
    }
    report.mean_psnr /= static_cast<double>(report.videos.size());
    report.mean_ssim /= static_cast<double>(report.videos.size());
    return report;
}

}  // namespace ditpaint
