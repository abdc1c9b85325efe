#pragma once

#include <algorithm>
#include <cstddef>

#include "ditpaint/tensor.hpp"

namespace ditpaint {

// Fixed deterministic latent codec with the 3D-VAE shape contract:
// video [H,W,N,3] <-> latent [h,w,n,8] with h=H/8, w=W/8, n=(N-1)/4+1.
// Temporal groups: latent frame 0 covers video frame 0 alone; latent frame
// g >= 1 covers video frames 4g-3 .. 4g.
//
// Channels per 8x8 block and group:
//   0-2  per-RGB mean, rescaled to [-1,1]
//   3-5  per-RGB mean first-order temporal difference within the group
//   6,7  horizontal / vertical per-pixel luma slope (least-squares over the block)

inline constexpr size_t kLatentChannels = 8;
inline constexpr size_t kLatentMaskChannels = 4;

inline void check_video_dims(size_t H, size_t W, size_t N, const char* op) {
    if (H % 8 != 0 || W % 8 != 0)
        throw std::invalid_argument(std::string(op) + ": H and W must be divisible by 8, got " +
                                    std::to_string(H) + "x" + std::to_string(W));
    if (N < 1 || (N - 1) % 4 != 0)
        throw std::invalid_argument(std::string(op) + ": frame count must be 4k+1, got " +
                                    std::to_string(N));
}

inline size_t group_first_frame(size_t g) { return g == 0 ? 0 : 4 * g - 3; }
inline size_t group_frame_count(size_t g) { return g == 0 ? 1 : 4; }

template <typename T>
Tensor<T> encode(const Tensor<T>& video) {
    if (video.rank() != 4 || video.dim(3) != 3)
        throw std::invalid_argument("encode: expected [H,W,N,3], got " + shape_str(video.shape()));
    const size_t H = video.dim(0), W = video.dim(1), N = video.dim(2);
    check_video_dims(H, W, N, "encode");
    const size_t h = H / 8, w = W / 8, n = (N - 1) / 4 + 1;
    Tensor<T> latent({h, w, n, kLatentChannels});
    // Sum over j of (j - 3.5)^2 for j in 0..7, times 8 rows.
    const double slope_denom = 8.0 * 42.0;
    for (size_t bi = 0; bi < h; ++bi)
        for (size_t bj = 0; bj < w; ++bj)
            for (size_t g = 0; g < n; ++g) {
                const size_t f0 = group_first_frame(g);
                const size_t gf = group_frame_count(g);
                double mean[3] = {0, 0, 0};
                double diff[3] = {0, 0, 0};
                double sx = 0, sy = 0;
                for (size_t fi = 0; fi < gf; ++fi) {
                    const size_t f = f0 + fi;
                    for (size_t il = 0; il < 8; ++il)
                        for (size_t jl = 0; jl < 8; ++jl) {
                            const size_t i = bi * 8 + il, j = bj * 8 + jl;
                            double luma = 0;
                            for (size_t c = 0; c < 3; ++c) {
                                const double p = video.at4(i, j, f, c);
                                mean[c] += p;
                                luma += p;
                                if (fi + 1 < gf)
                                    diff[c] += static_cast<double>(video.at4(i, j, f + 1, c)) - p;
                            }
                            luma /= 3.0;
                            sx += luma * (static_cast<double>(jl) - 3.5);
                            sy += luma * (static_cast<double>(il) - 3.5);
                        }
                }
                const double pix = 64.0 * static_cast<double>(gf);
                for (size_t c = 0; c < 3; ++c) {
                    latent.at4(bi, bj, g, c) = static_cast<T>((mean[c] / pix - 0.5) * 2.0);
                    latent.at4(bi, bj, g, 3 + c) =
                        static_cast<T>(gf > 1 ? diff[c] / (64.0 * static_cast<double>(gf - 1)) : 0.0);
                }
                latent.at4(bi, bj, g, 6) = static_cast<T>(sx / (slope_denom * static_cast<double>(gf)));
                latent.at4(bi, bj, g, 7) = static_cast<T>(sy / (slope_denom * static_cast<double>(gf)));
            }
    return latent;
}

template <typename T>
Tensor<T> decode(const Tensor<T>& latent) {
    if (latent.rank() != 4 || latent.dim(3) != kLatentChannels)
        throw std::invalid_argument("decode: expected [h,w,n,8], got " + shape_str(latent.shape()));
    const size_t h = latent.dim(0), w = latent.dim(1), n = latent.dim(2);
    const size_t H = 8 * h, W = 8 * w, N = 4 * (n - 1) + 1;
    Tensor<T> video({H, W, N, 3});
    for (size_t bi = 0; bi < h; ++bi)
        for (size_t bj = 0; bj < w; ++bj)
            for (size_t g = 0; g < n; ++g) {
                const size_t f0 = group_first_frame(g);
                const size_t gf = group_frame_count(g);
                const double sx = latent.at4(bi, bj, g, 6);
                const double sy = latent.at4(bi, bj, g, 7);
                for (size_t fi = 0; fi < gf; ++fi) {
                    const double tofs = gf > 1 ? static_cast<double>(fi) - 1.5 : 0.0;
                    for (size_t il = 0; il < 8; ++il)
                        for (size_t jl = 0; jl < 8; ++jl) {
                            const double ramp = sx * (static_cast<double>(jl) - 3.5) +
                                                sy * (static_cast<double>(il) - 3.5);
                            for (size_t c = 0; c < 3; ++c) {
                                double v = static_cast<double>(latent.at4(bi, bj, g, c)) / 2.0 + 0.5 +
                                           static_cast<double>(latent.at4(bi, bj, g, 3 + c)) * tofs +
                                           ramp;
                                video.at4(bi * 8 + il, bj * 8 + jl, f0 + fi, c) =
                                    static_cast<T>(std::clamp(v, 0.0, 1.0));
                            }
                        }
                }
            }
    return video;
}

/// Mask [H,W,N,1] -> latent mask [h,w,n,4]: channel k of latent frame j >= 1
/// is the 8x8 spatial mean of mask frame 4(j-1)+k+1; latent frame 0 carries
/// mask frame 0 in all 4 channels.
template <typename T>
Tensor<T> downsample_mask(const Tensor<T>& mask) {
    if (mask.rank() != 4 || mask.dim(3) != 1)
        throw std::invalid_argument("downsample_mask: expected [H,W,N,1], got " +
                                    shape_str(mask.shape()));
    const size_t H = mask.dim(0), W = mask.dim(1), N = mask.dim(2);
    check_video_dims(H, W, N, "downsample_mask");
    const size_t h = H / 8, w = W / 8, n = (N - 1) / 4 + 1;
    Tensor<T> out({h, w, n, kLatentMaskChannels});
    auto block_mean = [&](size_t bi, size_t bj, size_t f) {
        double acc = 0;
        for (size_t il = 0; il < 8; ++il)
            for (size_t jl = 0; jl < 8; ++jl) acc += mask.at4(bi * 8 + il, bj * 8 + jl, f, 0);
        return static_cast<T>(acc / 64.0);
    };
    for (size_t bi = 0; bi < h; ++bi)
        for (size_t bj = 0; bj < w; ++bj) {
            const T m0 = block_mean(bi, bj, 0);
            for (size_t k = 0; k < 4; ++k) out.at4(bi, bj, 0, k) = m0;
            for (size_t j = 1; j < n; ++j)
                for (size_t k = 0; k < 4; ++k)
                    out.at4(bi, bj, j, k) = block_mean(bi, bj, 4 * (j - 1) + k + 1);
        }
    return out;
}

}  // namespace ditpaint
