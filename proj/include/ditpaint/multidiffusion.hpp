#pragma once

#include <vector>

#include "ditpaint/flow.hpp"
#include "ditpaint/tensor.hpp"

namespace ditpaint {

/// Sliding-window segmentation of n_total latent frames into overlapping
/// clips of length `window` with stride `stride`. Clip count is
/// r = ceil((n' - n) / s) + 1; the last start is clamped to n' - n so the
/// tail is always covered.
struct ClipPlan {
    size_t total = 0;   // n'
    size_t window = 0;  // n
    size_t stride = 0;  // s
    std::vector<size_t> starts;

    size_t clips() const { return starts.size(); }
};

inline ClipPlan plan_clips(size_t n_total, size_t window, size_t stride) {
    if (n_total < 1 || window < 1)
        throw std::invalid_argument("plan_clips: lengths must be >= 1");
    if (stride < 1 || stride > window)
        throw std::invalid_argument("plan_clips: need 1 <= stride <= window, got stride=" +
                                    std::to_string(stride) + " window=" + std::to_string(window));
    ClipPlan plan;
    plan.total = n_total;
    plan.window = std::min(window, n_total);
    plan.stride = stride;
    if (n_total <= window) {
        plan.starts = {0};
        return plan;
    }
    const size_t r = (n_total - window + stride - 1) / stride + 1;
    for (size_t k = 0; k < r; ++k)
        plan.starts.push_back(std::min(k * stride, n_total - window));
    return plan;
}

/// Per-frame arithmetic mean over all clips covering that frame (Eq. 4-style
/// uniform averaging). Clip tensors are [h,w,window,c]; result is
/// [h,w,total,c]. Frames covered by exactly one clip pass through unchanged.
template <typename T>
Tensor<T> fuse_step(const std::vector<Tensor<T>>& clip_states, const ClipPlan& plan) {
    if (clip_states.size() != plan.clips())
        throw std::invalid_argument("fuse_step: got " + std::to_string(clip_states.size()) +
                                    " clips, plan has " + std::to_string(plan.clips()));
    const Tensor<T>& first = clip_states.front();
    if (first.rank() != 4 || first.dim(2) != plan.window)
        throw std::invalid_argument("fuse_step: clip shape " + shape_str(first.shape()) +
                                    " does not match window " + std::to_string(plan.window));
    const size_t h = first.dim(0), w = first.dim(1), c = first.dim(3);
    for (const auto& s : clip_states) require_same_shape(first, s, "fuse_step");

    Tensor<T> sum({h, w, plan.total, c});
    std::vector<size_t> count(plan.total, 0);
    for (size_t k = 0; k < clip_states.size(); ++k) {
        const size_t start = plan.starts[k];
        const Tensor<T>& clip = clip_states[k];
        for (size_t i = 0; i < h; ++i)
            for (size_t j = 0; j < w; ++j)
                for (size_t f = 0; f < plan.window; ++f)
                    for (size_t ch = 0; ch < c; ++ch)
                        sum.at4(i, j, start + f, ch) += clip.at4(i, j, f, ch);
        for (size_t f = 0; f < plan.window; ++f) ++count[start + f];
    }
    for (size_t f = 0; f < plan.total; ++f) {
        if (count[f] == 0)
            throw std::invalid_argument("fuse_step: frame " + std::to_string(f) + " uncovered");
        const T inv_count = static_cast<T>(count[f]);
        for (size_t i = 0; i < h; ++i)
            for (size_t j = 0; j < w; ++j)
                for (size_t ch = 0; ch < c; ++ch) sum.at4(i, j, f, ch) /= inv_count;
    }
    return sum;
}

/// Sliding-window denoising for latents longer than the training window.
/// One global noise state is drawn for the full length; every Euler step
/// slices it into clips, evaluates the model velocity per clip, and fuses the
/// per-clip increments back by uniform averaging. Degenerates bit-exactly to
/// euler_sample when the plan has a single clip.
template <typename T>
Tensor<T> long_denoise(const VelocityFn<T>& velocity_fn, const Tensor<T>& y_full,
                       const Tensor<T>& m_full, const SchedulerConfig& cfg, const ClipPlan& plan,
                       RngStream& rng) {
    cfg.validate();
    if (y_full.rank() != 4 || y_full.dim(2) != plan.total)
        throw std::invalid_argument("long_denoise: y length " + shape_str(y_full.shape()) +
                                    " does not match plan total " + std::to_string(plan.total));
    if (m_full.rank() != 4 || m_full.dim(2) != plan.total)
        throw std::invalid_argument("long_denoise: mask length " + shape_str(m_full.shape()) +
                                    " does not match plan total " + std::to_string(plan.total));
    const std::vector<size_t> shape = {y_full.dim(0), y_full.dim(1), plan.total,
                                       y_full.dim(3)};
    const Tensor<T> x0 = sample_gaussian<T>(rng, shape);
    const int K = cfg.num_steps;
    const T dt = static_cast<T>(1.0 / static_cast<double>(K));
    std::vector<Tensor<T>> increments;
    Tensor<T> x = x0;
    for (int i = 0; i < K; ++i) {
        const T t = static_cast<T>(static_cast<double>(i) / static_cast<double>(K));
        std::vector<Tensor<T>> clip_incs;
        clip_incs.reserve(plan.clips());
        for (size_t k = 0; k < plan.clips(); ++k) {
            const size_t start = plan.starts[k];
            Tensor<T> xc = slice(x, 2, start, plan.window);
            Tensor<T> yc = slice(y_full, 2, start, plan.window);
            Tensor<T> mc = slice(m_full, 2, start, plan.window);
            Tensor<T> v;
            try {
                v = velocity_fn(xc, yc, mc, t);
            } catch (const std::exception& e) {
                throw std::runtime_error("long_denoise: model failed on clip " + std::to_string(k) +
                                         " (step " + std::to_string(i) + "): " + e.what());
            }
            require_same_shape(xc, v, "long_denoise: velocity");
            clip_incs.push_back(scale(v, dt));
        }
        increments.push_back(fuse_step(clip_incs, plan));
        x = add(x0, pairwise_sum(increments));
        if (!all_finite(x))
            throw std::runtime_error("long_denoise: non-finite state at step " + std::to_string(i));
    }
    return x;
}

}  // namespace ditpaint
