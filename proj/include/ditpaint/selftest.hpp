#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ditpaint/dit.hpp"
#include "ditpaint/flow.hpp"
#include "ditpaint/multidiffusion.hpp"

namespace ditpaint {

// Invariant suite shared by `ditpaint selftest` and the test binaries.

/// With zero gates, the whole block stack is the exact identity on tokens.
inline bool check_identity_at_init() {
    ModelConfig cfg;
    cfg.num_blocks = 3;
    cfg.num_heads = 2;
    cfg.head_dim = 8;
    cfg.t_freq_dim = 32;
    RngStream rng(11, 0);
    auto params = init_params<float>(cfg, rng);
    const Tensor<float> xt = sample_gaussian<float>(rng, {4, 4, 5, 8});
    const Tensor<float> y = sample_gaussian<float>(rng, {4, 4, 5, 8});
    const Tensor<float> m = sample_gaussian<float>(rng, {4, 4, 5, 4});
    ForwardTrace<float> trace;
    model_forward<float>(params, cfg, xt, y, m, 0.3f, &trace);
    if (!trace.fused_tokens.same_shape(trace.pre_head_tokens)) return false;
    for (size_t i = 0; i < trace.fused_tokens.size(); ++i)
        if (trace.fused_tokens[i] != trace.pre_head_tokens[i]) return false;
    return true;
}

/// fuse_step equals brute-force per-frame averaging over every plan with
/// n' <= 12, n <= 6, s <= n.
inline bool check_fuse_oracle_sweep() {
    RngStream rng(23, 0);
    for (size_t n_total = 1; n_total <= 12; ++n_total)
        for (size_t window = 1; window <= 6; ++window)
            for (size_t stride = 1; stride <= window; ++stride) {
                const ClipPlan plan = plan_clips(n_total, window, stride);
                std::vector<Tensor<double>> clips;
                for (size_t k = 0; k < plan.clips(); ++k)
                    clips.push_back(sample_gaussian<double>(rng, {2, 2, plan.window, 3}));
                const Tensor<double> fused = fuse_step(clips, plan);
                // independent brute-force enumeration of covering clips
                for (size_t i = 0; i < plan.total; ++i)
                    for (size_t a = 0; a < 2; ++a)
                        for (size_t b = 0; b < 2; ++b)
                            for (size_t c = 0; c < 3; ++c) {
                                double sum = 0;
                                size_t cnt = 0;
                                for (size_t k = 0; k < plan.clips(); ++k)
                                    if (plan.starts[k] <= i && i < plan.starts[k] + plan.window) {
                                        sum += clips[k].at4(a, b, i - plan.starts[k], c);
                                        ++cnt;
                                    }
                                if (cnt == 0) return false;
                                if (fused.at4(a, b, i, c) != sum / static_cast<double>(cnt))
                                    return false;
                            }
            }
    return true;
}

/// Euler is exact for a constant velocity field: with the oracle v = x1 - x0
/// the sampler returns x1 (max abs error < 1e-5) for K in {1,4,8}, and the
/// K=4 / K=8 outputs agree bitwise.
inline bool check_euler_exactness() {
    const std::vector<size_t> shape = {4, 4, 5, 8};
    RngStream noise_peek(77, 3);
    const Tensor<double> x0 = sample_gaussian<double>(noise_peek, shape);
    RngStream target_rng(78, 0);
    const Tensor<double> x1 = sample_gaussian<double>(target_rng, shape);
    const Tensor<double> v = velocity_target(x0, x1);
    VelocityFn<double> oracle = [&](const Tensor<double>&, const Tensor<double>&,
                                    const Tensor<double>&, double) { return v; };
    const Tensor<double> y({1}), m({1});
    std::vector<Tensor<double>> results;
    for (int K : {1, 4, 8}) {
        SchedulerConfig cfg;
        cfg.num_steps = K;
        RngStream rng(77, 3);
        results.push_back(euler_sample<double>(oracle, y, m, shape, cfg, rng));
    }
    for (const auto& r : results)
        for (size_t i = 0; i < r.size(); ++i)
            if (std::abs(r[i] - x1[i]) >= 1e-5) return false;
    for (size_t i = 0; i < results[1].size(); ++i)
        if (results[1][i] != results[2][i]) return false;  // K=4 vs K=8 bitwise
    return true;
}

/// Attention logits depend only on relative positions: rotating content
/// vectors at p and q gives the same dot product as at p+delta and q+delta.
inline bool check_rope_shift_invariance(size_t grid_side = 4, size_t head_dim = 12) {
    const Grid3 grid{grid_side, grid_side, grid_side};
    const auto table = build_rope_table<double>(grid, head_dim);
    auto token_index = [&](size_t t, size_t r, size_t c) {
        return (t * grid.rows + r) * grid.cols + c;
    };
    RngStream rng(31, 0);
    const Tensor<double> a = sample_gaussian<double>(rng, {head_dim});
    const Tensor<double> b = sample_gaussian<double>(rng, {head_dim});
    auto logit = [&](size_t pt, size_t pr, size_t pc, size_t qt, size_t qr, size_t qc) {
        Tensor<double> ar = a, br = b;
        rope_rotate_head(ar.data(), table, token_index(pt, pr, pc), +1);
        rope_rotate_head(br.data(), table, token_index(qt, qr, qc), +1);
        double s = 0;
        for (size_t i = 0; i < head_dim; ++i) s += ar[i] * br[i];
        return s;
    };
    const size_t lim = grid_side - 1;  // leave room for a +1 shift
    for (size_t pt = 0; pt < lim; ++pt)
        for (size_t pr = 0; pr < lim; ++pr)
            for (size_t pc = 0; pc < lim; ++pc)
                for (size_t qt = 0; qt < lim; ++qt)
                    for (size_t qr = 0; qr < lim; ++qr)
                        for (size_t qc = 0; qc < lim; ++qc) {
                            const double base = logit(pt, pr, pc, qt, qr, qc);
                            const double st = logit(pt + 1, pr, pc, qt + 1, qr, qc);
                            const double sr = logit(pt, pr + 1, pc, qt, qr + 1, qc);
                            const double sc = logit(pt, pr, pc + 1, qt, qr, qc + 1);
                            if (std::abs(base - st) > 1e-5 || std::abs(base - sr) > 1e-5 ||
                                std::abs(base - sc) > 1e-5)
                                return false;
                        }
    return true;
}

struct SelftestCase {
    std::string name;
    std::function<bool()> run;
};

inline std::vector<SelftestCase> selftest_cases() {
    return {{"identity-at-init", check_identity_at_init},
            {"fuse-oracle-sweep", check_fuse_oracle_sweep},
            {"euler-exactness", check_euler_exactness},
            {"rope-shift-invariance", [] { return check_rope_shift_invariance(); }}};
}

}  // namespace ditpaint
