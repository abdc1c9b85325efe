#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ditpaint/autograd.hpp"
#include "ditpaint/codec.hpp"
#include "ditpaint/rng.hpp"
#include "ditpaint/rope.hpp"

namespace ditpaint {

inline constexpr double kLayerNormEps = 1e-5;

enum class OutputMode { VelocityOnly, Paper2c };

struct ModelConfig {
    size_t num_blocks = 4;
    size_t num_heads = 4;
    size_t head_dim = 24;
    size_t ffn_ratio = 4;
    size_t t_freq_dim = 256;
    OutputMode output_mode = OutputMode::VelocityOnly;
    size_t latent_channels = kLatentChannels;
    size_t mask_channels = kLatentMaskChannels;

    size_t embed_dim() const { return num_heads * head_dim; }
    size_t patch_in_latent() const { return 4 * latent_channels; }
    size_t patch_in_mask() const { return 4 * mask_channels; }
    size_t head_out() const {
        return output_mode == OutputMode::Paper2c ? 8 * latent_channels : 4 * latent_channels;
    }

    void validate() const {
        if (num_heads == 0 || head_dim == 0 || ffn_ratio == 0)
            throw std::invalid_argument("ModelConfig: zero dimension");
        if (t_freq_dim < 2 || t_freq_dim % 2 != 0)
            throw std::invalid_argument("ModelConfig: t_freq_dim must be even and >= 2");
        rope_axis_split(head_dim);  // throws if unallocatable
    }

    /// Small CPU-trainable default.
    static ModelConfig desk() { return ModelConfig{}; }

    /// The full-size configuration (24 blocks, 16 heads x 72 dims); used for
    /// parameter counting and shape checks, not for training here.
    static ModelConfig paper() {
        ModelConfig c;
        c.num_blocks = 24;
        c.num_heads = 16;
        c.head_dim = 72;
        c.output_mode = OutputMode::Paper2c;
        return c;
    }
};

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

inline std::string block_prefix(size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "block%03zu.", i);
    return buf;
}

/// Canonical parameter manifest: every trainable tensor with its shape, in
/// checkpoint order.
inline std::vector<std::pair<std::string, std::vector<size_t>>> param_manifest(
    const ModelConfig& cfg) {
    cfg.validate();
    const size_t D = cfg.embed_dim(), F = cfg.t_freq_dim, Dff = cfg.ffn_ratio * D;
    std::vector<std::pair<std::string, std::vector<size_t>>> m;
    m.push_back({"embed.latent.w", {cfg.patch_in_latent(), D}});
    m.push_back({"embed.latent.b", {D}});
    m.push_back({"embed.mask.w", {cfg.patch_in_mask(), D}});
    m.push_back({"embed.mask.b", {D}});
    m.push_back({"embed.noise.w", {cfg.patch_in_latent(), D}});
    m.push_back({"embed.noise.b", {D}});
    m.push_back({"tmlp.fc1.w", {F, F}});
    m.push_back({"tmlp.fc1.b", {F}});
    m.push_back({"tmlp.fc2.w", {F, F}});
    m.push_back({"tmlp.fc2.b", {F}});
    for (size_t i = 0; i < cfg.num_blocks; ++i) {
        const std::string p = block_prefix(i);
        for (const char* n : {"wq", "wk", "wv", "wo"}) m.push_back({p + "attn." + n, {D, D}});
        for (const char* n : {"bq", "bk", "bv", "bo"}) m.push_back({p + "attn." + n, {D}});
        m.push_back({p + "ffn.fc1.w", {D, Dff}});
        m.push_back({p + "ffn.fc1.b", {Dff}});
        m.push_back({p + "ffn.fc2.w", {Dff, D}});
        m.push_back({p + "ffn.fc2.b", {D}});
        m.push_back({p + "mod_attn.w", {F, 3 * D}});
        m.push_back({p + "mod_attn.b", {3 * D}});
        m.push_back({p + "mod_ffn.w", {F, 3 * D}});
        m.push_back({p + "mod_ffn.b", {3 * D}});
    }
    m.push_back({"head.w", {D, cfg.head_out()}});
    m.push_back({"head.b", {cfg.head_out()}});
    return m;
}

/// Analytic parameter count over the manifest; no allocation.
inline size_t param_count(const ModelConfig& cfg) {
    size_t total = 0;
    for (const auto& [name, shape] : param_manifest(cfg)) {
        size_t n = 1;
        for (size_t d : shape) n *= d;
        total += n;
    }
    return total;
}

/// Initialize parameters. Weight matrices are N(0, 0.02); biases zero.
/// adaLN heads start as identity modulation: weights zero, gamma bias 1,
/// beta/alpha bias 0 (gates zero makes every block the identity at init).
/// The output head starts at zero.
template <typename T>
ParamMap<T> init_params(const ModelConfig& cfg, RngStream& rng) {
    const size_t D = cfg.embed_dim();
    ParamMap<T> params;
    for (const auto& [name, shape] : param_manifest(cfg)) {
        Tensor<T> t(shape);
        const bool is_weight = shape.size() == 2;
        const bool is_mod = name.find(".mod_") != std::string::npos;
        const bool is_head = name.rfind("head.", 0) == 0;
        if (is_weight && !is_mod && !is_head)
            for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal() * 0.02);
        if (is_mod && !is_weight)
            for (size_t j = 0; j < D; ++j) t[j] = static_cast<T>(1);  // gamma section
        params.emplace(name, std::move(t));
    }
    return params;
}

// ---------------------------------------------------------------------------
// patchify / unpatchify
// ---------------------------------------------------------------------------

/// Flattening order is fixed: temporal-major, then row, then column. Each
/// token gathers its 2x2x1 patch in (di, dj, channel) order.
template <typename T>
Tensor<T> patchify_rows(const Tensor<T>& x) {
    if (x.rank() != 4)
        throw std::invalid_argument("patchify: expected rank-4 latent, got " +
                                    shape_str(x.shape()));
    const size_t h = x.dim(0), w = x.dim(1), n = x.dim(2), C = x.dim(3);
    if (h % 2 != 0 || w % 2 != 0)
        throw std::invalid_argument("patchify: h and w must be even, got " + shape_str(x.shape()));
    const size_t h2 = h / 2, w2 = w / 2, L = n * h2 * w2;
    Tensor<T> out({L, 4 * C});
    size_t tok = 0;
    for (size_t t = 0; t < n; ++t)
        for (size_t pr = 0; pr < h2; ++pr)
            for (size_t pc = 0; pc < w2; ++pc, ++tok)
                for (size_t di = 0; di < 2; ++di)
                    for (size_t dj = 0; dj < 2; ++dj)
                        for (size_t ch = 0; ch < C; ++ch)
                            out[tok * 4 * C + (di * 2 + dj) * C + ch] =
                                x.at4(2 * pr + di, 2 * pc + dj, t, ch);
    return out;
}

/// Index map for the exact inverse placement: latent flat index -> position in
/// the [L, 4c] token matrix.
inline std::shared_ptr<std::vector<size_t>> unpatchify_index(size_t h, size_t w, size_t n,
                                                             size_t C) {
    const size_t h2 = h / 2, w2 = w / 2;
    auto idx = std::make_shared<std::vector<size_t>>(h * w * n * C);
    for (size_t i = 0; i < h; ++i)
        for (size_t j = 0; j < w; ++j)
            for (size_t t = 0; t < n; ++t)
                for (size_t ch = 0; ch < C; ++ch) {
                    const size_t tok = (t * h2 + i / 2) * w2 + j / 2;
                    const size_t col = ((i % 2) * 2 + (j % 2)) * C + ch;
                    (*idx)[((i * w + j) * n + t) * C + ch] = tok * 4 * C + col;
                }
    return idx;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, size_t h, size_t w, size_t n, size_t C) {
    const size_t L = (h / 2) * (w / 2) * n;
    if (tokens.rank() != 2 || tokens.dim(0) != L || tokens.dim(1) != 4 * C)
        throw std::invalid_argument("unpatchify: expected [" + std::to_string(L) + "," +
                                    std::to_string(4 * C) + "], got " + shape_str(tokens.shape()));
    auto idx = unpatchify_index(h, w, n, C);
    Tensor<T> out({h, w, n, C});
    for (size_t i = 0; i < out.size(); ++i) out[i] = tokens[(*idx)[i]];
    return out;
}

// ---------------------------------------------------------------------------
// timestep embedding
// ---------------------------------------------------------------------------

/// Sinusoidal embedding of t in [0,1], scaled by 1000 before the standard
/// frequency ladder.
template <typename T>
Tensor<T> sinusoidal_embed(T t, size_t dim) {
    const size_t half = dim / 2;
    Tensor<T> out({dim});
    for (size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                     static_cast<double>(half));
        const double arg = static_cast<double>(t) * 1000.0 * freq;
        out[i] = static_cast<T>(std::cos(arg));
        out[half + i] = static_cast<T>(std::sin(arg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

template <typename T>
struct ForwardTrace {
    Tensor<T> fused_tokens;    // after token addition, before any block
    Tensor<T> pre_head_tokens; // after the last block, before the final LN
};

template <typename T>
using ParamNodes = std::map<std::string, typename Tape<T>::Ptr>;

template <typename T>
ParamNodes<T> make_param_nodes(Tape<T>& tape, const ParamMap<T>& params, bool requires_grad) {
    ParamNodes<T> nodes;
    for (const auto& [name, t] : params) nodes.emplace(name, tape.leaf(t, requires_grad));
    return nodes;
}

template <typename T>
typename Tape<T>::Ptr lookup(const ParamNodes<T>& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw std::invalid_argument("missing parameter: " + name);
    return it->second;
}

/// Full DiT forward on a tape: patchify + token fusion, adaLN-Zero blocks with
/// 3D RoPE full attention, final LN + linear head, unpatchify back to a
/// velocity latent [h,w,n,c].
template <typename T>
typename Tape<T>::Ptr model_forward_tape(Tape<T>& tape, const ParamNodes<T>& P,
                                         const ModelConfig& cfg, const Tensor<T>& x_t,
                                         const Tensor<T>& y, const Tensor<T>& m, T t,
                                         ForwardTrace<T>* trace = nullptr) {
    cfg.validate();
    if (x_t.rank() != 4 || x_t.dim(3) != cfg.latent_channels)
        throw std::invalid_argument("model_forward: bad x_t shape " + shape_str(x_t.shape()));
    if (!x_t.same_shape(y))
        throw std::invalid_argument("model_forward: x_t/y shape mismatch " +
                                    shape_str(x_t.shape()) + " vs " + shape_str(y.shape()));
    const size_t h = x_t.dim(0), w = x_t.dim(1), n = x_t.dim(2);
    if (m.rank() != 4 || m.dim(0) != h || m.dim(1) != w || m.dim(2) != n ||
        m.dim(3) != cfg.mask_channels)
        throw std::invalid_argument("model_forward: bad mask shape " + shape_str(m.shape()));

    const size_t D = cfg.embed_dim();
    const Grid3 grid{n, h / 2, w / 2};
    auto rope = std::make_shared<const RopeTable<T>>(build_rope_table<T>(grid, cfg.head_dim));

    // Three embedding streams, flattened and added together.
    auto tok_x = tape.linear(tape.constant(patchify_rows(x_t)), lookup<T>(P, "embed.noise.w"),
                             lookup<T>(P, "embed.noise.b"));
    auto tok_y = tape.linear(tape.constant(patchify_rows(y)), lookup<T>(P, "embed.latent.w"),
                             lookup<T>(P, "embed.latent.b"));
    auto tok_m = tape.linear(tape.constant(patchify_rows(m)), lookup<T>(P, "embed.mask.w"),
                             lookup<T>(P, "embed.mask.b"));
    auto x = tape.add(tape.add(tok_x, tok_y), tok_m);
    if (trace) trace->fused_tokens = x->value;

    // Timestep pathway: sinusoidal embedding -> 2-layer MLP.
    auto temb = tape.constant(sinusoidal_embed(t, cfg.t_freq_dim));
    auto th = tape.gelu(tape.vlinear(temb, lookup<T>(P, "tmlp.fc1.w"), lookup<T>(P, "tmlp.fc1.b")));
    th = tape.vlinear(th, lookup<T>(P, "tmlp.fc2.w"), lookup<T>(P, "tmlp.fc2.b"));

    const T eps = static_cast<T>(kLayerNormEps);
    for (size_t b = 0; b < cfg.num_blocks; ++b) {
        const std::string p = block_prefix(b);
        // attention sub-layer
        auto mod_a = tape.vlinear(th, lookup<T>(P, p + "mod_attn.w"), lookup<T>(P, p + "mod_attn.b"));
        auto ga = tape.slice_vec(mod_a, 0, D);
        auto ba = tape.slice_vec(mod_a, D, D);
        auto aa = tape.slice_vec(mod_a, 2 * D, D);
        auto xin = tape.modulate(tape.layer_norm(x, eps), ga, ba);
        auto q = tape.linear(xin, lookup<T>(P, p + "attn.wq"), lookup<T>(P, p + "attn.bq"));
        auto k = tape.linear(xin, lookup<T>(P, p + "attn.wk"), lookup<T>(P, p + "attn.bk"));
        auto v = tape.linear(xin, lookup<T>(P, p + "attn.wv"), lookup<T>(P, p + "attn.bv"));
        auto att = tape.attention(q, k, v, cfg.num_heads, rope);
        att = tape.linear(att, lookup<T>(P, p + "attn.wo"), lookup<T>(P, p + "attn.bo"));
        x = tape.gated_residual(x, att, aa);
        // feedforward sub-layer
        auto mod_f = tape.vlinear(th, lookup<T>(P, p + "mod_ffn.w"), lookup<T>(P, p + "mod_ffn.b"));
        auto gf = tape.slice_vec(mod_f, 0, D);
        auto bf = tape.slice_vec(mod_f, D, D);
        auto af = tape.slice_vec(mod_f, 2 * D, D);
        auto fin = tape.modulate(tape.layer_norm(x, eps), gf, bf);
        auto hmid = tape.gelu(tape.linear(fin, lookup<T>(P, p + "ffn.fc1.w"), lookup<T>(P, p + "ffn.fc1.b")));
        auto fout = tape.linear(hmid, lookup<T>(P, p + "ffn.fc2.w"), lookup<T>(P, p + "ffn.fc2.b"));
        x = tape.gated_residual(x, fout, af);
    }
    if (trace) trace->pre_head_tokens = x->value;

    auto out = tape.linear(tape.layer_norm(x, eps), lookup<T>(P, "head.w"), lookup<T>(P, "head.b"));
    if (cfg.output_mode == OutputMode::Paper2c)
        out = tape.slice_cols(out, 4 * cfg.latent_channels);  // second c-half discarded
    return tape.permute_elements(out, unpatchify_index(h, w, n, cfg.latent_channels),
                                 {h, w, n, cfg.latent_channels});
}

/// Inference-only forward; no gradients retained.
template <typename T>
Tensor<T> model_forward(const ParamMap<T>& params, const ModelConfig& cfg, const Tensor<T>& x_t,
                        const Tensor<T>& y, const Tensor<T>& m, T t,
                        ForwardTrace<T>* trace = nullptr) {
    Tape<T> tape;
    auto nodes = make_param_nodes(tape, params, /*requires_grad=*/false);
    return model_forward_tape(tape, nodes, cfg, x_t, y, m, t, trace)->value;
}

}  // namespace ditpaint
