#include "ditpaint/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "ditpaint/codec.hpp"
#include "ditpaint/multidiffusion.hpp"

namespace ditpaint {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
    model.validate();
    scheduler.validate();
    if (stages.empty()) throw std::invalid_argument("TrainConfig: at least one stage required");
    for (const auto& s : stages) {
        if (s.iters == 0) throw std::invalid_argument("TrainConfig: stage iterations must be > 0");
        if (s.frames < 1 || (s.frames - 1) % 4 != 0)
            throw std::invalid_argument("TrainConfig: stage frames must be 4k+1");
        if (s.height % 16 != 0 || s.width % 16 != 0)
            throw std::invalid_argument("TrainConfig: stage H and W must be divisible by 16");
    }
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be > 0");
    MaskSpec probe;
    probe.count = mask.count;
    probe.min_area = mask.min_area;
    probe.max_area = mask.max_area;
    probe.drift = mask.drift;
    probe.validate();
}

TrainConfig TrainConfig::tiny() {
    TrainConfig cfg;
    cfg.model = ModelConfig::desk();
    cfg.stages = {StageConfig{32, 32, 17, 2000}, StageConfig{64, 64, 17, 1000}};
    return cfg;
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto notspace = line.find_first_not_of(" \t\r");
        if (notspace == std::string::npos) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": empty key or value");
        if (!kv.emplace(key, value).second)
            throw std::invalid_argument("config: duplicate key " + key);
    }
    return kv;
}

size_t to_size(const std::string& k, const std::string& v) {
    try {
        return static_cast<size_t>(std::stoull(v));
    } catch (...) {
        throw std::invalid_argument("config: bad integer for " + k + ": " + v);
    }
}

double to_double(const std::string& k, const std::string& v) {
    try {
        return std::stod(v);
    } catch (...) {
        throw std::invalid_argument("config: bad number for " + k + ": " + v);
    }
}

}  // namespace

TrainConfig parse_train_config_text(const std::string& text) {
    auto kv = parse_kv(text);
    TrainConfig cfg = TrainConfig::tiny();
    auto take = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    if (auto v = take("blocks")) cfg.model.num_blocks = to_size("blocks", *v);
    if (auto v = take("heads")) cfg.model.num_heads = to_size("heads", *v);
    if (auto v = take("head_dim")) cfg.model.head_dim = to_size("head_dim", *v);
    if (auto v = take("ffn_ratio")) cfg.model.ffn_ratio = to_size("ffn_ratio", *v);
    if (auto v = take("t_freq_dim")) cfg.model.t_freq_dim = to_size("t_freq_dim", *v);
    if (auto v = take("output_mode")) {
        if (*v == "velocity")
            cfg.model.output_mode = OutputMode::VelocityOnly;
        else if (*v == "paper2c")
            cfg.model.output_mode = OutputMode::Paper2c;
        else
            throw std::invalid_argument("config: output_mode must be velocity or paper2c");
    }
    if (auto v = take("stages")) {
        const size_t n = to_size("stages", *v);
        if (n == 0) throw std::invalid_argument("config: stages must be >= 1");
        cfg.stages.assign(n, StageConfig{});
    }
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
        const std::string p = "stage" + std::to_string(i + 1) + ".";
        if (auto v = take(p + "width")) cfg.stages[i].width = to_size(p + "width", *v);
        if (auto v = take(p + "height")) cfg.stages[i].height = to_size(p + "height", *v);
        if (auto v = take(p + "frames")) cfg.stages[i].frames = to_size(p + "frames", *v);
        if (auto v = take(p + "iters")) cfg.stages[i].iters = to_size(p + "iters", *v);
    }
    if (auto v = take("batch_size")) cfg.batch_size = to_size("batch_size", *v);
    if (auto v = take("lr")) cfg.lr = to_double("lr", *v);
    if (auto v = take("weight_decay")) cfg.weight_decay = to_double("weight_decay", *v);
    if (auto v = take("seed")) cfg.seed = to_size("seed", *v);
    if (auto v = take("checkpoint_every")) cfg.checkpoint_every = to_size("checkpoint_every", *v);
    if (auto v = take("mask.stationary_ratio"))
        cfg.mask.stationary_ratio = to_double("mask.stationary_ratio", *v);
    if (auto v = take("mask.count")) cfg.mask.count = static_cast<int>(to_size("mask.count", *v));
    if (auto v = take("mask.min_area")) cfg.mask.min_area = to_double("mask.min_area", *v);
    if (auto v = take("mask.max_area")) cfg.mask.max_area = to_double("mask.max_area", *v);
    if (auto v = take("mask.drift")) cfg.mask.drift = to_double("mask.drift", *v);
    if (auto v = take("timestep.mu")) cfg.scheduler.mu = to_double("timestep.mu", *v);
    if (auto v = take("timestep.sigma")) cfg.scheduler.sigma = to_double("timestep.sigma", *v);
    if (!kv.empty())
        throw std::invalid_argument("config: unknown key " + kv.begin()->first);
    cfg.validate();
    return cfg;
}

TrainConfig parse_train_config(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_train_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// data sources
// ---------------------------------------------------------------------------

DirectoryDataSource::DirectoryDataSource(const fs::path& root) {
    if (!fs::is_directory(root))
        throw std::invalid_argument("data directory not found: " + root.string());
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "frame_00000.ppm"))
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty())
        throw std::invalid_argument("no frame directories under " + root.string());
    for (const auto& n : names) videos_.push_back(read_frames(root / n));
}

namespace {

VideoTensor downscale_block_mean(const VideoTensor& v, size_t H, size_t W) {
    const size_t sh = v.dim(0) / H, sw = v.dim(1) / W;
    if (sh * H != v.dim(0) || sw * W != v.dim(1))
        throw std::invalid_argument("data videos (" + shape_str(v.shape()) +
                                    ") must be integer multiples of the stage resolution " +
                                    std::to_string(H) + "x" + std::to_string(W));
    if (sh == 1 && sw == 1) return v;
    const size_t N = v.dim(2);
    VideoTensor out({H, W, N, 3});
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j)
            for (size_t f = 0; f < N; ++f)
                for (size_t c = 0; c < 3; ++c) {
                    double acc = 0;
                    for (size_t a = 0; a < sh; ++a)
                        for (size_t b = 0; b < sw; ++b) acc += v.at4(i * sh + a, j * sw + b, f, c);
                    out.at4(i, j, f, c) = static_cast<float>(acc / static_cast<double>(sh * sw));
                }
    return out;
}

}  // namespace

VideoTensor DirectoryDataSource::sample(RngStream& rng, size_t H, size_t W, size_t N) {
    const VideoTensor& v = videos_[rng.uniform_index(videos_.size())];
    if (v.dim(2) < N)
        throw std::invalid_argument("data video too short: has " + std::to_string(v.dim(2)) +
                                    " frames, stage needs " + std::to_string(N));
    const size_t start = rng.uniform_index(v.dim(2) - N + 1);
    return downscale_block_mean(slice(v, 2, start, N), H, W);
}

VideoTensor SyntheticDataSource::sample(RngStream& rng, size_t H, size_t W, size_t N) {
    return gen_synthetic_video(rng, H, W, N, objects_);
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

namespace {

struct AdamW {
    double lr, weight_decay;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::map<std::string, Tensor<float>> m, v;
    uint64_t t = 0;

    void step(ParamMap<float>& params, const ParamNodes<float>& nodes) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (auto& [name, theta] : params) {
            const Tensor<float>& g = nodes.at(name)->grad;
            auto mi = m.try_emplace(name, Tensor<float>(theta.shape())).first;
            auto vi = v.try_emplace(name, Tensor<float>(theta.shape())).first;
            for (size_t i = 0; i < theta.size(); ++i) {
                const double gi = g[i];
                const double mn = beta1 * mi->second[i] + (1.0 - beta1) * gi;
                const double vn = beta2 * vi->second[i] + (1.0 - beta2) * gi * gi;
                mi->second[i] = static_cast<float>(mn);
                vi->second[i] = static_cast<float>(vn);
                const double update = (mn / bc1) / (std::sqrt(vn / bc2) + eps);
                theta[i] = static_cast<float>(theta[i] - lr * (update + weight_decay * theta[i]));
            }
        }
    }
};

}  // namespace

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainResult train(const TrainConfig& cfg, DataSource& data, std::ostream* log,
                  const fs::path* checkpoint_path, const Checkpoint* resume) {
    cfg.validate();
    Checkpoint ckpt;
    if (resume) {
        ckpt = *resume;
    } else {
        RngStream init_rng(cfg.seed, 0xd17);
        ckpt.config = cfg.model;
        ckpt.params = init_params<float>(cfg.model, init_rng);
        ckpt.step = 0;
    }

    AdamW opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;

    TrainResult result;
    RngStream base(cfg.seed, 1);
    size_t global_iter = ckpt.step;
    for (size_t si = 0; si < cfg.stages.size(); ++si) {
        const StageConfig& stage = cfg.stages[si];
        for (size_t it = 0; it < stage.iters; ++it, ++global_iter) {
            Tape<float> tape;
            auto nodes = make_param_nodes(tape, ckpt.params, /*requires_grad=*/true);
            Tape<float>::Ptr total;
            for (size_t b = 0; b < cfg.batch_size; ++b) {
                RngStream it_rng = base.child(global_iter * 64 + b);
                RngStream data_rng = it_rng.child(0);
                RngStream mask_rng = it_rng.child(1);
                RngStream t_rng = it_rng.child(2);
                RngStream noise_rng = it_rng.child(3);

                VideoTensor video = data.sample(data_rng, stage.height, stage.width, stage.frames);
                MaskSpec spec;
                spec.kind = mask_rng.uniform() < cfg.mask.stationary_ratio ? MaskKind::Stationary
                                                                           : MaskKind::Moving;
                spec.count = cfg.mask.count;
                spec.min_area = cfg.mask.min_area;
                spec.max_area = cfg.mask.max_area;
                spec.drift = cfg.mask.drift;
                MaskTensor mask = gen_masks(mask_rng, stage.height, stage.width, stage.frames, spec);

                const Tensor<float> x1 = encode(video);
                const Tensor<float> y = encode(apply_mask(video, mask));
                const Tensor<float> m = downsample_mask(mask);
                const float t = sample_timestep<float>(t_rng, cfg.scheduler);
                const Tensor<float> x0 = sample_gaussian<float>(noise_rng, x1.shape());
                const Tensor<float> xt = interpolate(x0, x1, t);
                const Tensor<float> vt = velocity_target(x0, x1);

                auto pred = model_forward_tape(tape, nodes, cfg.model, xt, y, m, t);
                auto loss_b = tape.mse(pred, vt);
                total = total ? tape.add(total, loss_b) : loss_b;
            }
            total = tape.scale(total, 1.0f / static_cast<float>(cfg.batch_size));
            const float loss = total->value[0];
            if (!std::isfinite(loss))
                throw std::runtime_error("train: non-finite loss at iteration " +
                                         std::to_string(global_iter));
            tape.backward(total);
            opt.step(ckpt.params, nodes);
            ckpt.step = global_iter + 1;
            result.losses.push_back(loss);
            if (log && (global_iter % 50 == 0 || it + 1 == stage.iters))
                (*log) << "stage " << (si + 1) << " iter " << global_iter << " loss " << loss
                       << "\n";
            if (checkpoint_path && cfg.checkpoint_every > 0 &&
                (global_iter + 1) % cfg.checkpoint_every == 0)
                save_checkpoint(ckpt, *checkpoint_path);
        }
    }
    if (checkpoint_path) save_checkpoint(ckpt, *checkpoint_path);
    result.checkpoint = std::move(ckpt);
    return result;
}

// ---------------------------------------------------------------------------
// inference
// ---------------------------------------------------------------------------

VideoTensor inpaint_video(const VideoTensor& video, const MaskTensor& mask, const Checkpoint& ckpt,
                          const InpaintOptions& opts) {
    if (video.dim(0) != mask.dim(0) || video.dim(1) != mask.dim(1) || video.dim(2) != mask.dim(2))
        throw std::invalid_argument("inpaint: video/mask shape mismatch " +
                                    shape_str(video.shape()) + " vs " + shape_str(mask.shape()));
    if (video.dim(0) % 16 != 0 || video.dim(1) % 16 != 0)
        throw std::invalid_argument("inpaint: H and W must be divisible by 16");
    if (opts.steps < 1) throw std::invalid_argument("inpaint: steps must be >= 1");

    const Tensor<float> y = encode(apply_mask(video, mask));
    const Tensor<float> m = downsample_mask(mask);
    const size_t n_total = y.dim(2);
    const size_t window = opts.window == 0 ? n_total : opts.window;
    const size_t stride = opts.stride == 0 ? std::max<size_t>(1, window / 2) : opts.stride;
    const ClipPlan plan = plan_clips(n_total, window, stride);

    SchedulerConfig sched;
    sched.num_steps = opts.steps;
    VelocityFn<float> velocity = [&](const Tensor<float>& x, const Tensor<float>& yc,
                                     const Tensor<float>& mc, float t) {
        return model_forward<float>(ckpt.params, ckpt.config, x, yc, mc, t);
    };
    RngStream rng(opts.seed, 0x5a);
    const Tensor<float> latent = long_denoise(velocity, y, m, sched, plan, rng);
    const VideoTensor generated = decode(latent);

    VideoTensor out = video;
    const size_t H = video.dim(0), W = video.dim(1), N = video.dim(2);
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j)
            for (size_t f = 0; f < N; ++f)
                if (mask.at4(i, j, f, 0) > 0.5f)
                    for (size_t c = 0; c < 3; ++c) out.at4(i, j, f, c) = generated.at4(i, j, f, c);
    return out;
}

void inpaint_dirs(const fs::path& video_dir, const fs::path& mask_dir, const fs::path& ckpt_path,
                  const fs::path& out_dir, const InpaintOptions& opts) {
    const VideoTensor video = read_frames(video_dir);
    const MaskTensor mask = read_masks(mask_dir);
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    write_frames(inpaint_video(video, mask, ckpt, opts), out_dir);
}

}  // namespace ditpaint
