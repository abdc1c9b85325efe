#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "ditpaint/checkpoint.hpp"
#include "ditpaint/flow.hpp"
#include "ditpaint/media_io.hpp"

namespace ditpaint {

struct StageConfig {
    size_t height = 32;
    size_t width = 32;
    size_t frames = 17;
    size_t iters = 2000;
};

struct MaskMix {
    double stationary_ratio = 0.5;  // fraction of iterations using stationary masks
    int count = 2;
    double min_area = 0.02;
    double max_area = 0.15;
    double drift = 3.0;
};

struct TrainConfig {
    ModelConfig model;
    std::vector<StageConfig> stages;  // coarse-to-fine; stage 2 resumes from stage 1
    size_t batch_size = 4;
    double lr = 3e-4;
    double weight_decay = 0.01;
    uint64_t seed = 0;
    MaskMix mask;
    size_t checkpoint_every = 500;
    SchedulerConfig scheduler;  // logit-normal mu/sigma for training-time t

    void validate() const;

    static TrainConfig tiny();  // stage A 32x32/N=17, stage B 64x64/N=17
};

/// Flat `key = value` config file; '#' comments; unknown keys rejected.
TrainConfig parse_train_config(const std::filesystem::path& path);
TrainConfig parse_train_config_text(const std::string& text);

/// Yields training videos at the requested stage resolution.
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual VideoTensor sample(RngStream& rng, size_t H, size_t W, size_t N) = 0;
};

/// Frame directories under a root (one subdirectory per video). Videos are
/// temporally cropped and block-mean downscaled to the stage resolution.
class DirectoryDataSource : public DataSource {
public:
    explicit DirectoryDataSource(const std::filesystem::path& root);
    VideoTensor sample(RngStream& rng, size_t H, size_t W, size_t N) override;

private:
    std::vector<VideoTensor> videos_;
};

/// Generates moving-shapes videos on the fly.
class SyntheticDataSource : public DataSource {
public:
    explicit SyntheticDataSource(int objects = 2) : objects_(objects) {}
    VideoTensor sample(RngStream& rng, size_t H, size_t W, size_t N) override;

private:
    int objects_;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<float> losses;  // one entry per iteration, all stages concatenated
};

/// Flow-matching training with decoupled-weight-decay Adam (beta 0.9/0.999),
/// constant learning rate. Deterministic per seed.
TrainResult train(const TrainConfig& cfg, DataSource& data, std::ostream* log = nullptr,
                  const std::filesystem::path* checkpoint_path = nullptr,
                  const Checkpoint* resume = nullptr);

struct InpaintOptions {
    int steps = 4;
    size_t window = 0;  // latent frames per clip; 0 = whole sequence in one clip
    size_t stride = 0;  // latent frames; 0 = window / 2
    uint64_t seed = 0;
};

/// End-to-end inpainting: read -> mask fill -> encode -> sliding-window
/// denoise -> decode -> composite (generated pixels inside the mask only).
VideoTensor inpaint_video(const VideoTensor& video, const MaskTensor& mask, const Checkpoint& ckpt,
                          const InpaintOptions& opts);

void inpaint_dirs(const std::filesystem::path& video_dir, const std::filesystem::path& mask_dir,
                  const std::filesystem::path& ckpt_path, const std::filesystem::path& out_dir,
                  const InpaintOptions& opts);

}  // namespace ditpaint
