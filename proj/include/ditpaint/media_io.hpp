#pragma once

#include <filesystem>
#include <string>

#include "ditpaint/rng.hpp"
#include "ditpaint/tensor.hpp"

namespace ditpaint {

// Video: [H,W,N,3] with values in [0,1], N = 4k+1. Mask: [H,W,N,1] binary.
using VideoTensor = Tensor<float>;
using MaskTensor = Tensor<float>;

enum class MaskKind { Stationary, Moving };

struct MaskSpec {
    MaskKind kind = MaskKind::Stationary;
    int count = 2;             // shapes per mask
    double min_area = 0.02;    // per-shape area as fraction of frame area
    double max_area = 0.15;
    double drift = 0.0;        // per-frame drift magnitude in pixels (moving only)
    uint64_t seed = 0;

    void validate() const;
};

// ---- frame directories ------------------------------------------------------
// Frames: frame_%05d.ppm (binary P6, maxval 255). Masks: mask_%05d.pgm
// (binary P5, values 0 or 255).

VideoTensor read_frames(const std::filesystem::path& dir);
void write_frames(const VideoTensor& video, const std::filesystem::path& dir);

MaskTensor read_masks(const std::filesystem::path& dir);
void write_masks(const MaskTensor& mask, const std::filesystem::path& dir);

// ---- tensor files -----------------------------------------------------------
// Magic "DTPT", version u32 LE = 1, dtype u32 LE (0 = f32, 1 = f64),
// rank u32 LE, dims u64 LE each, then raw little-endian row-major scalars.

void save_tensor(const Tensor<float>& t, const std::filesystem::path& path);
void save_tensor(const Tensor<double>& t, const std::filesystem::path& path);
Tensor<float> load_tensor_f32(const std::filesystem::path& path);
Tensor<double> load_tensor_f64(const std::filesystem::path& path);

// Serialize into an open stream (used by the checkpoint container).
void write_tensor_stream(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_tensor_stream(std::istream& is);

// ---- generators -------------------------------------------------------------

/// Smooth background gradient plus `objects` rigid shapes moving on
/// constant-velocity trajectories that bounce at the borders.
VideoTensor gen_synthetic_video(RngStream& rng, size_t H, size_t W, size_t N, int objects);

/// Random rectangle / brush-stroke masks; stationary masks are frame-constant,
/// moving shapes follow a clamped random walk with the spec'd drift.
MaskTensor gen_masks(RngStream& rng, size_t H, size_t W, size_t N, const MaskSpec& spec);

/// Pixels where mask = 1 are replaced by mid-gray 0.5.
VideoTensor apply_mask(const VideoTensor& video, const MaskTensor& mask);

}  // namespace ditpaint
