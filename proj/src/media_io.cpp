#include "ditpaint/media_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <regex>

namespace ditpaint {

static_assert(std::endian::native == std::endian::little,
              "tensor file layout assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

std::string frame_name(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05zu.ppm", i);
    return buf;
}

std::string mask_name(size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "mask_%05zu.pgm", i);
    return buf;
}

uint8_t quantize(float v) {
    const double q = std::floor(static_cast<double>(v) * 255.0 + 0.5);
    return static_cast<uint8_t>(std::clamp(q, 0.0, 255.0));
}

// Parses "P6"/"P5" headers: magic, width, height, maxval, one whitespace byte,
// then raw samples. '#' comments allowed between tokens.
struct PnmHeader {
    size_t width = 0, height = 0;
};

size_t next_pnm_int(std::istream& is, const fs::path& path) {
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c))
        throw std::invalid_argument("malformed PNM header in " + path.string());
    size_t v = static_cast<size_t>(c - '0');
    while ((c = is.peek()) != EOF && std::isdigit(c)) {
        v = v * 10 + static_cast<size_t>(is.get() - '0');
    }
    return v;
}

PnmHeader read_pnm_header(std::istream& is, const char* magic, const fs::path& path) {
    char m[2];
    if (!is.read(m, 2) || m[0] != magic[0] || m[1] != magic[1])
        throw std::invalid_argument("bad magic in " + path.string() + ", expected " + magic);
    PnmHeader h;
    h.width = next_pnm_int(is, path);
    h.height = next_pnm_int(is, path);
    const size_t maxval = next_pnm_int(is, path);
    if (maxval != 255)
        throw std::invalid_argument("unsupported maxval " + std::to_string(maxval) + " in " +
                                    path.string());
    is.get();  // single whitespace separating header and payload
    return h;
}

size_t count_indexed(const fs::path& dir, const std::regex& re) {
    if (!fs::is_directory(dir))
        throw std::invalid_argument("not a directory: " + dir.string());
    size_t count = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && std::regex_match(e.path().filename().string(), re)) ++count;
    if (count == 0) throw std::invalid_argument("no frames found in " + dir.string());
    return count;
}

template <typename W>
void write_le(std::ostream& os, W v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(W));
}

template <typename W>
W read_le(std::istream& is, const fs::path& path) {
    W v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(W)))
        throw std::invalid_argument("truncated tensor file: " + path.string());
    return v;
}

constexpr uint32_t kTensorVersion = 1;

template <typename T>
void save_tensor_impl(const Tensor<T>& t, const fs::path& path, uint32_t dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for write: " + path.string());
    os.write("DTPT", 4);
    write_le<uint32_t>(os, kTensorVersion);
    write_le<uint32_t>(os, dtype);
    write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape()) write_le<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(T)));
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

template <typename T>
Tensor<T> load_tensor_impl(const fs::path& path, uint32_t want_dtype) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::invalid_argument("cannot open: " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DTPT", 4) != 0)
        throw std::invalid_argument("bad magic in " + path.string() + ", expected DTPT");
    const auto version = read_le<uint32_t>(is, path);
    if (version != kTensorVersion)
        throw std::invalid_argument("unsupported tensor file version " + std::to_string(version));
    const auto dtype = read_le<uint32_t>(is, path);
    if (dtype != want_dtype)
        throw std::invalid_argument("dtype mismatch in " + path.string() + ": stored " +
                                    std::to_string(dtype) + ", requested " +
                                    std::to_string(want_dtype));
    const auto rank = read_le<uint32_t>(is, path);
    std::vector<size_t> shape(rank);
    size_t n = 1;
    for (auto& d : shape) {
        d = static_cast<size_t>(read_le<uint64_t>(is, path));
        n *= d;
    }
    std::vector<T> data(n);
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(T))))
        throw std::invalid_argument("truncated tensor payload: " + path.string());
    return Tensor<T>::from_data(std::move(shape), std::move(data));
}

}  // namespace

// ---------------------------------------------------------------------------
// frames
// ---------------------------------------------------------------------------

VideoTensor read_frames(const fs::path& dir) {
    static const std::regex re("frame_[0-9]{5}\\.ppm");
    const size_t N = count_indexed(dir, re);
    if ((N - 1) % 4 != 0)
        throw std::invalid_argument("frame count must be 4k+1, got " + std::to_string(N) + " in " +
                                    dir.string());
    VideoTensor video;
    for (size_t f = 0; f < N; ++f) {
        const fs::path p = dir / frame_name(f);
        std::ifstream is(p, std::ios::binary);
        if (!is)
            throw std::invalid_argument("missing frame index " + std::to_string(f) + ": " +
                                        p.string());
        const PnmHeader h = read_pnm_header(is, "P6", p);
        if (f == 0) {
            video = VideoTensor({h.height, h.width, N, 3});
        } else if (h.height != video.dim(0) || h.width != video.dim(1)) {
            throw std::invalid_argument("frame size mismatch at " + p.string());
        }
        std::vector<uint8_t> row(h.width * 3);
        for (size_t i = 0; i < h.height; ++i) {
            if (!is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
                throw std::invalid_argument("truncated pixel data in " + p.string());
            for (size_t j = 0; j < h.width; ++j)
                for (size_t c = 0; c < 3; ++c)
                    video.at4(i, j, f, c) = static_cast<float>(row[j * 3 + c]) / 255.0f;
        }
    }
    return video;
}

void write_frames(const VideoTensor& video, const fs::path& dir) {
    if (video.rank() != 4 || video.dim(3) != 3)
        throw std::invalid_argument("write_frames: expected [H,W,N,3], got " +
                                    shape_str(video.shape()));
    fs::create_directories(dir);
    const size_t H = video.dim(0), W = video.dim(1), N = video.dim(2);
    for (size_t f = 0; f < N; ++f) {
        const fs::path p = dir / frame_name(f);
        std::ofstream os(p, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for write: " + p.string());
        os << "P6\n" << W << " " << H << "\n255\n";
        std::vector<uint8_t> row(W * 3);
        for (size_t i = 0; i < H; ++i) {
            for (size_t j = 0; j < W; ++j)
                for (size_t c = 0; c < 3; ++c) row[j * 3 + c] = quantize(video.at4(i, j, f, c));
            os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
        if (!os) throw std::runtime_error("write failed: " + p.string());
    }
}

MaskTensor read_masks(const fs::path& dir) {
    static const std::regex re("mask_[0-9]{5}\\.pgm");
    const size_t N = count_indexed(dir, re);
    if ((N - 1) % 4 != 0)
        throw std::invalid_argument("mask count must be 4k+1, got " + std::to_string(N) + " in " +
                                    dir.string());
    MaskTensor mask;
    for (size_t f = 0; f < N; ++f) {
        const fs::path p = dir / mask_name(f);
        std::ifstream is(p, std::ios::binary);
        if (!is)
            throw std::invalid_argument("missing mask index " + std::to_string(f) + ": " + p.string());
        const PnmHeader h = read_pnm_header(is, "P5", p);
        if (f == 0) {
            mask = MaskTensor({h.height, h.width, N, 1});
        } else if (h.height != mask.dim(0) || h.width != mask.dim(1)) {
            throw std::invalid_argument("mask size mismatch at " + p.string());
        }
        std::vector<uint8_t> row(h.width);
        for (size_t i = 0; i < h.height; ++i) {
            if (!is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size())))
                throw std::invalid_argument("truncated mask data in " + p.string());
            for (size_t j = 0; j < h.width; ++j)
                mask.at4(i, j, f, 0) = row[j] >= 128 ? 1.0f : 0.0f;
        }
    }
    return mask;
}

void write_masks(const MaskTensor& mask, const fs::path& dir) {
    if (mask.rank() != 4 || mask.dim(3) != 1)
        throw std::invalid_argument("write_masks: expected [H,W,N,1], got " +
                                    shape_str(mask.shape()));
    fs::create_directories(dir);
    const size_t H = mask.dim(0), W = mask.dim(1), N = mask.dim(2);
    for (size_t f = 0; f < N; ++f) {
        const fs::path p = dir / mask_name(f);
        std::ofstream os(p, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for write: " + p.string());
        os << "P5\n" << W << " " << H << "\n255\n";
        std::vector<uint8_t> row(W);
        for (size_t i = 0; i < H; ++i) {
            for (size_t j = 0; j < W; ++j) row[j] = mask.at4(i, j, f, 0) > 0.5f ? 255 : 0;
            os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
        }
    }
}

// ---------------------------------------------------------------------------
// tensor files
// ---------------------------------------------------------------------------

void save_tensor(const Tensor<float>& t, const fs::path& path) { save_tensor_impl(t, path, 0); }
void save_tensor(const Tensor<double>& t, const fs::path& path) { save_tensor_impl(t, path, 1); }
Tensor<float> load_tensor_f32(const fs::path& path) { return load_tensor_impl<float>(path, 0); }
Tensor<double> load_tensor_f64(const fs::path& path) { return load_tensor_impl<double>(path, 1); }

void write_tensor_stream(std::ostream& os, const Tensor<float>& t) {
    os.write("DTPT", 4);
    write_le<uint32_t>(os, kTensorVersion);
    write_le<uint32_t>(os, 0);
    write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
    for (size_t d : t.shape()) write_le<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
}

Tensor<float> read_tensor_stream(std::istream& is) {
    const fs::path ctx = "<stream>";
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "DTPT", 4) != 0)
        throw std::invalid_argument("bad tensor record magic, expected DTPT");
    if (read_le<uint32_t>(is, ctx) != kTensorVersion)
        throw std::invalid_argument("unsupported tensor record version");
    if (read_le<uint32_t>(is, ctx) != 0)
        throw std::invalid_argument("checkpoint tensors must be f32");
    const auto rank = read_le<uint32_t>(is, ctx);
    std::vector<size_t> shape(rank);
    size_t n = 1;
    for (auto& d : shape) {
        d = static_cast<size_t>(read_le<uint64_t>(is, ctx));
        n *= d;
    }
    std::vector<float> data(n);
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float))))
        throw std::invalid_argument("truncated tensor record");
    return Tensor<float>::from_data(std::move(shape), std::move(data));
}

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

void MaskSpec::validate() const {
    if (count < 1) throw std::invalid_argument("MaskSpec: count must be >= 1");
    if (!(min_area > 0.0) || min_area > max_area || max_area > 1.0)
        throw std::invalid_argument("MaskSpec: need 0 < min_area <= max_area <= 1");
    if (drift < 0.0) throw std::invalid_argument("MaskSpec: drift must be >= 0");
}

VideoTensor gen_synthetic_video(RngStream& rng, size_t H, size_t W, size_t N, int objects) {
    if (H < 16 || W < 16)
        throw std::invalid_argument("gen_synthetic_video: H and W must be >= 16");
    if (N < 1 || (N - 1) % 4 != 0)
        throw std::invalid_argument("gen_synthetic_video: frame count must be 4k+1, got " +
                                    std::to_string(N));
    if (objects < 0) throw std::invalid_argument("gen_synthetic_video: objects must be >= 0");

    VideoTensor video({H, W, N, 3});

    // Static background gradient between two random colors.
    float c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = static_cast<float>(rng.uniform(0.1, 0.9));
        c1[c] = static_cast<float>(rng.uniform(0.1, 0.9));
    }
    const double ang = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double gx = std::cos(ang), gy = std::sin(ang);
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j) {
            const double u = 0.5 * (gx * (static_cast<double>(j) / static_cast<double>(W - 1) * 2 - 1) +
                                    gy * (static_cast<double>(i) / static_cast<double>(H - 1) * 2 - 1)) +
                             0.5;
            for (size_t c = 0; c < 3; ++c) {
                const float v = static_cast<float>(c0[c] * (1 - u) + c1[c] * u);
                for (size_t f = 0; f < N; ++f) video.at4(i, j, f, c) = v;
            }
        }

    struct Obj {
        bool disk;
        double size;       // rect side / disk radius
        double aspect;     // rect only
        float color[3];
        double x, y;       // top-left (rect) or center (disk)
        double vx, vy;
    };
    std::vector<Obj> objs;
    const double minside = static_cast<double>(std::min(H, W));
    for (int o = 0; o < objects; ++o) {
        Obj ob;
        ob.disk = rng.uniform() < 0.5;
        ob.size = rng.uniform(0.08, 0.22) * minside;
        ob.aspect = rng.uniform(0.6, 1.6);
        for (int c = 0; c < 3; ++c) ob.color[c] = static_cast<float>(rng.uniform(0.0, 1.0));
        ob.x = rng.uniform(0.0, static_cast<double>(W) - 2 * ob.size);
        ob.y = rng.uniform(0.0, static_cast<double>(H) - 2 * ob.size);
        // Speed > 1 px/frame so consecutive frames always differ.
        ob.vx = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.1, 2.5);
        ob.vy = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.1, 2.5);
        objs.push_back(ob);
    }

    for (size_t f = 0; f < N; ++f) {
        for (auto& ob : objs) {
            const double bw = ob.disk ? 2 * ob.size : ob.size * ob.aspect;
            const double bh = ob.disk ? 2 * ob.size : ob.size / ob.aspect;
            const long x0 = std::lround(ob.x), y0 = std::lround(ob.y);
            for (long i = std::max(0l, y0); i < std::min(static_cast<long>(H), y0 + std::lround(bh)); ++i)
                for (long j = std::max(0l, x0); j < std::min(static_cast<long>(W), x0 + std::lround(bw)); ++j) {
                    if (ob.disk) {
                        const double dx = static_cast<double>(j) - (ob.x + ob.size);
                        const double dy = static_cast<double>(i) - (ob.y + ob.size);
                        if (dx * dx + dy * dy > ob.size * ob.size) continue;
                    }
                    for (size_t c = 0; c < 3; ++c)
                        video.at4(static_cast<size_t>(i), static_cast<size_t>(j), f, c) = ob.color[c];
                }
            // Advance with border bounce.
            const double xmax = static_cast<double>(W) - bw, ymax = static_cast<double>(H) - bh;
            ob.x += ob.vx;
            ob.y += ob.vy;
            if (ob.x < 0) { ob.x = -ob.x; ob.vx = -ob.vx; }
            if (ob.x > xmax) { ob.x = 2 * xmax - ob.x; ob.vx = -ob.vx; }
            if (ob.y < 0) { ob.y = -ob.y; ob.vy = -ob.vy; }
            if (ob.y > ymax) { ob.y = 2 * ymax - ob.y; ob.vy = -ob.vy; }
        }
    }
    return video;
}

namespace {

// Shape stamp in its own bounding box.
struct Stamp {
    size_t bw = 0, bh = 0;
    std::vector<uint8_t> bits;  // bh x bw
};

Stamp make_rect_stamp(RngStream& rng, size_t H, size_t W, double area) {
    const double aspect = rng.uniform(0.5, 2.0);
    const double target = area * static_cast<double>(H * W);
    size_t rw = static_cast<size_t>(std::clamp(std::lround(std::sqrt(target * aspect)), 1l,
                                               static_cast<long>(W)));
    size_t rh = static_cast<size_t>(std::clamp(std::lround(target / static_cast<double>(rw)), 1l,
                                               static_cast<long>(H)));
    Stamp s;
    s.bw = rw;
    s.bh = rh;
    s.bits.assign(rw * rh, 1);
    return s;
}

Stamp make_stroke_stamp(RngStream& rng, size_t H, size_t W, double area) {
    const double target = area * static_cast<double>(H * W);
    // Thick segment with round caps: area = len*width + pi*(width/2)^2.
    double width = std::max(2.0, std::sqrt(target / 4.0));
    double len = (target - 3.14159265358979323846 * width * width / 4.0) / width;
    len = std::clamp(len, 1.0, static_cast<double>(std::max(H, W)));
    const double ang = rng.uniform(0.0, 3.14159265358979323846);
    const double dx = std::cos(ang) * len, dy = std::sin(ang) * len;
    const double r = width / 2.0;
    const double x0 = r + std::max(0.0, -dx), y0 = r + std::max(0.0, -dy);
    const double x1 = x0 + dx, y1 = y0 + dy;
    Stamp s;
    s.bw = static_cast<size_t>(std::ceil(std::abs(dx) + width)) + 1;
    s.bh = static_cast<size_t>(std::ceil(std::abs(dy) + width)) + 1;
    s.bw = std::min(s.bw, W);
    s.bh = std::min(s.bh, H);
    s.bits.assign(s.bw * s.bh, 0);
    const double seg2 = dx * dx + dy * dy;
    for (size_t i = 0; i < s.bh; ++i)
        for (size_t j = 0; j < s.bw; ++j) {
            const double px = static_cast<double>(j), py = static_cast<double>(i);
            double t = seg2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / seg2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double cx = x0 + t * (x1 - x0), cy = y0 + t * (y1 - y0);
            if ((px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r) s.bits[i * s.bw + j] = 1;
        }
    return s;
}

}  // namespace

MaskTensor gen_masks(RngStream& rng, size_t H, size_t W, size_t N, const MaskSpec& spec) {
    spec.validate();
    if (N < 1 || (N - 1) % 4 != 0)
        throw std::invalid_argument("gen_masks: frame count must be 4k+1, got " + std::to_string(N));
    RngStream local = rng.child(splitmix64(spec.seed));

    struct Placed {
        Stamp stamp;
        long x, y;
    };
    std::vector<Placed> shapes;
    for (int k = 0; k < spec.count; ++k) {
        const double area = local.uniform(spec.min_area, spec.max_area);
        Placed p;
        p.stamp = local.uniform() < 0.5 ? make_rect_stamp(local, H, W, area)
                                        : make_stroke_stamp(local, H, W, area);
        p.x = static_cast<long>(local.uniform_index(W - p.stamp.bw + 1));
        p.y = static_cast<long>(local.uniform_index(H - p.stamp.bh + 1));
        shapes.push_back(std::move(p));
    }

    MaskTensor mask({H, W, N, 1});
    for (size_t f = 0; f < N; ++f) {
        for (auto& p : shapes) {
            if (spec.kind == MaskKind::Moving && f > 0) {
                p.x += std::lround(local.uniform(-spec.drift, spec.drift));
                p.y += std::lround(local.uniform(-spec.drift, spec.drift));
                p.x = std::clamp(p.x, 0l, static_cast<long>(W - p.stamp.bw));
                p.y = std::clamp(p.y, 0l, static_cast<long>(H - p.stamp.bh));
            }
            for (size_t i = 0; i < p.stamp.bh; ++i)
                for (size_t j = 0; j < p.stamp.bw; ++j)
                    if (p.stamp.bits[i * p.stamp.bw + j])
                        mask.at4(static_cast<size_t>(p.y) + i, static_cast<size_t>(p.x) + j, f, 0) =
                            1.0f;
        }
    }
    return mask;
}

VideoTensor apply_mask(const VideoTensor& video, const MaskTensor& mask) {
    if (video.rank() != 4 || mask.rank() != 4 || video.dim(0) != mask.dim(0) ||
        video.dim(1) != mask.dim(1) || video.dim(2) != mask.dim(2))
        throw std::invalid_argument("apply_mask: shape mismatch " + shape_str(video.shape()) +
                                    " vs " + shape_str(mask.shape()));
    VideoTensor out = video;
    const size_t H = video.dim(0), W = video.dim(1), N = video.dim(2);
    for (size_t i = 0; i < H; ++i)
        for (size_t j = 0; j < W; ++j)
            for (size_t f = 0; f < N; ++f)
                if (mask.at4(i, j, f, 0) > 0.5f)
                    for (size_t c = 0; c < 3; ++c) out.at4(i, j, f, c) = 0.5f;
    return out;
}

}  // namespace ditpaint
