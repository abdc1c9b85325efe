// ditpaint: command-line front end for the video inpainting pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ditpaint/metrics.hpp"
#include "ditpaint/pipeline.hpp"
#include "ditpaint/selftest.hpp"

namespace {

using namespace ditpaint;

std::pair<size_t, size_t> parse_dims(const std::string& s, const char* flag) {
    const auto x = s.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= s.size())
        throw std::invalid_argument(std::string(flag) + ": expected AxB, got " + s);
    try {
        return {std::stoull(s.substr(0, x)), std::stoull(s.substr(x + 1))};
    } catch (...) {
        throw std::invalid_argument(std::string(flag) + ": expected AxB, got " + s);
    }
}

int run_gen_data(const std::string& out, size_t videos, size_t frames, const std::string& size,
                 int objects, uint64_t seed) {
    const auto [H, W] = parse_dims(size, "--size");
    RngStream base(seed, 0);
    for (size_t k = 0; k < videos; ++k) {
        RngStream vrng = base.child(2 * k);
        const VideoTensor video = gen_synthetic_video(vrng, H, W, frames, objects);
        char name[32];
        std::snprintf(name, sizeof(name), "video_%03zu", k);
        write_frames(video, std::filesystem::path(out) / name);

        RngStream mrng = base.child(2 * k + 1);
        MaskSpec spec;
        spec.kind = k % 2 == 0 ? MaskKind::Moving : MaskKind::Stationary;
        spec.drift = 3.0;
        const MaskTensor mask = gen_masks(mrng, H, W, frames, spec);
        std::snprintf(name, sizeof(name), "mask_%03zu", k);
        write_masks(mask, std::filesystem::path(out) / name);
    }
    std::cout << "wrote " << videos << " videos (with masks) to " << out << "\n";
    return 0;
}

int run_train(const std::string& config, const std::string& data, const std::string& out,
              const std::string& resume) {
    const TrainConfig cfg = parse_train_config(config);
    DirectoryDataSource source(data);
    const std::filesystem::path ckpt_path = out;
    if (resume.empty()) {
        train(cfg, source, &std::cout, &ckpt_path);
    } else {
        const Checkpoint prev = load_checkpoint(resume);
        train(cfg, source, &std::cout, &ckpt_path, &prev);
    }
    std::cout << "checkpoint written to " << out << "\n";
    return 0;
}

int run_selftest() {
    bool ok = true;
    for (const auto& c : selftest_cases()) {
        const bool pass = c.run();
        std::cout << (pass ? "PASS " : "FAIL ") << c.name << "\n";
        ok = ok && pass;
    }
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DiT-based video inpainting: flow-matching training, few-step sampling, "
                 "temporal sliding-window fusion"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate synthetic moving-shapes videos and masks");
    std::string gen_out, gen_size = "64x64";
    size_t gen_videos = 8, gen_frames = 17;
    int gen_objects = 2;
    uint64_t gen_seed = 0;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--videos", gen_videos, "number of videos");
    gen->add_option("--frames", gen_frames, "frames per video (4k+1)");
    gen->add_option("--size", gen_size, "frame size HxW");
    gen->add_option("--objects", gen_objects, "moving objects per video");
    gen->add_option("--seed", gen_seed, "random seed");

    auto* tr = app.add_subcommand("train", "train the model");
    std::string tr_config, tr_data, tr_out, tr_resume;
    tr->add_option("--config", tr_config, "flat key=value config file")->required();
    tr->add_option("--data", tr_data, "directory of frame directories")->required();
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--resume", tr_resume, "checkpoint to resume from");

    auto* ip = app.add_subcommand("inpaint", "inpaint a masked video");
    std::string ip_ckpt, ip_video, ip_mask, ip_out;
    InpaintOptions ip_opts;
    ip->add_option("--ckpt", ip_ckpt, "checkpoint path")->required();
    ip->add_option("--video", ip_video, "input frame directory")->required();
    ip->add_option("--mask", ip_mask, "mask frame directory")->required();
    ip->add_option("--out", ip_out, "output frame directory")->required();
    ip->add_option("--steps", ip_opts.steps, "Euler steps (4 or 8 typical)");
    ip->add_option("--window", ip_opts.window, "sliding window length in latent frames (0 = whole)");
    ip->add_option("--stride", ip_opts.stride, "window stride in latent frames (0 = window/2)");
    ip->add_option("--seed", ip_opts.seed, "sampling seed");

    auto* ev = app.add_subcommand("eval", "PSNR/SSIM report over aligned directories");
    std::string ev_pred, ev_gt, ev_resize, ev_json;
    ev->add_option("--pred", ev_pred, "predicted frames")->required();
    ev->add_option("--gt", ev_gt, "ground-truth frames")->required();
    ev->add_option("--resize", ev_resize, "evaluation resolution WxH (e.g. 432x240)");
    ev->add_option("--json", ev_json, "write the JSON report here")->required();

    app.add_subcommand("selftest", "run the invariant suite and print pass/fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return run_gen_data(gen_out, gen_videos, gen_frames, gen_size, gen_objects, gen_seed);
        if (tr->parsed()) return run_train(tr_config, tr_data, tr_out, tr_resume);
        if (ip->parsed()) {
            inpaint_dirs(ip_video, ip_mask, ip_ckpt, ip_out, ip_opts);
            std::cout << "inpainted frames written to " << ip_out << "\n";
            return 0;
        }
        if (ev->parsed()) {
            std::optional<std::pair<size_t, size_t>> resize;
            if (!ev_resize.empty()) {
                const auto [w, h] = parse_dims(ev_resize, "--resize");
                resize = {h, w};
            }
            const EvalReport report = evaluate(ev_pred, ev_gt, resize);
            std::ofstream os(ev_json);
            if (!os) throw std::runtime_error("cannot write " + ev_json);
            os << report.to_json() << "\n";
            std::cout << "mean PSNR " << report.mean_psnr << " dB, mean SSIM " << report.mean_ssim
                      << " (" << report.videos.size() << " videos)\n";
            return 0;
        }
        return run_selftest();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
