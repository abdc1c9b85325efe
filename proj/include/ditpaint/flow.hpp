#pragma once

#include <functional>

#include "ditpaint/rng.hpp"
#include "ditpaint/tensor.hpp"

namespace ditpaint {

struct SchedulerConfig {
    int num_steps = 4;       // uniform left-endpoint grid on [0,1]
    double mu = 0.0;         // logit-normal location for training-time t
    double sigma = 1.0;      // logit-normal scale

    void validate() const {
        if (num_steps < 1) throw std::invalid_argument("SchedulerConfig: num_steps must be >= 1");
        if (!(sigma > 0)) throw std::invalid_argument("SchedulerConfig: sigma must be > 0");
    }
};

/// t = sigmoid(mu + sigma * z), strictly inside (0,1); weights intermediate
/// timesteps more heavily than the endpoints.
template <typename T>
T sample_timestep(RngStream& rng, const SchedulerConfig& cfg) {
    cfg.validate();
    const double z = cfg.mu + cfg.sigma * rng.normal();
    return static_cast<T>(1.0 / (1.0 + std::exp(-z)));
}

/// x_t = t*x1 + (1-t)*x0
template <typename T>
Tensor<T> interpolate(const Tensor<T>& x0, const Tensor<T>& x1, T t) {
    require_same_shape(x0, x1, "interpolate");
    Tensor<T> out(x0.shape());
    for (size_t i = 0; i < out.size(); ++i) out[i] = t * x1[i] + (static_cast<T>(1) - t) * x0[i];
    return out;
}

/// v = x1 - x0, independent of t.
template <typename T>
Tensor<T> velocity_target(const Tensor<T>& x0, const Tensor<T>& x1) {
    require_same_shape(x0, x1, "velocity_target");
    return sub(x1, x0);
}

/// Mean squared error between prediction and target velocity.
template <typename T>
T fm_loss(const Tensor<T>& prediction, const Tensor<T>& target) {
    require_same_shape(prediction, target, "fm_loss");
    double acc = 0;
    for (size_t i = 0; i < prediction.size(); ++i) {
        const double d = static_cast<double>(prediction[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return static_cast<T>(acc / static_cast<double>(prediction.size()));
}

template <typename T>
using VelocityFn =
    std::function<Tensor<T>(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& m, T t)>;

/// Pairwise (tree) sum of equally shaped tensors. Summing K = 2^k copies of
/// v/K this way reproduces v exactly, which keeps the sampler bit-stable
/// across power-of-two step counts for a constant velocity field.
template <typename T>
Tensor<T> pairwise_sum(std::vector<Tensor<T>> terms) {
    if (terms.empty()) throw std::invalid_argument("pairwise_sum: no terms");
    while (terms.size() > 1) {
        std::vector<Tensor<T>> next;
        for (size_t i = 0; i + 1 < terms.size(); i += 2) next.push_back(add(terms[i], terms[i + 1]));
        if (terms.size() % 2 != 0) next.push_back(std::move(terms.back()));
        terms = std::move(next);
    }
    return std::move(terms[0]);
}

/// First-order Euler ODE sampler from noise (t=0) to data (t=1):
/// x <- N(0,I); for i in 0..K-1 with t_i = i/K: x <- x + (1/K) * v(x, y, m, t_i).
/// The state is kept as x0 plus a pairwise-summed displacement history.
template <typename T>
Tensor<T> euler_sample(const VelocityFn<T>& velocity_fn, const Tensor<T>& y, const Tensor<T>& m,
                       const std::vector<size_t>& shape, const SchedulerConfig& cfg,
                       RngStream& rng) {
    cfg.validate();
    const Tensor<T> x0 = sample_gaussian<T>(rng, shape);
    const int K = cfg.num_steps;
    const T dt = static_cast<T>(1.0 / static_cast<double>(K));
    std::vector<Tensor<T>> increments;
    Tensor<T> x = x0;
    for (int i = 0; i < K; ++i) {
        const T t = static_cast<T>(static_cast<double>(i) / static_cast<double>(K));
        Tensor<T> v = velocity_fn(x, y, m, t);
        require_same_shape(x, v, "euler_sample: velocity");
        increments.push_back(scale(v, dt));
        x = add(x0, pairwise_sum(increments));
        if (!all_finite(x))
            throw std::runtime_error("euler_sample: non-finite state at step " + std::to_string(i));
    }
    return x;
}

}  // namespace ditpaint
