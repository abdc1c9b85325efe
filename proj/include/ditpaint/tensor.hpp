#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ditpaint {

inline std::string shape_str(const std::vector<size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

/// Dense row-major tensor. Immutable by convention once an operation has
/// produced it; all ops below return fresh tensors.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<size_t> shape, T fill = T{0})
        : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(count(), fill);
    }

    static Tensor from_data(std::vector<size_t> shape, std::vector<T> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (data.size() != t.count())
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(t.shape_));
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<size_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    size_t size() const { return data_.size(); }
    size_t dim(size_t i) const { return shape_.at(i); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    // 4-D accessor, the common case for video/latent data.
    T& at4(size_t a, size_t b, size_t c, size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const T& at4(size_t a, size_t b, size_t c, size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    T& at2(size_t i, size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(size_t i, size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from_data(shape_, std::move(out));
    }

private:
    void validate_shape() const {
        if (shape_.empty())
            throw std::invalid_argument("tensor shape must be non-empty");
        for (size_t d : shape_)
            if (d == 0)
                throw std::invalid_argument("tensor shape has zero dimension: " + shape_str(shape_));
    }

    size_t count() const {
        size_t n = 1;
        for (size_t d : shape_) n *= d;
        return n;
    }

    std::vector<size_t> shape_;
    std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    for (size_t i = 0; i < t.size(); ++i)
        if (!std::isfinite(static_cast<double>(t[i]))) return false;
    return true;
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* ctx) {
    if (!all_finite(t))
        throw std::runtime_error(std::string(ctx) + ": non-finite value in tensor " + shape_str(t.shape()));
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

template <typename T>
Tensor<T> axpy(T alpha, const Tensor<T>& x, const Tensor<T>& y) {
    require_same_shape(x, y, "axpy");
    Tensor<T> out(x.shape());
    for (size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i] + y[i];
    return out;
}

// Exact Gaussian-CDF GELU.
template <typename T>
T gelu_scalar(T x) {
    return static_cast<T>(0.5) * x *
           (static_cast<T>(1) + static_cast<T>(std::erf(static_cast<double>(x) / std::sqrt(2.0))));
}

template <typename T>
T gelu_grad_scalar(T x) {
    double xd = static_cast<double>(x);
    double phi = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * 3.14159265358979323846);
    double Phi = 0.5 * (1.0 + std::erf(xd / std::sqrt(2.0)));
    return static_cast<T>(Phi + xd * phi);
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out(a.shape());
    for (size_t i = 0; i < a.size(); ++i) out[i] = gelu_scalar(a[i]);
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra / shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    for (size_t i = 0; i < m; ++i) {
        T* orow = out.data() + i * n;
        for (size_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            const T* brow = b.data() + p * n;
            for (size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2)
        throw std::invalid_argument("transpose2d: expected rank-2, got " + shape_str(a.shape()));
    const size_t m = a.dim(0), n = a.dim(1);
    Tensor<T> out({n, m});
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, std::vector<size_t> shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    if (n != a.size())
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    return Tensor<T>::from_data(std::move(shape), a.vec());
}

/// Slice [start, start+len) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& a, size_t axis, size_t start, size_t len) {
    if (axis >= a.rank() || start + len > a.dim(axis) || len == 0)
        throw std::invalid_argument("slice: invalid range axis=" + std::to_string(axis) + " [" +
                                    std::to_string(start) + "," + std::to_string(start + len) +
                                    ") of " + shape_str(a.shape()));
    std::vector<size_t> oshape = a.shape();
    oshape[axis] = len;
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    Tensor<T> out(oshape);
    const size_t an = a.dim(axis);
    for (size_t o = 0; o < outer; ++o)
        for (size_t s = 0; s < len; ++s)
            std::copy_n(a.data() + (o * an + start + s) * inner, inner,
                        out.data() + (o * len + s) * inner);
    return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, size_t axis) {
    if (a.rank() != b.rank() || axis >= a.rank())
        throw std::invalid_argument("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    for (size_t i = 0; i < a.rank(); ++i)
        if (i != axis && a.dim(i) != b.dim(i))
            throw std::invalid_argument("concat: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()) + " on axis " + std::to_string(axis));
    std::vector<size_t> oshape = a.shape();
    oshape[axis] = a.dim(axis) + b.dim(axis);
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    Tensor<T> out(oshape);
    const size_t an = a.dim(axis), bn = b.dim(axis);
    for (size_t o = 0; o < outer; ++o) {
        std::copy_n(a.data() + o * an * inner, an * inner, out.data() + o * (an + bn) * inner);
        std::copy_n(b.data() + o * bn * inner, bn * inner,
                    out.data() + (o * (an + bn) + an) * inner);
    }
    return out;
}

/// softmax along `axis`; rows sum to 1.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a, size_t axis) {
    if (axis >= a.rank())
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(a.shape()));
    size_t outer = 1, inner = 1;
    for (size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    const size_t n = a.dim(axis);
    Tensor<T> out(a.shape());
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            T mx = a[(o * n) * inner + in];
            for (size_t k = 1; k < n; ++k) mx = std::max(mx, a[(o * n + k) * inner + in]);
            T sum = 0;
            for (size_t k = 0; k < n; ++k) {
                T e = std::exp(a[(o * n + k) * inner + in] - mx);
                out[(o * n + k) * inner + in] = e;
                sum += e;
            }
            for (size_t k = 0; k < n; ++k) out[(o * n + k) * inner + in] /= sum;
        }
    return out;
}

/// Normalize the last axis to zero mean / unit variance, then apply learned
/// scale and shift (pass gamma=1, beta=0 vectors for the plain version).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const size_t n = a.dim(a.rank() - 1);
    if (gamma.size() != n || beta.size() != n)
        throw std::invalid_argument("layer_norm: scale/shift size mismatch for " +
                                    shape_str(a.shape()));
    const size_t rows = a.size() / n;
    Tensor<T> out(a.shape());
    for (size_t r = 0; r < rows; ++r) {
        const T* x = a.data() + r * n;
        T* y = out.data() + r * n;
        T mean = 0;
        for (size_t i = 0; i < n; ++i) mean += x[i];
        mean /= static_cast<T>(n);
        T var = 0;
        for (size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
        var /= static_cast<T>(n);
        const T inv = static_cast<T>(1) / std::sqrt(var + eps);
        for (size_t i = 0; i < n; ++i) y[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// finite-difference gradient oracle (64-bit only)
// ---------------------------------------------------------------------------

/// Central-difference gradient of a scalar function: independent oracle for
/// checking analytic gradients.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
    Tensor<double> g(x.shape());
    Tensor<double> xp = x;
    for (size_t i = 0; i < x.size(); ++i) {
        const double orig = xp[i];
        xp[i] = orig + eps;
        const double fp = f(xp);
        xp[i] = orig - eps;
        const double fm = f(xp);
        xp[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("finite_diff_grad: non-finite function value at coordinate " +
                                     std::to_string(i));
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

}  // namespace ditpaint
