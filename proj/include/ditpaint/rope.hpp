#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "ditpaint/tensor.hpp"

namespace ditpaint {

/// Token grid in flattening order: temporal-major, then row, then column.
struct Grid3 {
    size_t time = 0;  // n
    size_t rows = 0;  // h/2
    size_t cols = 0;  // w/2
    size_t tokens() const { return time * rows * cols; }
};

/// head_dim split across (time, row, col): time gets ceil(d/3) rounded up to
/// even, rows and columns share the remainder evenly.
inline std::array<size_t, 3> rope_axis_split(size_t head_dim) {
    if (head_dim < 2 || head_dim % 2 != 0)
        throw std::invalid_argument("rope: head_dim must be even, got " + std::to_string(head_dim));
    size_t dt = (head_dim + 2) / 3;
    if (dt % 2 != 0) ++dt;
    const size_t rem = head_dim - dt;
    if (rem % 4 != 0)
        throw std::invalid_argument("rope: head_dim " + std::to_string(head_dim) +
                                    " not allocatable across 3 axes");
    return {dt, rem / 2, rem / 2};
}

/// Precomputed rotary table: cos/sin per token per rotation pair, shared by
/// all heads of the same head_dim.
template <typename T>
struct RopeTable {
    size_t head_dim = 0;
    size_t tokens = 0;
    std::vector<T> cosv;  // [tokens, head_dim/2]
    std::vector<T> sinv;
};

template <typename T>
RopeTable<T> build_rope_table(const Grid3& grid, size_t head_dim, double base = 10000.0) {
    const auto split = rope_axis_split(head_dim);
    RopeTable<T> table;
    table.head_dim = head_dim;
    table.tokens = grid.tokens();
    const size_t pairs = head_dim / 2;
    table.cosv.resize(table.tokens * pairs);
    table.sinv.resize(table.tokens * pairs);
    size_t tok = 0;
    for (size_t t = 0; t < grid.time; ++t)
        for (size_t r = 0; r < grid.rows; ++r)
            for (size_t c = 0; c < grid.cols; ++c, ++tok) {
                const double coord[3] = {static_cast<double>(t), static_cast<double>(r),
                                         static_cast<double>(c)};
                size_t pair = 0;
                for (size_t axis = 0; axis < 3; ++axis) {
                    const size_t ds = split[axis];
                    for (size_t i = 0; i < ds / 2; ++i, ++pair) {
                        const double freq =
                            std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(ds));
                        const double angle = coord[axis] * freq;
                        table.cosv[tok * pairs + pair] = static_cast<T>(std::cos(angle));
                        table.sinv[tok * pairs + pair] = static_cast<T>(std::sin(angle));
                    }
                }
            }
    return table;
}

/// Rotate one head slice in place. `sign` = -1 applies the inverse rotation
/// (used by the attention backward pass).
template <typename T>
void rope_rotate_head(T* head, const RopeTable<T>& table, size_t token, int sign) {
    const size_t pairs = table.head_dim / 2;
    const T* c = table.cosv.data() + token * pairs;
    const T* s = table.sinv.data() + token * pairs;
    for (size_t i = 0; i < pairs; ++i) {
        const T x = head[2 * i], y = head[2 * i + 1];
        const T sn = sign < 0 ? -s[i] : s[i];
        head[2 * i] = x * c[i] - y * sn;
        head[2 * i + 1] = x * sn + y * c[i];
    }
}

}  // namespace ditpaint
