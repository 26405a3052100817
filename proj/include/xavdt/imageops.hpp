#pragma once

#include <algorithm>
#include <cmath>

#include "xavdt/errors.hpp"
#include "xavdt/tensor.hpp"

namespace xavdt {

// Bilinear resample of a single [H, W] plane with half-pixel sample centers
// and clamp-to-edge, the usual image-resize convention.
template <typename T>
Tensor<T> bilinear_resize_plane(const Tensor<T>& src, int64_t out_h, int64_t out_w) {
    if (src.rank() != 2) throw DataError("bilinear resize expects a [H, W] plane");
    if (out_h < 1 || out_w < 1) throw ConfigError("resize target must be at least 1x1");
    const int64_t h = src.dim(0), w = src.dim(1);
    Tensor<T> dst({out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
        const int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const int64_t y1 = std::min<int64_t>(y0 + 1, h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
            const int64_t x0 = static_cast<int64_t>(std::floor(fx));
            const int64_t x1 = std::min<int64_t>(x0 + 1, w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = (1.0 - wx) * static_cast<double>(src.at(y0, x0)) +
                               wx * static_cast<double>(src.at(y0, x1));
            const double bot = (1.0 - wx) * static_cast<double>(src.at(y1, x0)) +
                               wx * static_cast<double>(src.at(y1, x1));
            dst.at(oy, ox) = static_cast<T>((1.0 - wy) * top + wy * bot);
        }
    }
    return dst;
}

}  // namespace xavdt
