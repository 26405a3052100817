#pragma once

#include "xavdt/diffusion.hpp"
#include "xavdt/errors.hpp"

namespace xavdt {

// Pass-through codec: latent space is pixel space.
class IdentityCodec final : public LatentCodec {
public:
    TensorD encode(const TensorD& pixels) const override { return pixels; }
    TensorD decode(const TensorD& latent) const override { return latent; }
    int64_t factor() const override { return 1; }
};

// Block-average downsampling codec; decode replicates each latent cell back
// over its f x f pixel block. Lossy but shape-exact, standing in for a
// learned autoencoder at the full-scale factor of 8.
class StridedAvgCodec final : public LatentCodec {
public:
    explicit StridedAvgCodec(int64_t f = 8) : f_(f) {
        if (f < 1) throw ConfigError("codec: downsample factor must be >= 1");
    }

    TensorD encode(const TensorD& pixels) const override {
        if (pixels.rank() != 4)
            throw DataError("codec: expected frames x channels x H x W, got " + pixels.shape_string());
        const int64_t n = pixels.dim(0), ch = pixels.dim(1), h = pixels.dim(2), w = pixels.dim(3);
        if (h % f_ != 0 || w % f_ != 0)
            throw DataError("codec: spatial dims " + pixels.shape_string() + " not divisible by factor " +
                            std::to_string(f_));
        const int64_t lh = h / f_, lw = w / f_;
        TensorD out({n, ch, lh, lw}, 0.0);
        const double inv = 1.0 / static_cast<double>(f_ * f_);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < ch; ++c)
                for (int64_t y = 0; y < lh; ++y)
                    for (int64_t x = 0; x < lw; ++x) {
                        double acc = 0.0;
                        for (int64_t dy = 0; dy < f_; ++dy)
                            for (int64_t dx = 0; dx < f_; ++dx)
                                acc += pixels.at(i, c, y * f_ + dy, x * f_ + dx);
                        out.at(i, c, y, x) = acc * inv;
                    }
        return out;
    }

    TensorD decode(const TensorD& latent) const override {
        if (latent.rank() != 4)
            throw DataError("codec: expected frames x channels x h x w, got " + latent.shape_string());
        const int64_t n = latent.dim(0), ch = latent.dim(1), lh = latent.dim(2), lw = latent.dim(3);
        TensorD out({n, ch, lh * f_, lw * f_}, 0.0);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t c = 0; c < ch; ++c)
                for (int64_t y = 0; y < lh * f_; ++y)
                    for (int64_t x = 0; x < lw * f_; ++x) out.at(i, c, y, x) = latent.at(i, c, y / f_, x / f_);
        return out;
    }

    int64_t factor() const override { return f_; }

private:
    int64_t f_;
};

}  // namespace xavdt
