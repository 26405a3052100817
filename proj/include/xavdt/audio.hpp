#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xavdt/tensor.hpp"

namespace xavdt {

// Deterministic stand-in for a pretrained speech encoder: log-mel energies
// per video frame pushed through a stack of frozen random tanh layers, every
// layer's output exposed so downstream code can concatenate the last K.
struct AudioEmbedderConfig {
    int64_t sample_rate = 16000;
    int64_t window = 256;  // analysis window, samples (Hann)
    int64_t n_mels = 16;
    int64_t layers = 14;
    int64_t layer_dim = 12;
    uint64_t seed = 0xad10;

    std::string id() const;  // provenance tag, folded into feature hashes
};

class AudioEmbedder {
public:
    explicit AudioEmbedder(const AudioEmbedderConfig& cfg);

    // One analysis window per video frame (centered at the frame time).
    // Returns layers x frames x layer_dim.
    TensorD layered_features(const std::vector<float>& wav, int64_t sample_rate, int64_t frames, double fps) const;

    const AudioEmbedderConfig& config() const { return cfg_; }

private:
    AudioEmbedderConfig cfg_;
    TensorD mel_weights_;  // n_mels x (window/2 + 1)
    std::vector<TensorD> layer_w_, layer_b_;
};

struct AudioContextConfig {
    int64_t last_k = 12;  // layers concatenated per frame
    int64_t context = 5;  // local window, frames (t-2..t+2), edge-replicated
    int64_t out_dim = 8;  // token width handed to the cross-attention sites
    uint64_t seed = 0xc0de;
    bool identity_projection = false;  // requires out_dim == context*last_k*layer_dim
};

struct AudioCondition {
    TensorD tokens;  // frames x out_dim
    std::string provenance;
};

// layered: layers x frames x layer_dim (as produced by AudioEmbedder).
AudioCondition audio_context(const TensorD& layered, const AudioContextConfig& cfg);

// 16-bit PCM mono WAV io; samples in [-1, 1].
std::vector<float> read_wav(const std::string& path, int64_t* sample_rate);
void write_wav(const std::string& path, const std::vector<float>& samples, int64_t sample_rate);

}  // namespace xavdt
