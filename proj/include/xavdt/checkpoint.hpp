#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xavdt/hash.hpp"
#include "xavdt/tensor.hpp"

namespace xavdt {

struct EpochLoss {
    double bce = 0.0;
    double tri = 0.0;
    double total = 0.0;
};

struct TrainLog {
    std::vector<EpochLoss> curve;
    int64_t steps = 0;
    bool aborted = false;  // training hit a non-finite loss and kept the last good state
};

// Trained-model container: serialized config, seed, loss curve, and the
// parameter tensors in collection order. Persisted as a versioned binary
// file with a JSON directory; unknown directory keys are rejected on load.
struct Checkpoint {
    std::string config_text;
    uint64_t seed = 0;
    int64_t phi_h = 0, phi_w = 0, psi_h = 0, psi_w = 0;  // input grids the model was built for
    TrainLog log;
    std::vector<std::pair<std::string, TensorF>> tensors;

    Sha256 config_hash() const { return sha256(config_text); }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// content digest over header + payload, for run-to-run comparisons
std::string checkpoint_digest(const Checkpoint& ckpt);

}  // namespace xavdt
