#pragma once

#include <memory>
#include <string>
#include <vector>

#include "xavdt/checkpoint.hpp"
#include "xavdt/detector.hpp"

namespace xavdt {

// One training/eval example: channel-first feature volumes plus a label.
struct FeatureSample {
    TensorF phi;  // [C_phi, N, H, W]
    TensorF psi;  // [C_psi, N, h, w], or [3, C_psi, N, h, w] in joint mask mode
    int label = 0;
    std::string clip_id;
};

struct FeatureDataset {
    std::vector<FeatureSample> samples;

    int64_t size() const { return static_cast<int64_t>(samples.size()); }
    // shape consistency, binary labels, and both-classes-present checks
    void validate(const DetectorConfig& cfg) const;
};

// AdamW with decoupled weight decay, constant learning rate.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<nn::ParamRef<T>> params, double lr, double weight_decay, double beta1 = 0.9,
          double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
        for (auto& p : params_) {
            m_.emplace_back(p.v->shape(), T{});
            v_.emplace_back(p.v->shape(), T{});
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            T* w = params_[i].v->data();
            const T* g = params_[i].g->data();
            T* m = m_[i].data();
            T* v = v_[i].data();
            const int64_t n = params_[i].v->numel();
            for (int64_t j = 0; j < n; ++j) {
                const double gj = g[j];
                const double mj = b1_ * m[j] + (1.0 - b1_) * gj;
                const double vj = b2_ * v[j] + (1.0 - b2_) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps_) + wd_ * w[j];
                w[j] = static_cast<T>(w[j] - lr_ * update);
            }
        }
    }

    int64_t steps() const { return t_; }

private:
    std::vector<nn::ParamRef<T>> params_;
    std::vector<Tensor<T>> m_, v_;
    double lr_, wd_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

// Full training run; bit-reproducible for a fixed config/seed/dataset order.
Checkpoint train(const FeatureDataset& dataset, const DetectorConfig& cfg);

// Inference wrapper around a checkpoint.
class Predictor {
public:
    explicit Predictor(const Checkpoint& ckpt);

    // score in (0,1) plus raw head outputs
    std::pair<double, DetectorOutput> predict(const FeatureSample& sample);
    std::vector<double> scores(const FeatureDataset& dataset);

    // Forward + backward from the classification logit for one sample,
    // recording the named fused volume ("fused" or "block.<i>") and its
    // gradient, both [C, N, h, w]. target_label = 0 flips the logit sign.
    std::pair<TensorF, TensorF> probe_gradients(const FeatureSample& sample, int target_label,
                                                const std::string& layer);

    const DetectorConfig& config() const { return cfg_; }
    DetectorModel<float>& model() { return *model_; }

private:
    DetectorConfig cfg_;
    std::unique_ptr<DetectorModel<float>> model_;
};

}  // namespace xavdt
