#include "xavdt/train.hpp"

#include <cmath>

namespace xavdt {

namespace {

// strip the residual block (last 3 channels) from a [C,N,H,W] volume
TensorF drop_residual(const TensorF& phi) {
    const int64_t c = phi.dim(0) - 3;
    TensorF out({c, phi.dim(1), phi.dim(2), phi.dim(3)}, 0.0f);
    std::copy(phi.data(), phi.data() + out.numel(), out.data());
    return out;
}

TensorF stack_batch(const std::vector<const TensorF*>& parts) {
    std::vector<int64_t> shape = parts.front()->shape();
    shape.insert(shape.begin(), static_cast<int64_t>(parts.size()));
    TensorF out(shape, 0.0f);
    const int64_t per = parts.front()->numel();
    for (size_t i = 0; i < parts.size(); ++i)
        std::copy(parts[i]->data(), parts[i]->data() + per, out.data() + static_cast<int64_t>(i) * per);
    return out;
}

struct BatchTensors {
    TensorF phi, psi;
    std::vector<int> labels;
};

BatchTensors assemble(const FeatureDataset& ds, const std::vector<int64_t>& order, int64_t begin, int64_t count,
                      const DetectorConfig& cfg, std::vector<TensorF>& scratch) {
    BatchTensors b;
    scratch.clear();
    scratch.reserve(static_cast<size_t>(count));  // pointers below must stay valid
    std::vector<const TensorF*> phis, psis;
    for (int64_t i = 0; i < count; ++i) {
        const FeatureSample& s = ds.samples[static_cast<size_t>(order[static_cast<size_t>(begin + i)])];
        if (cfg.use_phi && !cfg.use_residual) {
            scratch.push_back(drop_residual(s.phi));
            phis.push_back(&scratch.back());
        } else {
            phis.push_back(&s.phi);
        }
        psis.push_back(&s.psi);
        b.labels.push_back(s.label);
    }
    if (cfg.use_phi) b.phi = stack_batch(phis);
    if (cfg.use_psi) b.psi = stack_batch(psis);
    return b;
}

}  // namespace

void FeatureDataset::validate(const DetectorConfig& cfg) const {
    if (samples.empty()) throw DataError("training set is empty");
    bool has[2] = {false, false};
    const FeatureSample& first = samples.front();
    for (const FeatureSample& s : samples) {
        if (s.label != 0 && s.label != 1) throw DataError("labels must be 0 or 1: clip " + s.clip_id);
        has[s.label] = true;
        if (cfg.use_phi) {
            if (s.phi.rank() != 4 || s.phi.dim(0) != cfg.phi_channels)
                throw DataError("clip " + s.clip_id + ": composite volume " + s.phi.shape_string() + " (need " +
                                std::to_string(cfg.phi_channels) + " channels first)");
            if (!s.phi.same_shape(first.phi)) throw DataError("clip " + s.clip_id + ": composite shape differs");
        }
        if (cfg.use_psi) {
            const int want_rank = cfg.mask_mode == "joint" ? 5 : 4;
            if (s.psi.rank() != want_rank)
                throw DataError("clip " + s.clip_id + ": attention volume " + s.psi.shape_string() + " (rank " +
                                std::to_string(want_rank) + " expected for " + cfg.mask_mode + " mask mode)");
            if (!s.psi.same_shape(first.psi)) throw DataError("clip " + s.clip_id + ": attention shape differs");
        }
    }
    if (!has[0] || !has[1]) throw DataError("training needs both classes present");
}

Checkpoint train(const FeatureDataset& dataset, const DetectorConfig& cfg) {
    cfg.validate();
    dataset.validate(cfg);
    const FeatureSample& first = dataset.samples.front();

    std::array<int64_t, 2> phi_hw{1, 1}, psi_hw{1, 1};
    if (cfg.use_phi) phi_hw = {first.phi.dim(2), first.phi.dim(3)};
    if (cfg.use_psi) {
        const int64_t r = first.psi.rank();
        psi_hw = {first.psi.dim(r - 2), first.psi.dim(r - 1)};
    }
    if (!cfg.use_phi) phi_hw = psi_hw;
    if (!cfg.use_psi) psi_hw = {0, 0};
    if (cfg.use_phi && !cfg.use_psi) {
        // keep shape bookkeeping consistent for the single-stream ablation
        psi_hw = {(phi_hw[0] - 1) / cfg.v_spatial_stride + 1, (phi_hw[1] - 1) / cfg.v_spatial_stride + 1};
    }

    DetectorModel<float> model(cfg, phi_hw, psi_hw);
    AdamW<float> opt(model.params(), cfg.lr, cfg.weight_decay);

    const int64_t n = dataset.size();
    const double lambda = cfg.lambda_tri;

    TrainLog log;
    // last-good snapshot for the non-finite-loss abort path
    std::vector<TensorF> good;
    auto snapshot = [&] {
        good.clear();
        for (auto& p : model.params()) good.push_back(*p.v);
    };
    auto restore = [&] {
        auto ps = model.params();
        for (size_t i = 0; i < ps.size(); ++i) *ps[i].v = good[i];
    };
    snapshot();

    std::vector<TensorF> scratch;
    for (int64_t epoch = 0; epoch < cfg.epochs && !log.aborted; ++epoch) {
        Rng order_rng(derive_seed(cfg.seed, "train.order." + std::to_string(epoch)));
        const std::vector<int64_t> order = order_rng.permutation(n);

        double ep_bce = 0.0, ep_tri = 0.0, ep_total = 0.0;
        int64_t ep_steps = 0;
        for (int64_t begin = 0; begin < n; begin += cfg.batch) {
            const int64_t count = std::min(cfg.batch, n - begin);
            BatchTensors batch = assemble(dataset, order, begin, count, cfg, scratch);

            DetectorModel<float>::Tape tape;
            auto out = model.forward(batch.phi, batch.psi, tape);

            TensorF dlogits({count}, 0.0f);
            const double bce =
                nn::bce_with_logits<float>(out.logits.data(), batch.labels.data(), count, dlogits.data());
            for (int64_t i = 0; i < count; ++i) dlogits[i] *= static_cast<float>(1.0 - lambda);

            Rng mine_rng(derive_seed(cfg.seed, "train.mine." + std::to_string(epoch) + "." + std::to_string(begin)));
            const auto triplets = mine_triplet_indices(out.u, batch.labels, cfg.mining, mine_rng);

            double tri = 0.0;
            TensorF du(out.u.shape(), 0.0f);
            if (!triplets.empty()) {
                const int64_t e = out.u.dim(1);
                const double inv = 1.0 / static_cast<double>(triplets.size());
                for (const auto& [a, p, g] : triplets) {
                    double dap = 0.0, dan = 0.0;
                    for (int64_t j = 0; j < e; ++j) {
                        const double ap = out.u.at(a, j) - out.u.at(p, j);
                        const double an = out.u.at(a, j) - out.u.at(g, j);
                        dap += ap * ap;
                        dan += an * an;
                    }
                    const double hinge = dap - dan + cfg.margin;
                    if (hinge <= 0.0) continue;
                    tri += hinge * inv;
                    const float s = static_cast<float>(2.0 * lambda * inv);
                    for (int64_t j = 0; j < e; ++j) {
                        du.at(a, j) += s * (out.u.at(g, j) - out.u.at(p, j));
                        du.at(p, j) += s * (out.u.at(p, j) - out.u.at(a, j));
                        du.at(g, j) += s * (out.u.at(a, j) - out.u.at(g, j));
                    }
                }
            }

            const double total = (1.0 - lambda) * bce + lambda * tri;
            if (!std::isfinite(total)) {
                restore();
                log.aborted = true;
                break;
            }

            model.backward(dlogits, du, TensorF{}, tape);
            // a finite loss can still hide poisoned gradients (0 x NaN in the
            // backward GEMMs), so guard the update itself as well
            bool grads_ok = true;
            for (auto& p : model.params())
                if (!p.g->all_finite()) {
                    grads_ok = false;
                    break;
                }
            if (!grads_ok) {
                restore();
                log.aborted = true;
                break;
            }
            opt.step();
            model.zero_grads();

            ep_bce += bce;
            ep_tri += tri;
            ep_total += total;
            ++ep_steps;
            ++log.steps;
        }
        if (ep_steps > 0)
            log.curve.push_back({ep_bce / static_cast<double>(ep_steps), ep_tri / static_cast<double>(ep_steps),
                                 ep_total / static_cast<double>(ep_steps)});
        if (!log.aborted) snapshot();
    }

    Checkpoint ckpt;
    ckpt.config_text = cfg.serialize();
    ckpt.seed = cfg.seed;
    ckpt.phi_h = phi_hw[0];
    ckpt.phi_w = phi_hw[1];
    ckpt.psi_h = psi_hw[0];
    ckpt.psi_w = psi_hw[1];
    ckpt.log = log;
    for (auto& p : model.params()) ckpt.tensors.emplace_back(p.name, *p.v);
    return ckpt;
}

Predictor::Predictor(const Checkpoint& ckpt) : cfg_(DetectorConfig::parse(ckpt.config_text)) {
    cfg_.validate();
    std::array<int64_t, 2> phi_hw{ckpt.phi_h, ckpt.phi_w}, psi_hw{ckpt.psi_h, ckpt.psi_w};
    model_ = std::make_unique<DetectorModel<float>>(cfg_, phi_hw, psi_hw);
    auto params = model_->params();
    if (params.size() != ckpt.tensors.size())
        throw DataError("checkpoint carries " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                        std::to_string(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& [name, t] = ckpt.tensors[i];
        if (name != params[i].name)
            throw DataError("checkpoint tensor '" + name + "' does not match model parameter '" + params[i].name +
                            "'");
        if (!t.same_shape(*params[i].v))
            throw DataError("checkpoint tensor '" + name + "' has shape " + t.shape_string() + ", model expects " +
                            params[i].v->shape_string());
        *params[i].v = t;
    }
}

std::pair<double, DetectorOutput> Predictor::predict(const FeatureSample& sample) {
    // same channel slicing and stacking as the training path
    BatchTensors batch;
    if (cfg_.use_phi) {
        const TensorF phi = cfg_.use_residual ? sample.phi : drop_residual(sample.phi);
        batch.phi = stack_batch({&phi});
    }
    if (cfg_.use_psi) batch.psi = stack_batch({&sample.psi});

    DetectorModel<float>::Tape tape;
    auto out = model_->forward(batch.phi, batch.psi, tape);

    DetectorOutput o;
    o.s = static_cast<double>(out.logits[0]);
    o.u.assign(out.u.data(), out.u.data() + out.u.numel());
    o.g.assign(out.g.data(), out.g.data() + out.g.numel());
    return {static_cast<double>(nn::sigmoid(o.s)), o};
}

std::vector<double> Predictor::scores(const FeatureDataset& dataset) {
    std::vector<double> out;
    out.reserve(dataset.samples.size());
    for (const auto& s : dataset.samples) out.push_back(predict(s).first);
    return out;
}

std::pair<TensorF, TensorF> Predictor::probe_gradients(const FeatureSample& sample,
                                                       int target_label,
                                                       const std::string& layer) {
    if (target_label != 0 && target_label != 1)
        throw ConfigError("probe target must be 0 or 1");
    bool known = layer == "fused";
    for (int i = 0; i < cfg_.conv_stack && !known; ++i)
        known = layer == "block." + std::to_string(i);
    if (!known)
        throw ConfigError("unknown probe layer '" + layer + "'; valid: fused, block.0 .. block." +
                          std::to_string(cfg_.conv_stack - 1));

    BatchTensors batch;
    if (cfg_.use_phi) {
        const TensorF phi = cfg_.use_residual ? sample.phi : drop_residual(sample.phi);
        batch.phi = stack_batch({&phi});
    }
    if (cfg_.use_psi) batch.psi = stack_batch({&sample.psi});

    DetectorModel<float>::Tape tape;
    tape.capture = layer;
    model_->forward(batch.phi, batch.psi, tape);
    TensorF dlogits({1});
    dlogits[0] = target_label == 1 ? 1.0f : -1.0f;
    model_->backward(dlogits, TensorF{}, TensorF{}, tape);
    model_->zero_grads();  // probe must not leave grad residue behind

    // strip the batch-of-one axis
    const auto& a = tape.captured_act;
    const auto& g = tape.captured_grad;
    const std::vector<int64_t> shape{a.dim(1), a.dim(2), a.dim(3), a.dim(4)};
    return {a.reshaped(shape), g.reshaped(shape)};
}

}  // namespace xavdt
