#include "xavdt/detector.hpp"

#include <cmath>
#include <sstream>

namespace xavdt {

void DetectorConfig::validate() const {
    if (!(lambda_tri >= 0.0 && lambda_tri <= 1.0))
        throw ConfigError("detector: lambda " + std::to_string(lambda_tri) + " outside [0,1]");
    if (!(margin > 0.0)) throw ConfigError("detector: margin must be positive");
    if (conv_stack < 1) throw ConfigError("detector: conv stack depth must be >= 1");
    if (encoder_layers < 1) throw ConfigError("detector: encoder needs at least one layer");
    if (!use_phi && !use_psi) throw ConfigError("detector: both streams disabled");
    if (phi_in() < 1 || psi_channels < 1) throw ConfigError("detector: stream input channels must be positive");
    if (encoder_channels < 1 || encoder_channels % encoder_groups != 0)
        throw ConfigError("detector: encoder channels " + std::to_string(encoder_channels) +
                          " not divisible by groups " + std::to_string(encoder_groups));
    if (fused_channels % 4 != 0)
        throw ConfigError("detector: fused channels must be divisible by 4 for the position code");
    if (fused_channels % attn_heads != 0)
        throw ConfigError("detector: fused channels " + std::to_string(fused_channels) + " not divisible by " +
                          std::to_string(attn_heads) + " heads");
    if (fused_channels < 2 || (fused_channels / 2) % block_groups != 0)
        throw ConfigError("detector: fused stack bottleneck " + std::to_string(fused_channels / 2) +
                          " not divisible by cardinality " + std::to_string(block_groups));
    if (embed_dim < 1) throw ConfigError("detector: embedding width must be positive");
    if (v_spatial_stride < 1) throw ConfigError("detector: spatial stride must be >= 1");
    if (mask_mode != "fixed" && mask_mode != "joint")
        throw ConfigError("detector: unknown mask mode '" + mask_mode + "'");
    if (mining != "random" && mining != "semi-hard")
        throw ConfigError("detector: unknown mining policy '" + mining + "'");
    if (!(lr > 0.0)) throw ConfigError("detector: learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("detector: weight decay must be non-negative");
    if (batch < 1 || epochs < 1) throw ConfigError("detector: batch and epochs must be >= 1");
}

DetectorConfig DetectorConfig::desk_scale() {
    DetectorConfig c;
    c.psi_channels = 8;
    c.encoder_channels = 32;
    c.encoder_groups = 4;
    c.v_spatial_stride = 1;
    c.fused_channels = 32;
    c.block_groups = 8;
    c.embed_dim = 16;
    return c;
}

std::string DetectorConfig::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << "phi_channels = " << phi_channels << "\n";
    os << "psi_channels = " << psi_channels << "\n";
    os << "encoder_channels = " << encoder_channels << "\n";
    os << "encoder_layers = " << encoder_layers << "\n";
    os << "encoder_groups = " << encoder_groups << "\n";
    os << "v_spatial_stride = " << v_spatial_stride << "\n";
    os << "fused_channels = " << fused_channels << "\n";
    os << "attn_heads = " << attn_heads << "\n";
    os << "conv_stack = " << conv_stack << "\n";
    os << "block_groups = " << block_groups << "\n";
    os << "embed_dim = " << embed_dim << "\n";
    os << "use_phi = " << (use_phi ? 1 : 0) << "\n";
    os << "use_psi = " << (use_psi ? 1 : 0) << "\n";
    os << "use_residual = " << (use_residual ? 1 : 0) << "\n";
    os << "mask_mode = " << mask_mode << "\n";
    os << "margin = " << margin << "\n";
    os << "lambda = " << lambda_tri << "\n";
    os << "mining = " << mining << "\n";
    os << "lr = " << lr << "\n";
    os << "weight_decay = " << weight_decay << "\n";
    os << "batch = " << batch << "\n";
    os << "epochs = " << epochs << "\n";
    os << "seed = " << seed << "\n";
    return os.str();
}

DetectorConfig DetectorConfig::parse(const std::string& text) {
    DetectorConfig c;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("detector config: malformed line '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "phi_channels") c.phi_channels = std::stoll(val);
            else if (key == "psi_channels") c.psi_channels = std::stoll(val);
            else if (key == "encoder_channels") c.encoder_channels = std::stoll(val);
            else if (key == "encoder_layers") c.encoder_layers = std::stoll(val);
            else if (key == "encoder_groups") c.encoder_groups = std::stoll(val);
            else if (key == "v_spatial_stride") c.v_spatial_stride = std::stoll(val);
            else if (key == "fused_channels") c.fused_channels = std::stoll(val);
            else if (key == "attn_heads") c.attn_heads = std::stoll(val);
            else if (key == "conv_stack") c.conv_stack = std::stoll(val);
            else if (key == "block_groups") c.block_groups = std::stoll(val);
            else if (key == "embed_dim") c.embed_dim = std::stoll(val);
            else if (key == "use_phi") c.use_phi = std::stoll(val) != 0;
            else if (key == "use_psi") c.use_psi = std::stoll(val) != 0;
            else if (key == "use_residual") c.use_residual = std::stoll(val) != 0;
            else if (key == "mask_mode") c.mask_mode = val;
            else if (key == "margin") c.margin = std::stod(val);
            else if (key == "lambda") c.lambda_tri = std::stod(val);
            else if (key == "mining") c.mining = val;
            else if (key == "lr") c.lr = std::stod(val);
            else if (key == "weight_decay") c.weight_decay = std::stod(val);
            else if (key == "batch") c.batch = std::stoll(val);
            else if (key == "epochs") c.epochs = std::stoll(val);
            else if (key == "seed") c.seed = std::stoull(val);
            else throw ConfigError("detector config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("detector config: bad value for '" + key + "': " + val);
        } catch (const std::out_of_range&) {
            throw ConfigError("detector config: value out of range for '" + key + "': " + val);
        }
    }
    return c;
}

namespace {
// k=3, p=1 convolution output extent
int64_t conv_extent(int64_t x, int64_t stride) { return (x - 1) / stride + 1; }
}  // namespace

StageShapes detector_shapes(const DetectorConfig& cfg, int64_t frames, std::array<int64_t, 2> phi_hw,
                            std::array<int64_t, 2> psi_hw) {
    cfg.validate();
    if (frames < 1) throw DataError("detector shapes: frame count must be positive");
    StageShapes ss;
    int64_t gh = 0, gw = 0;
    if (cfg.use_phi) {
        gh = conv_extent(phi_hw[0], cfg.v_spatial_stride);
        gw = conv_extent(phi_hw[1], cfg.v_spatial_stride);
        ss.v_out = {cfg.encoder_channels, frames, gh, gw};
    }
    if (cfg.use_psi) {
        ss.a_out = {cfg.encoder_channels, frames, psi_hw[0], psi_hw[1]};
        if (cfg.use_phi && (gh != psi_hw[0] || gw != psi_hw[1])) {
            std::ostringstream os;
            os << "encoded streams disagree: composite " << gh << "x" << gw << " vs attention " << psi_hw[0] << "x"
               << psi_hw[1];
            throw ConfigError(os.str());
        }
        gh = psi_hw[0];
        gw = psi_hw[1];
    }
    ss.concat_channels = cfg.concat_channels();
    ss.fused = {cfg.fused_channels, frames, gh, gw};
    ss.tokens = gh * gw;
    ss.g_dim = cfg.fused_channels;
    return ss;
}

double bce_loss(const std::vector<double>& logits, const std::vector<int>& labels) {
    if (logits.size() != labels.size()) throw DataError("bce: logit/label count mismatch");
    for (int y : labels)
        if (y != 0 && y != 1) throw DataError("bce: labels must be 0 or 1");
    return nn::bce_with_logits<double>(logits.data(), labels.data(), static_cast<int64_t>(logits.size()));
}

double triplet_loss(const TripletBatch& batch, double m) {
    if (!(m > 0.0)) throw ConfigError("triplet: margin must be positive");
    const int64_t n = batch.size();
    if (n == 0) return 0.0;
    if (!batch.anchors.same_shape(batch.positives) || !batch.anchors.same_shape(batch.negatives))
        throw DataError("triplet: embedding blocks disagree: " + batch.anchors.shape_string() + " vs " +
                        batch.positives.shape_string() + " vs " + batch.negatives.shape_string());
    if (static_cast<int64_t>(batch.anchor_labels.size()) != n ||
        static_cast<int64_t>(batch.positive_labels.size()) != n ||
        static_cast<int64_t>(batch.negative_labels.size()) != n)
        throw DataError("triplet: label lists do not cover the batch");
    const int64_t d = batch.anchors.dim(1);
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (batch.anchor_labels[static_cast<size_t>(i)] != batch.positive_labels[static_cast<size_t>(i)] ||
            batch.anchor_labels[static_cast<size_t>(i)] == batch.negative_labels[static_cast<size_t>(i)])
            throw DataError("triplet " + std::to_string(i) + " is malformed: labels (a,p,n) = (" +
                            std::to_string(batch.anchor_labels[static_cast<size_t>(i)]) + "," +
                            std::to_string(batch.positive_labels[static_cast<size_t>(i)]) + "," +
                            std::to_string(batch.negative_labels[static_cast<size_t>(i)]) + ")");
        double dap = 0.0, dan = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double ap = batch.anchors.at(i, j) - batch.positives.at(i, j);
            const double an = batch.anchors.at(i, j) - batch.negatives.at(i, j);
            dap += ap * ap;
            dan += an * an;
        }
        total += std::max(0.0, dap - dan + m);
    }
    return total / static_cast<double>(n);
}

double total_loss(double bce, double tri, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("total loss: lambda outside [0,1]");
    return (1.0 - lambda) * bce + lambda * tri;
}

template <typename T>
std::vector<std::array<int64_t, 3>> mine_triplet_indices(const Tensor<T>& u, const std::vector<int>& labels,
                                                         const std::string& policy, Rng& rng) {
    if (policy != "random" && policy != "semi-hard")
        throw ConfigError("triplet mining: unknown policy '" + policy + "'");
    const int64_t n = u.dim(0);
    if (static_cast<int64_t>(labels.size()) != n) throw DataError("triplet mining: label count mismatch");

    std::vector<int64_t> by_class[2];
    for (int64_t i = 0; i < n; ++i) {
        if (labels[static_cast<size_t>(i)] != 0 && labels[static_cast<size_t>(i)] != 1)
            throw DataError("triplet mining: labels must be 0 or 1");
        by_class[labels[static_cast<size_t>(i)]].push_back(i);
    }
    if (by_class[0].empty() || by_class[1].empty()) return {};  // single-class: triplet term sits out

    const int64_t d = u.dim(1);
    auto dist2 = [&](int64_t i, int64_t j) {
        double s = 0.0;
        for (int64_t k = 0; k < d; ++k) {
            const double c = static_cast<double>(u[i * d + k]) - static_cast<double>(u[j * d + k]);
            s += c * c;
        }
        return s;
    };

    std::vector<std::array<int64_t, 3>> out;
    out.reserve(static_cast<size_t>(n));
    for (int64_t a = 0; a < n; ++a) {
        const auto& same = by_class[labels[static_cast<size_t>(a)]];
        const auto& other = by_class[1 - labels[static_cast<size_t>(a)]];

        int64_t pos = a;  // degenerate positive when the anchor is alone in its class
        if (same.size() > 1) {
            do {
                pos = same[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(same.size()) - 1))];
            } while (pos == a);
        }

        int64_t neg;
        if (policy == "random") {
            neg = other[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(other.size()) - 1))];
        } else {
            // semi-hard: the closest negative lying beyond the positive;
            // fall back to the farthest negative when none qualifies
            const double dap = dist2(a, pos);
            int64_t best_semi = -1, easiest = other[0];
            double best_semi_d = 0.0, easiest_d = -1.0;
            for (int64_t cand : other) {
                const double dan = dist2(a, cand);
                if (dan > dap && (best_semi < 0 || dan < best_semi_d)) {
                    best_semi = cand;
                    best_semi_d = dan;
                }
                if (dan > easiest_d) {
                    easiest = cand;
                    easiest_d = dan;
                }
            }
            neg = best_semi >= 0 ? best_semi : easiest;
        }
        out.push_back({a, pos, neg});
    }
    return out;
}

template std::vector<std::array<int64_t, 3>> mine_triplet_indices<float>(const TensorF&, const std::vector<int>&,
                                                                         const std::string&, Rng&);
template std::vector<std::array<int64_t, 3>> mine_triplet_indices<double>(const TensorD&, const std::vector<int>&,
                                                                          const std::string&, Rng&);

TripletBatch mine_triplets(const TensorD& u, const std::vector<int>& labels, const std::string& policy,
                           uint64_t seed) {
    Rng rng(derive_seed(seed, "triplet.mine"));
    const auto idx = mine_triplet_indices(u, labels, policy, rng);
    TripletBatch batch;
    const int64_t d = u.empty() ? 0 : u.dim(1);
    const int64_t n = static_cast<int64_t>(idx.size());
    if (n == 0) return batch;
    batch.anchors = TensorD({n, d}, 0.0);
    batch.positives = TensorD({n, d}, 0.0);
    batch.negatives = TensorD({n, d}, 0.0);
    for (int64_t i = 0; i < n; ++i) {
        const auto [a, p, g] = idx[static_cast<size_t>(i)];
        for (int64_t j = 0; j < d; ++j) {
            batch.anchors.at(i, j) = u.at(a, j);
            batch.positives.at(i, j) = u.at(p, j);
            batch.negatives.at(i, j) = u.at(g, j);
        }
        batch.anchor_labels.push_back(labels[static_cast<size_t>(a)]);
        batch.positive_labels.push_back(labels[static_cast<size_t>(p)]);
        batch.negative_labels.push_back(labels[static_cast<size_t>(g)]);
    }
    return batch;
}

template class DetectorModel<float>;
template class DetectorModel<double>;

}  // namespace xavdt
