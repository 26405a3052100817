#pragma once

#include <vector>

#include "xavdt/errors.hpp"
#include "xavdt/tensor.hpp"

namespace xavdt {

// Two-class Fisher signal-to-noise ratio in dB:
//   10*log10((mu1 - mu0)^2 / (var0 + var1))
// Each class needs at least two samples. Identical class means return the
// floor value (fully overlapping projections carry no signal), zero pooled
// variance is a numerical error.
double fisher_snr_db(const std::vector<double>& class0, const std::vector<double>& class1);

inline constexpr double kFisherFloorDb = -300.0;

struct SeparabilityReport {
    double fisher_db = 0.0;   // Fisher SNR of the samples projected on the LDA axis
    double lda_margin = 0.0;  // projected mean gap over pooled projected std
    TensorD basis;            // [2, dim]: LDA axis, then top orthogonal principal axis
    TensorD projections;      // [n, 2]: every sample in the plane spanned by the basis
};

// Fits a two-class linear discriminant on row-major embeddings [n, dim] with
// binary labels. The within-class scatter is ridge-regularized with
// eps = 1e-6 * trace / dim before the solve.
SeparabilityReport lda_fit_and_margin(const TensorD& embeddings, const std::vector<int>& labels);

}  // namespace xavdt
