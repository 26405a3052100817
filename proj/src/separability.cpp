#include "xavdt/separability.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace xavdt {

namespace {

struct Moments {
    double mean, var;  // unbiased variance
};

Moments moments(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) {
        if (!std::isfinite(x)) throw DataError("non-finite projection value");
        mean += x;
    }
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return {mean, var};
}

}  // namespace

double fisher_snr_db(const std::vector<double>& class0, const std::vector<double>& class1) {
    if (class0.size() < 2 || class1.size() < 2)
        throw DataError("fisher ratio needs at least two samples per class; got " +
                        std::to_string(class0.size()) + " and " + std::to_string(class1.size()));
    const Moments m0 = moments(class0);
    const Moments m1 = moments(class1);
    const double denom = m0.var + m1.var;
    if (denom <= 0.0) throw NumericError("zero pooled variance in fisher ratio");
    const double gap = m1.mean - m0.mean;
    if (gap == 0.0) return kFisherFloorDb;
    return 10.0 * std::log10(gap * gap / denom);
}

SeparabilityReport lda_fit_and_margin(const TensorD& embeddings, const std::vector<int>& labels) {
    if (embeddings.rank() != 2)
        throw DataError("embeddings must be [n, dim], got rank " +
                        std::to_string(embeddings.rank()));
    const int64_t n = embeddings.dim(0);
    const int64_t d = embeddings.dim(1);
    if (d < 2) throw DataError("a 2-D separability basis needs at least 2 feature dimensions");
    if (static_cast<int64_t>(labels.size()) != n)
        throw DataError("label count does not match embedding rows");
    int64_t n0 = 0, n1 = 0;
    for (int v : labels) {
        if (v == 0)
            ++n0;
        else if (v == 1)
            ++n1;
        else
            throw DataError("labels must be 0 or 1");
    }
    if (n0 < 2 || n1 < 2) throw DataError("need at least two samples per class");

    using Mat = Eigen::MatrixXd;
    using Vec = Eigen::VectorXd;
    Eigen::Map<const Mat, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>> X(
        embeddings.data(), n, d, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(1, d));

    Vec mu0 = Vec::Zero(d), mu1 = Vec::Zero(d);
    for (int64_t i = 0; i < n; ++i)
        (labels[i] == 0 ? mu0 : mu1) += X.row(i).transpose();
    mu0 /= static_cast<double>(n0);
    mu1 /= static_cast<double>(n1);

    Mat sw = Mat::Zero(d, d);
    for (int64_t i = 0; i < n; ++i) {
        const Vec c = X.row(i).transpose() - (labels[i] == 0 ? mu0 : mu1);
        sw += c * c.transpose();
    }
    const double tr = sw.trace();
    if (!(tr > 0.0)) throw NumericError("degenerate within-class scatter");
    sw += (1e-6 * tr / static_cast<double>(d)) * Mat::Identity(d, d);

    const Vec gap = mu1 - mu0;
    if (gap.norm() == 0.0) throw NumericError("class means coincide; discriminant is undefined");
    Vec w = sw.ldlt().solve(gap);
    if (!w.allFinite() || w.norm() == 0.0)
        throw NumericError("discriminant solve produced a degenerate axis");
    w.normalize();
    if (w.dot(gap) < 0.0) w = -w;  // point from real toward fake

    std::vector<double> p0, p1;
    for (int64_t i = 0; i < n; ++i)
        (labels[i] == 0 ? p0 : p1).push_back(w.dot(X.row(i).transpose()));
    const Moments m0 = moments(p0);
    const Moments m1 = moments(p1);
    const double pooled =
        std::sqrt(((static_cast<double>(n0 - 1)) * m0.var + (static_cast<double>(n1 - 1)) * m1.var) /
                  static_cast<double>(n0 + n1 - 2));
    if (!(pooled > 0.0)) throw NumericError("zero pooled spread along the discriminant");

    SeparabilityReport rep;
    rep.lda_margin = std::abs(m1.mean - m0.mean) / pooled;
    rep.fisher_db = fisher_snr_db(p0, p1);

    // Second basis axis: top principal direction of the data deflated
    // against w, for a faithful 2-D scatter of the embedding cloud.
    Vec gmean = Vec::Zero(d);
    for (int64_t i = 0; i < n; ++i) gmean += X.row(i).transpose();
    gmean /= static_cast<double>(n);
    Mat cov = Mat::Zero(d, d);
    for (int64_t i = 0; i < n; ++i) {
        Vec c = X.row(i).transpose() - gmean;
        c -= w * w.dot(c);
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    Vec u = eig.eigenvectors().col(d - 1);  // ascending eigenvalues
    if (eig.eigenvalues()(d - 1) <= 1e-12 * (1.0 + std::abs(tr))) {
        // No spread off the axis: pick a deterministic orthogonal direction.
        int64_t k = 0;
        for (int64_t i = 1; i < d; ++i)
            if (std::abs(w(i)) < std::abs(w(k))) k = i;
        u = Vec::Zero(d);
        u(k) = 1.0;
    }
    u -= w * w.dot(u);
    if (u.norm() == 0.0) throw NumericError("failed to build an orthogonal basis axis");
    u.normalize();
    int64_t big = 0;
    for (int64_t i = 1; i < d; ++i)
        if (std::abs(u(i)) > std::abs(u(big))) big = i;
    if (u(big) < 0.0) u = -u;  // sign convention keeps the basis reproducible

    rep.basis = TensorD({2, d});
    for (int64_t i = 0; i < d; ++i) {
        rep.basis.at(0, i) = w(i);
        rep.basis.at(1, i) = u(i);
    }
    rep.projections = TensorD({n, 2});
    for (int64_t i = 0; i < n; ++i) {
        rep.projections.at(i, 0) = w.dot(X.row(i).transpose());
        rep.projections.at(i, 1) = u.dot(X.row(i).transpose());
    }
    return rep;
}

}  // namespace xavdt
