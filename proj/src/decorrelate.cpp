#include "desmil/decorrelate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace desmil {
namespace {

constexpr double kNegativeTolerance = -1e-12;

double median_of(std::vector<double>& values) {
    if (values.empty()) return 0.0;
    auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    return *mid;
}

double bandwidth_for_scalars(std::span<const double> x, const KernelConfig& cfg) {
    if (!cfg.is_median()) return *cfg.sigma;
    std::vector<double> dist;
    dist.reserve(x.size() * (x.size() - 1) / 2);
    for (std::size_t a = 0; a < x.size(); ++a)
        for (std::size_t b = a + 1; b < x.size(); ++b) dist.push_back(std::abs(x[a] - x[b]));
    const double med = median_of(dist);
    return med > 0.0 ? med : 1.0;
}

double bandwidth_for_rows(const Matrix& samples, const KernelConfig& cfg) {
    if (!cfg.is_median()) return *cfg.sigma;
    const std::size_t m = samples.rows();
    std::vector<double> dist;
    dist.reserve(m * (m - 1) / 2);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            double sq = 0.0;
            for (std::size_t j = 0; j < samples.cols(); ++j) {
                const double diff = samples(a, j) - samples(b, j);
                sq += diff * diff;
            }
            dist.push_back(std::sqrt(sq));
        }
    const double med = median_of(dist);
    return med > 0.0 ? med : 1.0;
}

Matrix scalar_kernel(std::span<const double> x, double sigma) {
    const std::size_t m = x.size();
    Matrix k(m, m);
    const double inv = 1.0 / (sigma * sigma);
    for (std::size_t a = 0; a < m; ++a) {
        k(a, a) = 1.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            const double diff = x[a] - x[b];
            const double val = std::exp(-(diff * diff) * inv);
            k(a, b) = val;
            k(b, a) = val;
        }
    }
    return k;
}

// Double centering K -> P K P written as K_ab - r_a - r_b + mean, which is
// symmetric bit-for-bit because the expression is symmetric in (a, b).
Matrix center_symmetric(const Matrix& k) {
    const std::size_t m = k.rows();
    std::vector<double> row_mean(m, 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        double s = 0.0;
        for (std::size_t b = 0; b < m; ++b) s += k(a, b);
        row_mean[a] = s / static_cast<double>(m);
        total += s;
    }
    const double grand = total / static_cast<double>(m * m);
    Matrix out(m, m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b) out(a, b) = k(a, b) - row_mean[a] - row_mean[b] + grand;
    return out;
}

double hsic_from_centered(const Matrix& cu, const Matrix& cv) {
    const std::size_t m = cu.rows();
    double acc = 0.0;
    for (std::size_t i = 0; i < cu.size(); ++i) acc += cu.data()[i] * cv.data()[i];
    const double denom = static_cast<double>(m - 1);
    double value = acc / (denom * denom);
    if (value < 0.0) {
        if (value < kNegativeTolerance)
            throw std::runtime_error("empirical_hsic: negative value beyond rounding tolerance");
        value = 0.0;
    }
    return value;
}

void warn_vacuous_dependence() {
    static bool warned = false;
    if (!warned) {
        warned = true;
        std::cerr << "interest_dependence: fewer than two interest rows, dependence is vacuously 0\n";
    }
}

// Everything one weight step needs at the current weight: weighted rows,
// frozen bandwidths, raw and centered kernels.
struct RowKernels {
    std::vector<std::vector<double>> u;
    std::vector<double> sigma;
    std::vector<Matrix> kernel;
    std::vector<Matrix> centered;
};

RowKernels build_row_kernels(const Matrix& interests, double w, const KernelConfig& cfg) {
    const std::size_t c = interests.rows(), d = interests.cols();
    RowKernels rk;
    rk.u.resize(c);
    rk.sigma.resize(c);
    rk.kernel.reserve(c);
    rk.centered.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        rk.u[i].resize(d);
        for (std::size_t j = 0; j < d; ++j) rk.u[i][j] = w * interests(i, j);
        rk.sigma[i] = bandwidth_for_scalars(rk.u[i], cfg);
        rk.kernel.push_back(scalar_kernel(rk.u[i], rk.sigma[i]));
        rk.centered.push_back(center_symmetric(rk.kernel.back()));
    }
    return rk;
}

double dependence_from_kernels(const RowKernels& rk) {
    double total = 0.0;
    for (std::size_t i = 0; i < rk.centered.size(); ++i)
        for (std::size_t j = i + 1; j < rk.centered.size(); ++j)
            total += hsic_from_centered(rk.centered[i], rk.centered[j]);
    return total;
}

// d/dw of the pairwise dependence with every sigma frozen. Uses
// dK_ab/dw = K_ab * (-2 du_ab dm_ab / sigma^2), du the weighted difference,
// paired against the centered kernel of the other row (trace identity).
double gradient_from_kernels(const Matrix& interests, const RowKernels& rk) {
    const std::size_t c = interests.rows(), d = interests.cols();
    std::vector<Matrix> dkernel;
    dkernel.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        const double inv = 1.0 / (rk.sigma[i] * rk.sigma[i]);
        Matrix dk(d, d);
        for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = a + 1; b < d; ++b) {
                const double du = rk.u[i][a] - rk.u[i][b];
                const double dm = interests(i, a) - interests(i, b);
                const double val = rk.kernel[i](a, b) * (-2.0 * du * dm * inv);
                dk(a, b) = val;
                dk(b, a) = val;
            }
        dkernel.push_back(std::move(dk));
    }
    const double denom = static_cast<double>(d - 1);
    const double norm = 1.0 / (denom * denom);
    double grad = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) {
            double acc = 0.0;
            for (std::size_t idx = 0; idx < dkernel[i].size(); ++idx)
                acc += dkernel[i].data()[idx] * rk.centered[j].data()[idx] +
                       rk.centered[i].data()[idx] * dkernel[j].data()[idx];
            grad += norm * acc;
        }
    return grad;
}

// Objective at a different weight under the same frozen bandwidths.
double dependence_at_frozen_sigma(const Matrix& interests, double w,
                                  std::span<const double> sigma) {
    const std::size_t c = interests.rows(), d = interests.cols();
    std::vector<Matrix> centered;
    centered.reserve(c);
    std::vector<double> u(d);
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < d; ++j) u[j] = w * interests(i, j);
        centered.push_back(center_symmetric(scalar_kernel(u, sigma[i])));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j)
            total += hsic_from_centered(centered[i], centered[j]);
    return total;
}

} // namespace

KernelConfig KernelConfig::fixed(double s) {
    if (!(s > 0.0)) throw std::invalid_argument("KernelConfig: bandwidth must be positive");
    return KernelConfig{s};
}

double resolve_bandwidth(std::span<const double> x, const KernelConfig& cfg) {
    if (x.size() < 2) throw std::invalid_argument("resolve_bandwidth: need at least 2 samples");
    return bandwidth_for_scalars(x, cfg);
}

Matrix rbf_kernel_matrix(std::span<const double> x, const KernelConfig& cfg) {
    if (x.size() < 2) throw std::invalid_argument("rbf_kernel_matrix: need at least 2 samples");
    return scalar_kernel(x, bandwidth_for_scalars(x, cfg));
}

Matrix rbf_kernel_from_rows(const Matrix& samples, const KernelConfig& cfg) {
    const std::size_t m = samples.rows();
    if (m < 2) throw std::invalid_argument("rbf_kernel_from_rows: need at least 2 samples");
    const double sigma = bandwidth_for_rows(samples, cfg);
    const double inv = 1.0 / (sigma * sigma);
    Matrix k(m, m);
    for (std::size_t a = 0; a < m; ++a) {
        k(a, a) = 1.0;
        for (std::size_t b = a + 1; b < m; ++b) {
            double sq = 0.0;
            for (std::size_t j = 0; j < samples.cols(); ++j) {
                const double diff = samples(a, j) - samples(b, j);
                sq += diff * diff;
            }
            const double val = std::exp(-sq * inv);
            k(a, b) = val;
            k(b, a) = val;
        }
    }
    return k;
}

double empirical_hsic(std::span<const double> u, std::span<const double> v,
                      const KernelConfig& cfg) {
    if (u.size() != v.size())
        throw std::invalid_argument("empirical_hsic: sample counts differ");
    if (u.size() < 2) throw std::invalid_argument("empirical_hsic: need at least 2 samples");
    const Matrix cu = center_symmetric(scalar_kernel(u, bandwidth_for_scalars(u, cfg)));
    const Matrix cv = center_symmetric(scalar_kernel(v, bandwidth_for_scalars(v, cfg)));
    return hsic_from_centered(cu, cv);
}

double interest_dependence(const Matrix& m_hat, const KernelConfig& cfg) {
    if (m_hat.rows() < 2) {
        warn_vacuous_dependence();
        return 0.0;
    }
    if (m_hat.cols() < 2)
        throw std::invalid_argument("interest_dependence: need at least 2 coordinates");
    std::vector<Matrix> centered;
    centered.reserve(m_hat.rows());
    for (std::size_t i = 0; i < m_hat.rows(); ++i) {
        const std::span<const double> row(m_hat.row(i));
        centered.push_back(center_symmetric(scalar_kernel(row, bandwidth_for_scalars(row, cfg))));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < centered.size(); ++i)
        for (std::size_t j = i + 1; j < centered.size(); ++j)
            total += hsic_from_centered(centered[i], centered[j]);
    return total;
}

Matrix reweight_interests(const Matrix& interests, double sample_weight) {
    if (!(sample_weight >= 0.0 && sample_weight <= 1.0))
        throw std::invalid_argument("reweight_interests: weight outside [0, 1]");
    return scale(interests, sample_weight);
}

double weight_dependence_gradient(const Matrix& interests, double sample_weight,
                                  const KernelConfig& cfg, double* value_out) {
    if (interests.rows() < 2 || interests.cols() < 2) {
        if (value_out != nullptr) *value_out = 0.0;
        return 0.0;
    }
    const RowKernels rk = build_row_kernels(interests, sample_weight, cfg);
    if (value_out != nullptr) *value_out = dependence_from_kernels(rk);
    return gradient_from_kernels(interests, rk);
}

double batch_interest_dependence(std::span<const Matrix> interests,
                                 std::span<const double> weights, const KernelConfig& cfg) {
    const std::size_t m = interests.size();
    if (m != weights.size())
        throw std::invalid_argument("batch_interest_dependence: weight count mismatch");
    if (m < 2) return 0.0;
    const std::size_t c = interests[0].rows(), d = interests[0].cols();
    if (c < 2) {
        warn_vacuous_dependence();
        return 0.0;
    }
    std::vector<Matrix> centered;
    centered.reserve(c);
    for (std::size_t i = 0; i < c; ++i) {
        Matrix samples(m, d);
        for (std::size_t h = 0; h < m; ++h)
            for (std::size_t j = 0; j < d; ++j) samples(h, j) = weights[h] * interests[h](i, j);
        centered.push_back(center_symmetric(rbf_kernel_from_rows(samples, cfg)));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j)
            total += hsic_from_centered(centered[i], centered[j]);
    return total;
}

namespace {

// Joint batch-axis step: one projected gradient move for every in-batch
// weight against the pairwise HSIC across examples, bandwidths frozen per
// interest slot.
void update_weights_batch_axis(std::span<const std::size_t> sample_ids,
                               std::span<const Matrix> interests, SampleWeightTable& table,
                               double lambda, double eta_w, std::uint64_t step,
                               const KernelConfig& cfg, WeightUpdateStats& stats) {
    const std::size_t m = interests.size();
    const std::size_t c = interests[0].rows(), d = interests[0].cols();
    if (m < 2 || c < 2) return;

    std::vector<double> w(m);
    for (std::size_t h = 0; h < m; ++h) w[h] = table.w[sample_ids[h]];

    std::vector<Matrix> samples(c, Matrix(m, d));
    std::vector<double> sigma(c);
    std::vector<Matrix> kernel(c), centered(c);
    auto rebuild = [&](std::span<const double> wt, bool resolve_sigma) {
        for (std::size_t i = 0; i < c; ++i) {
            for (std::size_t h = 0; h < m; ++h)
                for (std::size_t j = 0; j < d; ++j) samples[i](h, j) = wt[h] * interests[h](i, j);
            if (resolve_sigma) sigma[i] = bandwidth_for_rows(samples[i], cfg);
            const double inv = 1.0 / (sigma[i] * sigma[i]);
            Matrix k(m, m);
            for (std::size_t a = 0; a < m; ++a) {
                k(a, a) = 1.0;
                for (std::size_t b = a + 1; b < m; ++b) {
                    double sq = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double diff = samples[i](a, j) - samples[i](b, j);
                        sq += diff * diff;
                    }
                    const double val = std::exp(-sq * inv);
                    k(a, b) = val;
                    k(b, a) = val;
                }
            }
            kernel[i] = std::move(k);
            centered[i] = center_symmetric(kernel[i]);
        }
    };
    rebuild(w, true);

    auto objective = [&]() {
        double total = 0.0;
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = i + 1; j < c; ++j)
                total += hsic_from_centered(centered[i], centered[j]);
        return total;
    };
    const double before = objective();

    // Only kernel rows/columns touching example h depend on w_h:
    // dK^i_hb/dw_h = K^i_hb * (-2 <u_h - u_b, M_h[i]> / sigma_i^2), and the
    // symmetric (b, h) entry contributes the same amount, hence the factor 2.
    const double denom = static_cast<double>(m - 1);
    const double norm = 1.0 / (denom * denom);
    std::vector<double> grad(m, 0.0);
    for (std::size_t i = 0; i < c; ++i) {
        const double inv = 1.0 / (sigma[i] * sigma[i]);
        for (std::size_t j = 0; j < c; ++j) {
            if (j == i) continue;
            for (std::size_t h = 0; h < m; ++h) {
                double acc = 0.0;
                for (std::size_t b = 0; b < m; ++b) {
                    if (b == h) continue;
                    double inner = 0.0;
                    for (std::size_t t = 0; t < d; ++t)
                        inner += (samples[i](h, t) - samples[i](b, t)) * interests[h](i, t);
                    acc += kernel[i](h, b) * (-2.0 * inner * inv) * centered[j](h, b);
                }
                grad[h] += 2.0 * norm * acc;
            }
        }
    }
    // The ordered (i, j) loop applies the product rule: each unordered pair
    // is visited twice, differentiating one factor per visit.

    std::vector<double> w_new(m);
    bool any_clipped = false;
    for (std::size_t h = 0; h < m; ++h) {
        const double raw = w[h] - eta_w * lambda * grad[h];
        w_new[h] = std::clamp(raw, 0.0, 1.0);
        if (raw != w_new[h]) {
            ++stats.clipped;
            any_clipped = true;
        }
    }
    rebuild(w_new, false);
    const double after = objective();
    stats.objective_before += before;
    stats.objective_after += after;
    if (!any_clipped && after > before) ++stats.descent_violations;

    for (std::size_t h = 0; h < m; ++h) {
        table.w[sample_ids[h]] = w_new[h];
        table.epoch_tag[sample_ids[h]] = step;
        ++stats.updated;
    }
}

} // namespace

WeightUpdateStats update_sample_weights(std::span<const std::size_t> sample_ids,
                                        std::span<const Matrix> interests,
                                        SampleWeightTable& table, double lambda, double eta_w,
                                        std::uint64_t step, const KernelConfig& cfg,
                                        DependenceAxis axis) {
    if (sample_ids.size() != interests.size())
        throw std::invalid_argument("update_sample_weights: ids and interests differ in length");
    if (lambda < 0.0) throw std::invalid_argument("update_sample_weights: lambda must be >= 0");
    for (std::size_t id : sample_ids)
        if (id >= table.size())
            throw std::out_of_range("update_sample_weights: sample_id beyond table size");

    WeightUpdateStats stats;
    if (sample_ids.empty()) return stats;
    if (axis == DependenceAxis::batch) {
        update_weights_batch_axis(sample_ids, interests, table, lambda, eta_w, step, cfg, stats);
        return stats;
    }

    for (std::size_t h = 0; h < sample_ids.size(); ++h) {
        const std::size_t id = sample_ids[h];
        const double w = table.w[id];
        const Matrix& m = interests[h];

        double grad = 0.0, before = 0.0, after = 0.0;
        double w_new = w;
        bool clipped = false;
        if (m.rows() >= 2 && m.cols() >= 2) {
            const RowKernels rk = build_row_kernels(m, w, cfg);
            before = dependence_from_kernels(rk);
            grad = gradient_from_kernels(m, rk);
            const double raw = w - eta_w * lambda * grad;
            w_new = std::clamp(raw, 0.0, 1.0);
            clipped = raw != w_new;
            after = dependence_at_frozen_sigma(m, w_new, rk.sigma);
        }
        if (clipped) ++stats.clipped;
        stats.objective_before += before;
        stats.objective_after += after;
        if (!clipped && after > before) ++stats.descent_violations;

        table.w[id] = w_new;
        table.epoch_tag[id] = step;
        ++stats.updated;
    }
    return stats;
}

void dump_weight_table(const SampleWeightTable& table, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("dump_weight_table: cannot open " + path.string());
    out.precision(17);
    for (std::size_t i = 0; i < table.size(); ++i) out << i << '\t' << table.w[i] << '\n';
    if (!out) throw std::runtime_error("dump_weight_table: write failed for " + path.string());
}

} // namespace desmil
