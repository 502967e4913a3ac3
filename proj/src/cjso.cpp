#include "soarq/cjso.hpp"

#include <cmath>
#include <stdexcept>

namespace soarq {

namespace {

void check_block_args(std::int64_t size, int block_size, size_t blocks) {
    if (block_size < 1 || size % block_size != 0 ||
        static_cast<size_t>(size / block_size) != blocks)
        throw std::invalid_argument("block layout mismatch");
}

}  // namespace

ArrayXd recompute_assignments(ConstArrayRef padded, double alpha,
                              const std::vector<double>& delta_q, int block_size) {
    check_block_args(padded.size(), block_size, delta_q.size());
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    ArrayXd q(padded.size());
    std::int64_t blocks = padded.size() / block_size;
    for (std::int64_t i = 0; i < blocks; ++i) {
        if (!(delta_q[i] > 0.0)) throw std::invalid_argument("scales must be positive");
        double qs = alpha * delta_q[i];
        for (int j = 0; j < block_size; ++j) {
            std::int64_t k = i * block_size + j;
            q[k] = decode_e2m1(quantize_e2m1(padded[k] / qs));
        }
    }
    return q;
}

std::optional<double> update_global_scale(ConstArrayRef padded, ConstArrayRef assignments,
                                          const std::vector<double>& delta_d, int block_size) {
    check_block_args(padded.size(), block_size, delta_d.size());
    if (assignments.size() != padded.size())
        throw std::invalid_argument("assignment length mismatch");
    // Left-associated products in sequential element order: the summation
    // order is part of the bit-exactness contract.
    double num = 0.0, den = 0.0;
    std::int64_t blocks = padded.size() / block_size;
    for (std::int64_t i = 0; i < blocks; ++i) {
        double d = delta_d[i];
        for (int j = 0; j < block_size; ++j) {
            std::int64_t k = i * block_size + j;
            num += padded[k] * assignments[k] * d;
            den += assignments[k] * assignments[k] * d * d;
        }
    }
    if (den == 0.0) return std::nullopt;
    double alpha = num / den;
    if (!std::isfinite(alpha) || alpha <= 0.0) return std::nullopt;
    return alpha;
}

std::optional<double> update_block_scale(const double* w, const double* q, int n, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    double num = 0.0, den = 0.0;
    for (int j = 0; j < n; ++j) {
        num += w[j] * q[j] * alpha;
        den += q[j] * q[j] * alpha * alpha;
    }
    if (den == 0.0) return std::nullopt;
    double delta = num / den;
    if (!std::isfinite(delta) || delta <= 0.0) return std::nullopt;
    return delta;
}

E4M3Value project_scale_e4m3(double delta_star) {
    if (!std::isfinite(delta_star) || delta_star <= 0.0)
        throw std::invalid_argument("scale must be positive");
    E4M3Value v = quantize_e4m3(delta_star);  // saturates at 448
    if (v.bits == 0) v.bits = 1;              // clip up to the smallest positive value
    return v;
}

double state_loss(ConstArrayRef padded, const ScaleState& state, int block_size) {
    check_block_args(padded.size(), block_size, state.delta_q.size());
    std::int64_t blocks = padded.size() / block_size;
    double total = 0.0;
    for (std::int64_t i = 0; i < blocks; ++i)
        total += block_loss(padded.data() + i * block_size, block_size, state.alpha,
                            state.delta_q[i], state.delta_d[i]);
    return total;
}

void cjso_step(ConstArrayRef padded, ScaleState& state, int block_size) {
    if (state.domain != ScaleDomain::e4m3)
        throw std::invalid_argument("closed-form updates require the E4M3 scale domain");
    check_block_args(padded.size(), block_size, state.delta_q.size());
    std::int64_t blocks = padded.size() / block_size;

    ArrayXd q = recompute_assignments(padded, state.alpha, state.delta_q, block_size);
    if (auto alpha = update_global_scale(padded, q, state.delta_d, block_size))
        state.alpha = *alpha;
    for (std::int64_t i = 0; i < blocks; ++i) {
        auto ds = update_block_scale(padded.data() + i * block_size, q.data() + i * block_size,
                                     block_size, state.alpha);
        if (ds) {
            state.delta_q[i] = *ds;
            state.delta_d[i] = decode_e4m3(project_scale_e4m3(*ds));
        }
        // Degenerate block (all assignments zero): both scales keep their
        // previous values.
    }
    state.assignments = recompute_assignments(padded, state.alpha, state.delta_q, block_size);
    state.loss = state_loss(padded, state, block_size);
}

double cjso_step_unprojected(ConstArrayRef padded, double& alpha, std::vector<double>& delta,
                             int block_size) {
    check_block_args(padded.size(), block_size, delta.size());
    std::int64_t blocks = padded.size() / block_size;

    ArrayXd q = recompute_assignments(padded, alpha, delta, block_size);
    if (auto a = update_global_scale(padded, q, delta, block_size)) alpha = *a;
    for (std::int64_t i = 0; i < blocks; ++i) {
        auto ds = update_block_scale(padded.data() + i * block_size, q.data() + i * block_size,
                                     block_size, alpha);
        if (ds) delta[i] = *ds;
    }
    double total = 0.0;
    for (std::int64_t i = 0; i < blocks; ++i)
        total += block_loss(padded.data() + i * block_size, block_size, alpha, delta[i],
                            delta[i]);
    return total;
}

}  // namespace soarq
