#include "soarq/dss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "soarq/cjso.hpp"

namespace soarq {

std::vector<double> build_dequant_candidates(double current_delta_d, double analytic_delta,
                                             int count, ScaleDomain domain) {
    if (!(current_delta_d > 0.0) || !std::isfinite(current_delta_d))
        throw std::invalid_argument("current scale must be positive");
    std::vector<double> out;
    out.push_back(current_delta_d);
    if (domain == ScaleDomain::e4m3) {
        for (E4M3Value v : e4m3_neighbors(analytic_delta, count)) out.push_back(decode_e4m3(v));
    } else {
        for (E8M0Scale s : e8m0_neighbors(analytic_delta, count)) out.push_back(decode_e8m0(s));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::vector<double> build_quant_grid(double delta_base, double lo, double hi, double step) {
    if (!(delta_base > 0.0) || !std::isfinite(delta_base))
        throw std::invalid_argument("grid base must be positive");
    if (!(lo > 0.0) || !(lo <= 1.0) || !(hi >= 1.0) || !(step > 0.0))
        throw std::invalid_argument("grid range must satisfy 0 < lo <= 1 <= hi, step > 0");
    long long k_max = std::llround((hi - lo) / step);
    std::vector<double> out;
    out.reserve(static_cast<size_t>(k_max) + 1);
    for (long long k = 0; k <= k_max; ++k)
        out.push_back(delta_base * (lo + static_cast<double>(k) * step));
    return out;
}

ScalePairCandidate dss_refine_block(ConstArrayRef block, double alpha,
                                    const ScalePairCandidate& incumbent, double anchor_delta,
                                    const QuantConfig& cfg, ScaleDomain domain) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    const int n = static_cast<int>(block.size());
    const double anchor = anchor_delta;

    std::vector<double> dds =
        build_dequant_candidates(incumbent.delta_d, anchor, cfg.neighbor_count, domain);
    std::vector<double> dqs = build_quant_grid(anchor, cfg.grid_lo, cfg.grid_hi, cfg.grid_step);

    ScalePairCandidate best = incumbent;
    double best_dist = std::fabs(best.delta_d - anchor);
    bool best_is_incumbent = true;
    // The incumbent yields its seat only to a strictly smaller loss; among
    // searched pairs, ties break toward the dequant scale closest to the
    // anchor, then the smaller quant scale, then the smaller dequant scale.
    auto consider = [&](double dq, double dd, double loss) {
        double dist = std::fabs(dd - anchor);
        bool better = loss < best.loss;
        if (!better && loss == best.loss && !best_is_incumbent)
            better = dist < best_dist ||
                     (dist == best_dist &&
                      (dq < best.delta_q || (dq == best.delta_q && dd < best.delta_d)));
        if (better) {
            best = {dq, dd, loss};
            best_dist = dist;
            best_is_incumbent = false;
        }
    };

    // Assignments depend only on the quant-side scale, so they are computed
    // once per grid point; each loss below is bit-identical to
    // block_loss(block, alpha, dq, dd).
    std::vector<double> q(n);
    for (double dq : dqs) {
        double qs = alpha * dq;
        for (int j = 0; j < n; ++j) q[j] = decode_e2m1(quantize_e2m1(block[j] / qs));
        for (double dd : dds) consider(dq, dd, block_sse(block.data(), q.data(), n, alpha * dd));
    }
    return best;
}

namespace {

// Shared walk over blocks; carried == nullptr means the state's own pair is
// both incumbent and anchor.
void refine_blocks(ConstArrayRef padded, ScaleState& state, const QuantConfig& cfg,
                   const std::vector<double>* prev_dq, const std::vector<double>* prev_dd) {
    int G = cfg.effective_block_size();
    if (padded.size() % G != 0 ||
        state.delta_q.size() != static_cast<size_t>(padded.size() / G))
        throw std::invalid_argument("block layout mismatch");
    if (prev_dq && (prev_dq->size() != state.delta_q.size() ||
                    prev_dd->size() != state.delta_d.size()))
        throw std::invalid_argument("carried scale length mismatch");
    std::int64_t blocks = padded.size() / G;
    double total = 0.0;
    for (std::int64_t i = 0; i < blocks; ++i) {
        auto wb = padded.segment(i * G, G);
        double anchor = state.delta_q[i];
        if (!prev_dq) {
            // Search-only pass: no closed-form phase ran, so anchor the pool
            // at the least-squares block scale for the current assignments at
            // the fixed global scale.  A degenerate update (all-zero block)
            // falls back to the carried scale.
            auto astar = update_block_scale(padded.data() + i * G,
                                            state.assignments.data() + i * G, G, state.alpha);
            if (astar) anchor = *astar;
        }
        ScalePairCandidate incumbent{state.delta_q[i], state.delta_d[i],
                                     block_loss(wb, state.alpha, state.delta_q[i],
                                                state.delta_d[i])};
        ScalePairCandidate r;
        if (prev_dq) {
            ScalePairCandidate carried{(*prev_dq)[i], (*prev_dd)[i],
                                       block_loss(wb, state.alpha, (*prev_dq)[i],
                                                  (*prev_dd)[i])};
            if (carried.loss < incumbent.loss) incumbent = carried;
            // Two chained searches: one centered on the closed-form proposal,
            // one on the carried quant scale, so the pool covers both the
            // analytic prior and the path the search has already taken.
            r = dss_refine_block(wb, state.alpha, incumbent, anchor, cfg, state.domain);
            if ((*prev_dq)[i] != anchor)
                r = dss_refine_block(wb, state.alpha, r, (*prev_dq)[i], cfg, state.domain);
        } else {
            r = dss_refine_block(wb, state.alpha, incumbent, anchor, cfg, state.domain);
        }
        state.delta_q[i] = r.delta_q;
        state.delta_d[i] = r.delta_d;
        total += r.loss;
    }
    state.assignments = recompute_assignments(padded, state.alpha, state.delta_q, G);
    state.loss = total;
}

}  // namespace

void dss_refine_tensor(ConstArrayRef padded, ScaleState& state, const QuantConfig& cfg) {
    refine_blocks(padded, state, cfg, nullptr, nullptr);
}

void dss_refine_tensor(ConstArrayRef padded, ScaleState& state, const QuantConfig& cfg,
                       const std::vector<double>& prev_dq, const std::vector<double>& prev_dd) {
    refine_blocks(padded, state, cfg, &prev_dq, &prev_dd);
}

}  // namespace soarq
