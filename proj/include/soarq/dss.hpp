#pragma once

// Decoupled scale search.  The quant-side scale (which drives code
// assignment) and the dequant-side scale (which drives reconstruction) are
// searched jointly per block:
//
//   dequant candidates: the representable scales nearest the analytic
//     optimum, plus the incumbent (so the search can never regress);
//   quant candidates: a multiplicative grid around the analytic optimum,
//     delta * beta for beta = lo, lo+step, ..., hi.
//
// Every (quant, dequant) pair is scored with the exact block loss.  The
// incumbent keeps its seat unless a pair attains a strictly smaller loss;
// among searched pairs, ties break toward the dequant scale closest to the
// anchor, then the smaller quant scale, then the smaller dequant scale.

#include <vector>

#include "soarq/cjso.hpp"

namespace soarq {

// One scored scale pair.
struct ScalePairCandidate {
    double delta_q = 1.0;
    double delta_d = 1.0;
    double loss = 0.0;
};

// Dequant-side candidates: the `count` representable scales nearest
// analytic_delta plus current_delta_d, deduplicated, sorted ascending.
// Every entry is exactly representable in the domain.
std::vector<double> build_dequant_candidates(double current_delta_d, double analytic_delta,
                                             int count, ScaleDomain domain);

// Quant-side candidates: delta_base * (lo + k*step) for k = 0..round((hi-lo)/step),
// endpoints included, generated by integer index.  Requires delta_base > 0 and
// 0 < lo <= 1 <= hi, step > 0.
std::vector<double> build_quant_grid(double delta_base, double lo, double hi, double step);

// Exhaustive search over the candidate product plus the incumbent pair.
// Both candidate sets are generated around anchor_delta (the raw closed-form
// optimum when one is available, otherwise the carried quant scale);
// incumbent.loss must already be evaluated.  Returns the incumbent itself
// unless some pair attains a strictly smaller loss.
ScalePairCandidate dss_refine_block(ConstArrayRef block, double alpha,
                                    const ScalePairCandidate& incumbent, double anchor_delta,
                                    const QuantConfig& cfg, ScaleDomain domain);

// Refines every block independently, then refreshes assignments and loss.
// The incumbent is the state's own (delta_q, delta_d) pair; the candidate
// pool is anchored at the least-squares block scale for the current
// assignments at the fixed global scale, falling back to the state's quant
// scale when that update degenerates.  The total loss never exceeds the
// incoming loss.
void dss_refine_tensor(ConstArrayRef padded, ScaleState& state, const QuantConfig& cfg);

// Variant for the full-loop flow, where state.delta_q already holds the
// closed-form proposal: the pool is anchored there, and the incumbent slot
// goes to the better of the state's pair and the carried pair
// (prev_dq, prev_dd) from before that update, re-scored under the state's
// alpha.  When the carried quant scale differs from the anchor, a second
// chained search centers on it, so the pool covers both the analytic prior
// and the path the search had already taken.
void dss_refine_tensor(ConstArrayRef padded, ScaleState& state, const QuantConfig& cfg,
                       const std::vector<double>& prev_dq, const std::vector<double>& prev_dd);

}  // namespace soarq
