#pragma once

// Closed-form joint scale optimization.  For fixed FP4 assignments Q the
// reconstruction error  sum_ij (W_ij - Q_ij * alpha * delta_i)^2  is quadratic
// in the global scale and in each block scale, so both have exact
// least-squares minimizers:
//
//   alpha* = sum(W Q delta) / sum(Q^2 delta^2)        (all elements)
//   delta_i* = sum_j(W Q alpha) / sum_j(Q^2 alpha^2)  (one block)
//
// A step recomputes assignments, applies both updates, then projects the
// reconstruction-side scale onto E4M3.  The quant-side scale keeps the raw
// optimum: assignments and reconstruction deliberately use different scales
// (see dss.hpp for the search that exploits this).

#include <optional>
#include <vector>

#include "soarq/block_quant.hpp"

namespace soarq {

// Optimizer working state for one padded tensor.
//
// delta_q drives code assignment and is an unconstrained positive real;
// delta_d drives reconstruction and is always exactly representable in the
// active scale domain (E4M3 for NVFP4, E8M0 for MXFP4).  `assignments` holds
// the decoded FP4 values for the current (alpha, delta_q); `loss` is the sum
// of block_loss over all blocks at exactly the fields stored here.
struct ScaleState {
    double alpha = 1.0;  // global scale; fixed at 1 for MXFP4
    ScaleDomain domain = ScaleDomain::e4m3;
    std::vector<double> delta_q;
    std::vector<double> delta_d;
    ArrayXd assignments;
    double loss = 0.0;
};

// Decoded FP4 assignments for every element under alpha * delta_q[block].
ArrayXd recompute_assignments(ConstArrayRef padded, double alpha,
                              const std::vector<double>& delta_q, int block_size);

// Least-squares global scale given assignments and per-block dequant scales.
// Empty when the denominator vanishes (all assignments zero) or the optimum
// degenerates; the caller keeps the previous value.
std::optional<double> update_global_scale(ConstArrayRef padded, ConstArrayRef assignments,
                                          const std::vector<double>& delta_d, int block_size);

// Least-squares scale of one block at a fixed global scale.  Empty on a
// vanishing denominator or degenerate optimum.
std::optional<double> update_block_scale(const double* w, const double* q, int n, double alpha);

// Nearest E4M3 value, clipped into the positive representable range
// [2^-9, 448].  The argument must be positive finite.
E4M3Value project_scale_e4m3(double delta_star);

// One optimization step: recompute assignments from (alpha, delta_q), update
// alpha against delta_d, update every block scale against the new alpha, set
// delta_d to the E4M3 projection and delta_q to the raw optimum, then refresh
// assignments and loss.  Degenerate updates keep their previous values.
// Requires the E4M3 domain.
void cjso_step(ConstArrayRef padded, ScaleState& state, int block_size);

// Reference variant with the projection disabled: one real scale serves both
// roles, so the loss is non-increasing step over step.  Used to isolate the
// regression attributable to the E4M3 projection.  Returns the new loss.
double cjso_step_unprojected(ConstArrayRef padded, double& alpha, std::vector<double>& delta,
                             int block_size);

// Canonical loss of a state: sum of block_loss over blocks, sequential order.
double state_loss(ConstArrayRef padded, const ScaleState& state, int block_size);

}  // namespace soarq
