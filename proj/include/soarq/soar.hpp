#pragma once

// The full optimization loop and its ablations.  One iteration is a
// closed-form scale update (cjso_step) followed by a per-block decoupled
// scale search (dss_refine_tensor); the loop stops early when the relative
// loss improvement falls below the configured tolerance.  The artifact keeps
// only the codes, the reconstruction-side scales and the global scale — the
// quant-side scales exist only inside the optimizer.

#include <string>
#include <vector>

#include "soarq/dss.hpp"

namespace soarq {

// One optimization iteration as recorded for convergence traces.
struct IterationRecord {
    int iteration = 0;             // 1-based
    double loss_after_cjso = 0.0;  // squared error after the closed-form phase
    double loss_after_dss = 0.0;   // squared error at end of iteration
    double rel_improvement = 0.0;  // vs the previous end-of-iteration loss
    double seconds = 0.0;          // wall time of the iteration
};

struct ConvergenceTrace {
    std::vector<IterationRecord> rows;
};

// Outcome of quantizing one tensor with one method.
struct MethodResult {
    Method method = Method::baseline;
    QuantizedTensor tensor;
    double mse = 0.0;    // per-element, measured against the stored artifact
    int iterations = 0;  // optimization iterations executed (0 for baseline)
    ConvergenceTrace trace;
};

// True when the loop should halt: either the loss is already exactly zero or
// the relative improvement (prev - cur) / prev is strictly below tol.
// Throws std::logic_error when cur > prev (callers guarantee monotonicity).
bool early_stop(double prev, double cur, double tol);

// Starting state for the iterative methods: max-rule scales with the quant
// and dequant sides tied, assignments and loss evaluated.
ScaleState make_initial_state(ConstArrayRef padded, const QuantConfig& cfg);

// Full loop: closed-form update + decoupled search per iteration.  NVFP4 only.
MethodResult soar_quantize(const TensorRecord& t, const QuantConfig& cfg);

// Ablation: closed-form updates only (the E4M3 projection supplies the
// dequant scale, the raw optimum the quant scale).  NVFP4 only.
MethodResult cjso_only_quantize(const TensorRecord& t, const QuantConfig& cfg);

// Ablation: max-rule init, then decoupled search passes only; the global
// scale is never updated.  Works for both formats.
MethodResult dss_only_quantize(const TensorRecord& t, const QuantConfig& cfg);

// Dispatch on cfg.method (baseline included).
MethodResult quantize_with_method(const TensorRecord& t, const QuantConfig& cfg);

}  // namespace soarq
