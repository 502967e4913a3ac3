#pragma once

// Block-level quantization for the two microscaling formats:
//
//   NVFP4  16-element blocks of E2M1 codes, one E4M3 dequant scale per block,
//          one float32 global scale for the whole tensor.
//   MXFP4  32-element blocks of E2M1 codes, one power-of-two (E8M0) scale per
//          block, no global scale.
//
// Tensors are flattened row-major and split into consecutive blocks along the
// last (fastest-varying) dimension; a ragged tail is zero-padded to the block
// boundary.  Padding is neutral: the padded elements quantize to +0 and
// contribute nothing to the reconstruction error.

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "soarq/fp_codecs.hpp"

namespace soarq {

using Eigen::ArrayXd;
using ConstArrayRef = Eigen::Ref<const Eigen::ArrayXd>;

enum class Format { nvfp4, mxfp4 };
enum class Method { baseline, cjso, dss, soar };

const char* format_name(Format f);
const char* method_name(Method m);

// Knobs for one quantization run; defaults mirror the CLI.
struct QuantConfig {
    Format format = Format::nvfp4;
    Method method = Method::soar;
    int block_size = 0;      // 0 = format default (16 for NVFP4, 32 for MXFP4)
    int max_iters = 15;      // optimization iterations T
    double tol = 1e-3;       // early stop when relative improvement drops below this
    double grid_lo = 0.5;    // multiplicative search grid for the quant-side scale
    double grid_hi = 1.5;
    double grid_step = 0.01;
    int neighbor_count = 2;  // dequant-side candidates around the analytic scale

    int effective_block_size() const;
    // Throws std::invalid_argument on out-of-range values or a method the
    // format does not support (MXFP4 permits only baseline and dss).
    void validate() const;
};

// One named tensor promoted to doubles, in row-major element order.
struct TensorRecord {
    std::string name;
    std::vector<std::int64_t> shape;
    ArrayXd values;

    std::int64_t elements() const { return values.size(); }
};

// Everything needed to reconstruct a quantized tensor, bit-exactly.
struct QuantizedTensor {
    std::string name;
    std::vector<std::int64_t> shape;
    Format format = Format::nvfp4;
    int block_size = 16;
    float global_scale = 1.0f;              // NVFP4 only
    std::vector<E4M3Value> block_scales;    // NVFP4 dequant scales, one per block
    std::vector<E8M0Scale> e8m0_scales;     // MXFP4 dequant scales, one per block
    std::vector<Fp4Code> codes;             // one per element, zero-padded tail

    std::int64_t elements() const;  // original extent (product of shape)
    std::int64_t padded_elements() const { return static_cast<std::int64_t>(codes.size()); }
    std::int64_t block_count() const;
    // Serialized payload size: ceil(n/2) code bytes + one scale byte per
    // block + 4 bytes of global scale for NVFP4 (n = padded element count).
    std::int64_t payload_bytes() const;
};

// Flat row-major copy zero-padded to a multiple of the block size.
ArrayXd pad_to_blocks(ConstArrayRef values, int block_size);

// Max-magnitude scale initialization for NVFP4: alpha = max|X| / (6 * 448),
// delta_i = nearest E4M3 to max|X_i| / (6 alpha).  An all-zero tensor takes
// alpha = 1; an all-zero block takes the smallest positive normal E4M3.  If
// E4M3 rounding would leave the block maximum above 6 after scaling, the
// scale is bumped to the next E4M3 value up.
struct NvFp4Init {
    double alpha = 1.0;
    std::vector<E4M3Value> delta_d;
};
NvFp4Init init_scales_nvfp4(ConstArrayRef padded, int block_size);

// Per-block scale choice used by init_scales_nvfp4, exposed for the baseline
// path which must choose scales against the stored float32 alpha.
E4M3Value choose_block_scale_nvfp4(double block_max, double alpha);

// Element codes for one block under the assignment scale alpha * delta_q.
std::vector<Fp4Code> quantize_block(ConstArrayRef block, double alpha, double delta_q);

// Decoded values times the reconstruction scale alpha * delta_d.
ArrayXd dequantize_block(const std::vector<Fp4Code>& codes, double alpha, double delta_d);

// Squared reconstruction error of one block: codes are assigned under
// alpha * delta_q, reconstructed under alpha * delta_d.  The summation order
// (sequential over elements) is part of the bit-exactness contract.
double block_loss(ConstArrayRef block, double alpha, double delta_q, double delta_d);
double block_loss(const double* w, int n, double alpha, double delta_q, double delta_d);

// Canonical squared error of already-decoded values: sum of (w - q * scale)^2
// in sequential element order.  Shared by every loss/MSE computation so that
// in-memory and artifact-recomputed numbers match bit for bit.
double block_sse(const double* w, const double* q, int n, double scale);

// Max-rule quantization with the quant and dequant scales tied together.
QuantizedTensor quantize_tensor_baseline(const TensorRecord& t, const QuantConfig& cfg);

// Decoded values on the original extent (padding stripped), row-major.
ArrayXd reconstruct_tensor(const QuantizedTensor& qt);

// Per-element mean squared reconstruction error of an artifact against the
// source values, computed in the canonical block order.
double artifact_mse(ConstArrayRef values, const QuantizedTensor& qt);

}  // namespace soarq
