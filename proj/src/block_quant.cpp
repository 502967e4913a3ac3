#include "soarq/block_quant.hpp"

#include <cmath>
#include <stdexcept>

namespace soarq {

const char* format_name(Format f) { return f == Format::nvfp4 ? "nvfp4" : "mxfp4"; }

const char* method_name(Method m) {
    switch (m) {
        case Method::baseline: return "baseline";
        case Method::cjso: return "cjso";
        case Method::dss: return "dss";
        case Method::soar: return "soar";
    }
    return "?";
}

int QuantConfig::effective_block_size() const {
    if (block_size > 0) return block_size;
    return format == Format::nvfp4 ? 16 : 32;
}

void QuantConfig::validate() const {
    if (block_size < 0) throw std::invalid_argument("block size must be positive");
    if (max_iters < 1) throw std::invalid_argument("iteration count must be >= 1");
    if (!(tol >= 0.0) || !std::isfinite(tol))
        throw std::invalid_argument("tolerance must be finite and >= 0");
    if (!(grid_lo > 0.0) || !(grid_lo <= 1.0) || !(grid_hi >= 1.0) || !std::isfinite(grid_hi))
        throw std::invalid_argument("grid range must satisfy 0 < lo <= 1 <= hi");
    if (!(grid_step > 0.0) || !std::isfinite(grid_step))
        throw std::invalid_argument("grid step must be positive");
    if (neighbor_count < 1) throw std::invalid_argument("neighbor count must be >= 1");
    if (format == Format::mxfp4 && (method == Method::cjso || method == Method::soar))
        throw std::invalid_argument("mxfp4 supports only the baseline and dss methods");
}

std::int64_t QuantizedTensor::elements() const {
    std::int64_t n = 1;
    for (std::int64_t d : shape) n *= d;
    return n;
}

std::int64_t QuantizedTensor::block_count() const {
    return format == Format::nvfp4 ? static_cast<std::int64_t>(block_scales.size())
                                   : static_cast<std::int64_t>(e8m0_scales.size());
}

std::int64_t QuantizedTensor::payload_bytes() const {
    std::int64_t n = padded_elements();
    std::int64_t bytes = (n + 1) / 2 + block_count();
    if (format == Format::nvfp4) bytes += 4;
    return bytes;
}

ArrayXd pad_to_blocks(ConstArrayRef values, int block_size) {
    if (block_size < 1) throw std::invalid_argument("block size must be positive");
    std::int64_t n = values.size();
    std::int64_t padded = (n + block_size - 1) / block_size * block_size;
    ArrayXd out = ArrayXd::Zero(padded);
    out.head(n) = values;
    return out;
}

E4M3Value choose_block_scale_nvfp4(double block_max, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
    if (block_max == 0.0) return quantize_e4m3(kE4M3MinNormal);  // all-zero block
    E4M3Value d = quantize_e4m3(block_max / (alpha * kFp4Max));
    if (d.bits == 0) d.bits = 1;  // tiny but nonzero block: smallest positive value
    // Nearest rounding may land below the max-preserving scale; bump until the
    // block maximum no longer overflows the FP4 range (or the scale tops out).
    while (d.bits < 126 && block_max / (alpha * decode_e4m3(d)) > kFp4Max) ++d.bits;
    return d;
}

NvFp4Init init_scales_nvfp4(ConstArrayRef padded, int block_size) {
    if (padded.size() == 0) throw std::invalid_argument("empty tensor");
    if (padded.size() % block_size != 0)
        throw std::invalid_argument("padded size is not a multiple of the block size");
    if (!padded.isFinite().all())
        throw std::invalid_argument("tensor contains non-finite values");
    double tmax = padded.abs().maxCoeff();
    NvFp4Init init;
    init.alpha = tmax == 0.0 ? 1.0 : tmax / (kFp4Max * kE4M3Max);
    std::int64_t blocks = padded.size() / block_size;
    init.delta_d.resize(blocks);
    for (std::int64_t i = 0; i < blocks; ++i) {
        double bmax = padded.segment(i * block_size, block_size).abs().maxCoeff();
        init.delta_d[i] = choose_block_scale_nvfp4(bmax, init.alpha);
    }
    return init;
}

std::vector<Fp4Code> quantize_block(ConstArrayRef block, double alpha, double delta_q) {
    if (!(alpha > 0.0) || !(delta_q > 0.0))
        throw std::invalid_argument("scales must be positive");
    double qs = alpha * delta_q;
    std::vector<Fp4Code> codes(block.size());
    for (std::int64_t j = 0; j < block.size(); ++j) codes[j] = quantize_e2m1(block[j] / qs);
    return codes;
}

ArrayXd dequantize_block(const std::vector<Fp4Code>& codes, double alpha, double delta_d) {
    if (!(alpha > 0.0) || !(delta_d > 0.0))
        throw std::invalid_argument("scales must be positive");
    double rs = alpha * delta_d;
    ArrayXd out(static_cast<std::int64_t>(codes.size()));
    for (size_t j = 0; j < codes.size(); ++j) out[j] = decode_e2m1(codes[j]) * rs;
    return out;
}

double block_sse(const double* w, const double* q, int n, double scale) {
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        double e = w[j] - q[j] * scale;
        acc += e * e;
    }
    return acc;
}

double block_loss(const double* w, int n, double alpha, double delta_q, double delta_d) {
    if (!(alpha > 0.0) || !(delta_q > 0.0) || !(delta_d > 0.0))
        throw std::invalid_argument("scales must be positive");
    double qs = alpha * delta_q;
    double scale = alpha * delta_d;
    double acc = 0.0;
    for (int j = 0; j < n; ++j) {
        double q = decode_e2m1(quantize_e2m1(w[j] / qs));
        double e = w[j] - q * scale;
        acc += e * e;
    }
    return acc;
}

double block_loss(ConstArrayRef block, double alpha, double delta_q, double delta_d) {
    return block_loss(block.data(), static_cast<int>(block.size()), alpha, delta_q, delta_d);
}

QuantizedTensor quantize_tensor_baseline(const TensorRecord& t, const QuantConfig& cfg) {
    cfg.validate();
    if (t.elements() == 0) throw std::invalid_argument("empty tensor: " + t.name);
    int G = cfg.effective_block_size();
    ArrayXd w = pad_to_blocks(t.values, G);
    if (!w.isFinite().all())
        throw std::invalid_argument("tensor contains non-finite values: " + t.name);
    std::int64_t blocks = w.size() / G;

    QuantizedTensor qt;
    qt.name = t.name;
    qt.shape = t.shape;
    qt.format = cfg.format;
    qt.block_size = G;
    qt.codes.resize(w.size());

    if (cfg.format == Format::nvfp4) {
        double tmax = w.abs().maxCoeff();
        double alpha0 = tmax == 0.0 ? 1.0 : tmax / (kFp4Max * kE4M3Max);
        qt.global_scale = static_cast<float>(alpha0);
        if (!std::isfinite(qt.global_scale) || !(qt.global_scale > 0.0f))
            throw std::invalid_argument("global scale overflows float32: " + t.name);
        // Choose block scales against the alpha that is actually stored, so
        // the artifact's reconstruction error is exactly the one measured.
        double alpha = static_cast<double>(qt.global_scale);
        qt.block_scales.resize(blocks);
        for (std::int64_t i = 0; i < blocks; ++i) {
            double bmax = w.segment(i * G, G).abs().maxCoeff();
            E4M3Value d = choose_block_scale_nvfp4(bmax, alpha);
            qt.block_scales[i] = d;
            double qs = alpha * decode_e4m3(d);
            for (int j = 0; j < G; ++j) qt.codes[i * G + j] = quantize_e2m1(w[i * G + j] / qs);
        }
    } else {
        qt.e8m0_scales.resize(blocks);
        for (std::int64_t i = 0; i < blocks; ++i) {
            double bmax = w.segment(i * G, G).abs().maxCoeff();
            E8M0Scale s = bmax == 0.0 ? E8M0Scale{0} : quantize_e8m0(bmax / kFp4Max);
            qt.e8m0_scales[i] = s;
            double qs = decode_e8m0(s);
            for (int j = 0; j < G; ++j) qt.codes[i * G + j] = quantize_e2m1(w[i * G + j] / qs);
        }
    }
    return qt;
}

namespace {

// Reconstruction scale of one block, shared by every consumer.
double block_scale(const QuantizedTensor& qt, std::int64_t i) {
    if (qt.format == Format::nvfp4)
        return static_cast<double>(qt.global_scale) * decode_e4m3(qt.block_scales[i]);
    return decode_e8m0(qt.e8m0_scales[i]);
}

void check_consistent(const QuantizedTensor& qt) {
    std::int64_t n = qt.padded_elements();
    int G = qt.block_size;
    if (G < 1 || n % G != 0 || qt.block_count() != n / G)
        throw std::runtime_error("quantized tensor is inconsistent: " + qt.name);
    if (qt.elements() > n) throw std::runtime_error("quantized tensor is truncated: " + qt.name);
}

}  // namespace

ArrayXd reconstruct_tensor(const QuantizedTensor& qt) {
    check_consistent(qt);
    int G = qt.block_size;
    std::int64_t blocks = qt.block_count();
    ArrayXd out(qt.padded_elements());
    for (std::int64_t i = 0; i < blocks; ++i) {
        double rs = block_scale(qt, i);
        for (int j = 0; j < G; ++j)
            out[i * G + j] = decode_e2m1(qt.codes[i * G + j]) * rs;
    }
    return out.head(qt.elements());
}

double artifact_mse(ConstArrayRef values, const QuantizedTensor& qt) {
    check_consistent(qt);
    if (values.size() != qt.elements())
        throw std::invalid_argument("element count mismatch for " + qt.name);
    int G = qt.block_size;
    ArrayXd w = pad_to_blocks(values, G);
    std::int64_t blocks = qt.block_count();
    std::vector<double> q(G);
    double sse = 0.0;
    for (std::int64_t i = 0; i < blocks; ++i) {
        for (int j = 0; j < G; ++j) q[j] = decode_e2m1(qt.codes[i * G + j]);
        sse += block_sse(w.data() + i * G, q.data(), G, block_scale(qt, i));
    }
    return sse / static_cast<double>(values.size());
}

}  // namespace soarq
