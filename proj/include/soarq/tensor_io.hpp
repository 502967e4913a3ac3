#pragma once

// Checkpoint input and artifact output.
//
// Input is the safetensors container: a little-endian u64 header length, a
// JSON header mapping tensor names to {dtype, shape, data_offsets}, then the
// raw data region.  float32/float16/bfloat16 tensors are promoted exactly to
// doubles; anything else is skipped with a warning.
//
// Output is a packed artifact:
//
//   [0..3]   magic "SOQ1"
//   [4..5]   u16 container version (currently 1)
//   [6..7]   u16 reserved (0)
//   [8..11]  u32 tensor count
//   [12..15] u32 CRC-32 of every byte from offset 16 to the end
//   then one directory entry per tensor
//            u32 name length, name bytes, u8 format (0 nvfp4 / 1 mxfp4),
//            u8 reserved, u16 block size, u32 rank, i64 dims[rank],
//            u64 payload offset (absolute), u64 payload length
//   then the payloads, in directory order:
//            NVFP4: f32 global scale, one E4M3 byte per block, FP4 codes
//                   two per byte (low nibble = even element index)
//            MXFP4: one E8M0 byte per block (exponent + 127), FP4 codes
//
// All integers are little-endian.

#include <string>
#include <vector>

#include "soarq/soar.hpp"

namespace soarq {

struct LoadWarning {
    std::string tensor;
    std::string message;
};

struct Checkpoint {
    std::vector<TensorRecord> tensors;  // in header order
    std::vector<LoadWarning> warnings;
};

// Reads a .safetensors file.  Throws std::runtime_error (with a byte offset
// where that helps) on missing files, truncation or malformed headers;
// unsupported dtypes and empty tensors become warnings, not errors.
Checkpoint load_checkpoint(const std::string& path);

// Writes quantized tensors as a packed artifact.  Byte-identical output for
// identical input; an empty list is a valid container.
void write_packed(const std::string& path, const std::vector<QuantizedTensor>& tensors);

// Reads a packed artifact back.  read(write(x)) reproduces x bit-exactly,
// code nibbles and scale bytes included.  Throws std::runtime_error on bad
// magic, version mismatch, checksum failure or corrupted directories/scales,
// naming the offending byte offset.
std::vector<QuantizedTensor> read_packed(const std::string& path);

// One tab-separated record per tensor: name, shape, method, format, mse,
// iterations, payload_bytes.  Floating-point fields are printed with 17
// significant digits so the text is bit-faithful.
std::string render_report(const std::vector<MethodResult>& results);
void write_report(const std::string& path, const std::vector<MethodResult>& results);

// Tab-separated per-iteration trace: tensor, iteration, loss_after_cjso,
// loss_after_dss, rel_improvement.
std::string render_trace(const std::vector<MethodResult>& results);
void write_trace(const std::string& path, const std::vector<MethodResult>& results);

}  // namespace soarq
