#pragma once

// Command-line front end.  Flag parsing lives in run_cli; the cmd_* functions
// take an already-validated RunSpec so tests can drive them in-process.
//
// Exit codes: 0 success, 2 bad arguments or config, 3 input missing or
// malformed, 4 output write failure, 5 artifact integrity failure.

#include <cstdint>
#include <string>

#include "soarq/tensor_io.hpp"

namespace soarq {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitOutput = 4;
constexpr int kExitArtifact = 5;

struct RunSpec {
    std::string command;    // quantize | compare | trace | inspect
    std::string input;      // checkpoint path (quantize/compare/trace), artifact (inspect)
    std::string synthetic;  // KIND:N or KIND:NxC with KIND in {gaussian, uniform, laplace}
    std::uint64_t seed = 0;
    std::string filter;     // glob on tensor names (* and ?)
    QuantConfig config;
    int jobs = 1;
    std::string out_path;     // quantize: packed artifact
    std::string report_path;  // quantize/compare: report file (compare: stdout if empty)
    std::string trace_path;   // quantize/trace: trace file (trace: stdout if empty)
    std::string checkpoint;   // inspect: optional source checkpoint for MSE recomputation
};

int cmd_quantize(const RunSpec& spec);
int cmd_compare(const RunSpec& spec);
int cmd_trace(const RunSpec& spec);
int cmd_inspect(const RunSpec& spec);

// Parses argv and dispatches to a cmd_* function.
int run_cli(int argc, const char* const* argv);

// Simple glob: '*' matches any run, '?' matches one character.
bool glob_match(const std::string& pattern, const std::string& name);

// Seeded synthetic tensors (gaussian | uniform | laplace), one per count,
// named KIND_INDEX, each of n elements.  Tensor i uses seed + i.
std::vector<TensorRecord> make_synthetic(const std::string& kind, std::int64_t n, int count,
                                         std::uint64_t seed);

}  // namespace soarq
