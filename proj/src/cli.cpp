#include "soarq/cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <thread>

#include "CLI11.hpp"

namespace soarq {

bool glob_match(const std::string& pattern, const std::string& name) {
    // Iterative matcher with backtracking over the last '*'.
    size_t p = 0, n = 0, star = std::string::npos, mark = 0;
    while (n < name.size()) {
        if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
            ++p;
            ++n;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = n;
        } else if (star != std::string::npos) {
            p = star + 1;
            n = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

std::vector<TensorRecord> make_synthetic(const std::string& kind, std::int64_t n, int count,
                                         std::uint64_t seed) {
    if (n < 1 || count < 1) throw std::invalid_argument("synthetic size must be positive");
    std::vector<TensorRecord> out;
    for (int c = 0; c < count; ++c) {
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(c));
        TensorRecord rec;
        rec.name = kind + "_" + std::to_string(c);
        rec.shape = {n};
        rec.values.resize(n);
        if (kind == "gaussian") {
            std::normal_distribution<double> d(0.0, 1.0);
            for (std::int64_t i = 0; i < n; ++i) rec.values[i] = d(rng);
        } else if (kind == "uniform") {
            std::uniform_real_distribution<double> d(-1.0, 1.0);
            for (std::int64_t i = 0; i < n; ++i) rec.values[i] = d(rng);
        } else if (kind == "laplace") {
            for (std::int64_t i = 0; i < n; ++i) {
                // u strictly inside (0,1) so the inverse CDF stays finite
                double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1p-53;
                rec.values[i] = u < 0.5 ? std::log(2.0 * u) : -std::log(2.0 * (1.0 - u));
            }
        } else {
            throw std::invalid_argument("unknown synthetic kind: " + kind);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `jobs` threads.  Work is claimed via an
// atomic index and results land in caller-indexed slots, so the outcome is
// independent of the thread count.
template <class F>
void parallel_for_index(std::int64_t n, int jobs, F fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    int workers = static_cast<int>(std::min<std::int64_t>(jobs, n));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

struct SyntheticSpec {
    std::string kind;
    std::int64_t n = 0;
    int count = 1;
};

SyntheticSpec parse_synthetic(const std::string& s) {
    size_t colon = s.find(':');
    if (colon == std::string::npos || colon == 0)
        throw std::invalid_argument("--synthetic wants KIND:N or KIND:NxC, got '" + s + "'");
    SyntheticSpec spec;
    spec.kind = s.substr(0, colon);
    std::string rest = s.substr(colon + 1);
    size_t x = rest.find('x');
    try {
        spec.n = std::stoll(x == std::string::npos ? rest : rest.substr(0, x));
        if (x != std::string::npos) spec.count = std::stoi(rest.substr(x + 1));
    } catch (const std::exception&) {
        throw std::invalid_argument("--synthetic wants KIND:N or KIND:NxC, got '" + s + "'");
    }
    if (spec.n < 1 || spec.count < 1)
        throw std::invalid_argument("--synthetic sizes must be positive");
    if (spec.kind != "gaussian" && spec.kind != "uniform" && spec.kind != "laplace")
        throw std::invalid_argument("unknown synthetic kind: " + spec.kind);
    return spec;
}

// Loads either the synthetic set or a checkpoint, applies the name filter,
// and reports warnings on stderr.  Returns nullopt (after printing the
// reason) when there is nothing to quantize.
std::optional<std::vector<TensorRecord>> gather_inputs(const RunSpec& spec) {
    std::vector<TensorRecord> tensors;
    if (!spec.synthetic.empty()) {
        SyntheticSpec ss = parse_synthetic(spec.synthetic);
        tensors = make_synthetic(ss.kind, ss.n, ss.count, spec.seed);
    } else {
        Checkpoint ck = load_checkpoint(spec.input);
        for (const auto& w : ck.warnings)
            std::cerr << "warning: " << w.tensor << ": " << w.message << "\n";
        tensors = std::move(ck.tensors);
    }
    if (!spec.filter.empty()) {
        std::vector<TensorRecord> kept;
        for (auto& t : tensors)
            if (glob_match(spec.filter, t.name)) kept.push_back(std::move(t));
        tensors = std::move(kept);
    }
    if (tensors.empty()) {
        std::cerr << "error: no tensors selected\n";
        return std::nullopt;
    }
    return tensors;
}

int effective_jobs(const RunSpec& spec) { return std::max(1, spec.jobs); }

// Per-tensor quantization with per-tensor failure isolation.
struct RunOutcome {
    std::vector<MethodResult> results;  // successful tensors, input order
    std::vector<std::string> failures;  // "name: reason"
};

RunOutcome run_method_over(const std::vector<TensorRecord>& tensors, const QuantConfig& cfg,
                           int jobs) {
    std::vector<std::optional<MethodResult>> slots(tensors.size());
    std::vector<std::string> errors(tensors.size());
    parallel_for_index(static_cast<std::int64_t>(tensors.size()), jobs, [&](std::int64_t i) {
        try {
            slots[i] = quantize_with_method(tensors[i], cfg);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    RunOutcome out;
    for (size_t i = 0; i < slots.size(); ++i) {
        if (slots[i])
            out.results.push_back(std::move(*slots[i]));
        else
            out.failures.push_back(tensors[i].name + ": " + errors[i]);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

int cmd_quantize(const RunSpec& spec) {
    try {
        spec.config.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::optional<std::vector<TensorRecord>> tensors;
    try {
        tensors = gather_inputs(spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (!tensors) return kExitInput;

    RunOutcome run = run_method_over(*tensors, spec.config, effective_jobs(spec));
    for (const auto& f : run.failures) std::cerr << "warning: skipped " << f << "\n";
    if (run.results.empty()) {
        std::cerr << "error: no tensors quantized\n";
        return kExitInput;
    }
    for (const auto& r : run.results)
        std::cout << r.tensor.name << "\t" << method_name(r.method) << "\t"
                  << format_name(r.tensor.format) << "\tmse=" << fmt_double(r.mse) << "\t"
                  << r.iterations << " iters\t" << r.tensor.payload_bytes() << " bytes\n";

    try {
        if (!spec.out_path.empty()) {
            std::vector<QuantizedTensor> qts;
            qts.reserve(run.results.size());
            for (const auto& r : run.results) qts.push_back(r.tensor);
            write_packed(spec.out_path, qts);
        }
        if (!spec.report_path.empty()) write_report(spec.report_path, run.results);
        if (!spec.trace_path.empty()) write_trace(spec.trace_path, run.results);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOutput;
    }
    return kExitOk;
}

int cmd_compare(const RunSpec& spec) {
    QuantConfig base = spec.config;
    std::vector<Method> methods;
    if (base.format == Format::nvfp4)
        methods = {Method::baseline, Method::cjso, Method::dss, Method::soar};
    else {
        methods = {Method::baseline, Method::dss};
        std::cerr << "note: cjso and soar do not apply to mxfp4; comparing baseline and dss\n";
    }
    base.method = methods.front();
    try {
        base.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::optional<std::vector<TensorRecord>> tensors;
    try {
        tensors = gather_inputs(spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (!tensors) return kExitInput;

    // methods x tensors MSE matrix, tensors in parallel, methods sequential.
    std::vector<std::vector<double>> mse(methods.size(),
                                         std::vector<double>(tensors->size(), 0.0));
    std::vector<std::string> errors(tensors->size());
    parallel_for_index(static_cast<std::int64_t>(tensors->size()), effective_jobs(spec),
                       [&](std::int64_t i) {
                           try {
                               for (size_t m = 0; m < methods.size(); ++m) {
                                   QuantConfig cfg = base;
                                   cfg.method = methods[m];
                                   mse[m][i] = quantize_with_method((*tensors)[i], cfg).mse;
                               }
                           } catch (const std::exception& e) {
                               errors[i] = e.what();
                           }
                       });

    std::string out = "# method comparison v1\n";
    out += "tensor\telements\tformat";
    for (Method m : methods) out += std::string("\tmse_") + method_name(m);
    out += "\n";
    std::vector<double> sums(methods.size(), 0.0);
    std::int64_t ok = 0;
    for (size_t i = 0; i < tensors->size(); ++i) {
        if (!errors[i].empty()) {
            std::cerr << "warning: skipped " << (*tensors)[i].name << ": " << errors[i] << "\n";
            continue;
        }
        out += (*tensors)[i].name + '\t' + std::to_string((*tensors)[i].elements()) + '\t' +
               format_name(base.format);
        for (size_t m = 0; m < methods.size(); ++m) {
            out += '\t' + fmt_double(mse[m][i]);
            sums[m] += mse[m][i];
        }
        out += '\n';
        ++ok;
    }
    if (ok == 0) {
        std::cerr << "error: no tensors compared\n";
        return kExitInput;
    }
    out += std::string("mean\t-\t") + format_name(base.format);
    for (size_t m = 0; m < methods.size(); ++m)
        out += '\t' + fmt_double(sums[m] / static_cast<double>(ok));
    out += '\n';

    if (spec.report_path.empty()) {
        std::cout << out;
    } else {
        std::ofstream f(spec.report_path, std::ios::binary);
        f << out;
        if (!f) {
            std::cerr << "error: cannot write " << spec.report_path << "\n";
            return kExitOutput;
        }
    }
    return kExitOk;
}

int cmd_trace(const RunSpec& spec) {
    if (spec.config.method != Method::cjso && spec.config.method != Method::soar) {
        std::cerr << "error: trace wants --method cjso or soar\n";
        return kExitUsage;
    }
    try {
        spec.config.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    std::optional<std::vector<TensorRecord>> tensors;
    try {
        tensors = gather_inputs(spec);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    if (!tensors) return kExitInput;

    RunOutcome run = run_method_over(*tensors, spec.config, effective_jobs(spec));
    for (const auto& f : run.failures) std::cerr << "warning: skipped " << f << "\n";
    if (run.results.empty()) {
        std::cerr << "error: no tensors traced\n";
        return kExitInput;
    }
    try {
        if (spec.trace_path.empty())
            std::cout << render_trace(run.results);
        else
            write_trace(spec.trace_path, run.results);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitOutput;
    }
    return kExitOk;
}

int cmd_inspect(const RunSpec& spec) {
    std::vector<QuantizedTensor> tensors;
    try {
        tensors = read_packed(spec.input);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArtifact;
    }
    std::optional<Checkpoint> source;
    if (!spec.checkpoint.empty()) {
        try {
            source = load_checkpoint(spec.checkpoint);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitInput;
        }
    }

    std::cout << "packed artifact: " << tensors.size() << " tensor(s)\n";
    std::cout << "name\tshape\tformat\tblock_size\tblocks\tglobal_bytes\tscale_bytes\t"
                 "code_bytes\tpayload_bytes" << (source ? "\tmse" : "") << "\n";
    for (const auto& qt : tensors) {
        std::int64_t blocks = qt.block_count();
        std::int64_t code_bytes = (qt.padded_elements() + 1) / 2;
        std::int64_t global_bytes = qt.format == Format::nvfp4 ? 4 : 0;
        std::string shape;
        for (size_t i = 0; i < qt.shape.size(); ++i)
            shape += (i ? "x" : "") + std::to_string(qt.shape[i]);
        if (shape.empty()) shape = "1";
        std::cout << qt.name << '\t' << shape << '\t' << format_name(qt.format) << '\t'
                  << qt.block_size << '\t' << blocks << '\t' << global_bytes << '\t' << blocks
                  << '\t' << code_bytes << '\t' << qt.payload_bytes();
        if (source) {
            const TensorRecord* match = nullptr;
            for (const auto& t : source->tensors)
                if (t.name == qt.name) match = &t;
            if (match && match->elements() == qt.elements())
                std::cout << '\t' << fmt_double(artifact_mse(match->values, qt));
            else
                std::cout << "\t(no matching source tensor)";
        }
        std::cout << "\n";
    }
    return kExitOk;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"FP4 block-quantization toolkit: joint scale optimization and "
                 "decoupled scale search for NVFP4/MXFP4 weight quantization"};
    app.footer("exit codes: 0 success, 2 bad arguments/config, 3 input error, "
               "4 output error, 5 artifact integrity error");
    app.require_subcommand(1);

    RunSpec spec;
    std::string format = "nvfp4";
    std::string method;

    auto add_input_opts = [&](CLI::App* cmd) {
        cmd->add_option("input", spec.input, "input .safetensors checkpoint");
        cmd->add_option("--synthetic", spec.synthetic,
                        "generate input instead: KIND:N or KIND:NxC, KIND in "
                        "{gaussian, uniform, laplace}");
        cmd->add_option("--seed", spec.seed, "seed for synthetic tensors")
            ->default_val(0);
        cmd->add_option("--filter", spec.filter, "glob over tensor names (* and ?)");
        cmd->add_option("--jobs,-j", spec.jobs, "worker threads across tensors")
            ->envname("SOARQ_JOBS")
            ->default_val(1);
    };
    auto add_quant_opts = [&](CLI::App* cmd, bool with_method) {
        cmd->add_option("--format", format, "target format: nvfp4 or mxfp4")
            ->check(CLI::IsMember({"nvfp4", "mxfp4"}));
        if (with_method)
            cmd->add_option("--method", method,
                            "baseline, cjso, dss or soar (mxfp4: baseline or dss)")
                ->check(CLI::IsMember({"baseline", "cjso", "dss", "soar"}));
        cmd->add_option("--iters", spec.config.max_iters, "max optimization iterations")
            ->default_val(15);
        cmd->add_option("--tol", spec.config.tol, "early-stop relative improvement threshold")
            ->default_val(1e-3);
        cmd->add_option("--grid-lo", spec.config.grid_lo, "quant-scale grid lower factor")
            ->default_val(0.5);
        cmd->add_option("--grid-hi", spec.config.grid_hi, "quant-scale grid upper factor")
            ->default_val(1.5);
        cmd->add_option("--grid-step", spec.config.grid_step, "quant-scale grid step")
            ->default_val(0.01);
        cmd->add_option("--neighbors", spec.config.neighbor_count,
                        "dequant-scale candidates around the analytic optimum")
            ->default_val(2);
        cmd->add_option("--block-size", spec.config.block_size,
                        "elements per block (default: 16 nvfp4, 32 mxfp4)")
            ->default_val(0);
    };

    CLI::App* quantize = app.add_subcommand("quantize", "quantize tensors with one method");
    add_input_opts(quantize);
    add_quant_opts(quantize, true);
    quantize->add_option("-o,--out", spec.out_path, "packed artifact output path");
    quantize->add_option("--report", spec.report_path, "per-tensor report output path");
    quantize->add_option("--trace", spec.trace_path, "convergence trace output path");

    CLI::App* compare = app.add_subcommand("compare", "run every applicable method and tabulate MSE");
    add_input_opts(compare);
    add_quant_opts(compare, false);
    compare->add_option("--report", spec.report_path, "table output path (default stdout)");

    CLI::App* trace = app.add_subcommand("trace", "emit per-iteration convergence losses");
    add_input_opts(trace);
    add_quant_opts(trace, true);
    trace->add_option("--trace", spec.trace_path, "trace output path (default stdout)");

    CLI::App* inspect = app.add_subcommand("inspect", "describe a packed artifact");
    inspect->add_option("input", spec.input, "packed artifact path")->required();
    inspect->add_option("--checkpoint", spec.checkpoint,
                        "source checkpoint; recompute per-tensor MSE against it");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    spec.config.format = format == "mxfp4" ? Format::mxfp4 : Format::nvfp4;
    if (!method.empty()) {
        if (method == "baseline") spec.config.method = Method::baseline;
        else if (method == "cjso") spec.config.method = Method::cjso;
        else if (method == "dss") spec.config.method = Method::dss;
        else spec.config.method = Method::soar;
    } else if (trace->parsed()) {
        spec.config.method = Method::soar;
    }

    if (quantize->parsed()) spec.command = "quantize";
    if (compare->parsed()) spec.command = "compare";
    if (trace->parsed()) spec.command = "trace";
    if (inspect->parsed()) spec.command = "inspect";

    if (spec.command != "inspect" && spec.input.empty() && spec.synthetic.empty()) {
        std::cerr << "error: give an input checkpoint or --synthetic\n";
        return kExitUsage;
    }
    if (!spec.input.empty() && !spec.synthetic.empty()) {
        std::cerr << "error: input checkpoint and --synthetic are mutually exclusive\n";
        return kExitUsage;
    }

    if (spec.command == "quantize") return cmd_quantize(spec);
    if (spec.command == "compare") return cmd_compare(spec);
    if (spec.command == "trace") return cmd_trace(spec);
    return cmd_inspect(spec);
}

}  // namespace soarq
