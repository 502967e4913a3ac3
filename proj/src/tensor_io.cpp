#include "soarq/tensor_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace soarq {

namespace {

// ------------------------------------------------------------ byte utils --

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw std::runtime_error("read error on " + path);
    return data;
}

void write_file(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out.good()) throw std::runtime_error("write error on " + path);
}

void put_u16(std::string& b, std::uint16_t v) {
    b.push_back(static_cast<char>(v & 0xff));
    b.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& b, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(b, bits);
}

// Bounds-checked little-endian reader.
struct ByteReader {
    const std::string& data;
    size_t pos = 0;
    std::string what;  // named in error messages

    void need(size_t n) const {
        if (pos + n > data.size())
            throw std::runtime_error(what + " truncated at byte " + std::to_string(pos));
    }
    std::uint64_t u(int n) {
        need(n);
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += n;
        return v;
    }
    std::string bytes(size_t n) {
        need(n);
        std::string s = data.substr(pos, n);
        pos += n;
        return s;
    }
};

// Standard reflected CRC-32 (polynomial 0xEDB88320), table-driven.
std::uint32_t crc32(const char* data, size_t len) {
    static const auto table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    std::uint32_t c = 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i)
        c = table[(c ^ static_cast<unsigned char>(data[i])) & 0xff] ^ (c >> 8);
    return c ^ 0xFFFFFFFFu;
}

// -------------------------------------------------- checkpoint promotion --

double promote_f16(std::uint16_t bits) {
    int sign = bits >> 15;
    int exp = (bits >> 10) & 0x1f;
    int mant = bits & 0x3ff;
    double mag;
    if (exp == 0x1f)
        mag = mant == 0 ? HUGE_VAL : std::nan("");
    else if (exp == 0)
        mag = std::ldexp(mant, -24);
    else
        mag = std::ldexp(1.0 + mant / 1024.0, exp - 15);
    return sign ? -mag : mag;
}

double promote_bf16(std::uint16_t bits) {
    std::uint32_t wide = static_cast<std::uint32_t>(bits) << 16;
    float f;
    std::memcpy(&f, &wide, 4);
    return static_cast<double>(f);
}

double promote_f32(std::uint32_t bits) {
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
    std::string data = read_file(path);
    ByteReader r{data, 0, "checkpoint " + path};
    std::uint64_t header_len = r.u(8);
    if (8 + header_len > data.size())
        throw std::runtime_error("checkpoint " + path + " truncated: header of " +
                                 std::to_string(header_len) + " bytes exceeds the file");
    nlohmann::ordered_json header;
    try {
        header = nlohmann::ordered_json::parse(data.begin() + 8,
                                               data.begin() + 8 + static_cast<long>(header_len));
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("checkpoint " + path + " header parse error at byte " +
                                 std::to_string(8 + e.byte) + ": " + e.what());
    }
    if (!header.is_object())
        throw std::runtime_error("checkpoint " + path + " header is not a JSON object");

    const size_t data_start = 8 + header_len;
    Checkpoint ck;
    for (auto it = header.begin(); it != header.end(); ++it) {
        const std::string& name = it.key();
        if (name == "__metadata__") continue;
        const auto& meta = it.value();
        if (!meta.is_object() || !meta.contains("dtype") || !meta.contains("shape") ||
            !meta.contains("data_offsets"))
            throw std::runtime_error("checkpoint " + path + ": malformed entry for " + name);
        std::string dtype = meta["dtype"].get<std::string>();
        std::vector<std::int64_t> shape = meta["shape"].get<std::vector<std::int64_t>>();
        auto offs = meta["data_offsets"].get<std::vector<std::uint64_t>>();
        if (offs.size() != 2 || offs[1] < offs[0])
            throw std::runtime_error("checkpoint " + path + ": bad data_offsets for " + name);
        if (data_start + offs[1] > data.size())
            throw std::runtime_error("checkpoint " + path + " truncated at byte " +
                                     std::to_string(data.size()) + ": tensor " + name +
                                     " ends at " + std::to_string(data_start + offs[1]));

        std::int64_t numel = 1;
        for (std::int64_t d : shape) {
            if (d < 0) throw std::runtime_error("checkpoint " + path + ": negative dim in " + name);
            numel *= d;
        }
        int elem_size;
        if (dtype == "F32")
            elem_size = 4;
        else if (dtype == "F16" || dtype == "BF16")
            elem_size = 2;
        else {
            ck.warnings.push_back({name, "unsupported dtype " + dtype + ", tensor skipped"});
            continue;
        }
        if (numel == 0) {
            ck.warnings.push_back({name, "empty tensor skipped"});
            continue;
        }
        if (offs[1] - offs[0] != static_cast<std::uint64_t>(numel) * elem_size)
            throw std::runtime_error("checkpoint " + path + ": data length mismatch for " + name);

        TensorRecord rec;
        rec.name = name;
        rec.shape = shape;
        rec.values.resize(numel);
        const unsigned char* p =
            reinterpret_cast<const unsigned char*>(data.data()) + data_start + offs[0];
        if (dtype == "F32") {
            for (std::int64_t i = 0; i < numel; ++i) {
                std::uint32_t bits = static_cast<std::uint32_t>(p[4 * i]) |
                                     static_cast<std::uint32_t>(p[4 * i + 1]) << 8 |
                                     static_cast<std::uint32_t>(p[4 * i + 2]) << 16 |
                                     static_cast<std::uint32_t>(p[4 * i + 3]) << 24;
                rec.values[i] = promote_f32(bits);
            }
        } else {
            for (std::int64_t i = 0; i < numel; ++i) {
                std::uint16_t bits = static_cast<std::uint16_t>(
                    p[2 * i] | static_cast<std::uint16_t>(p[2 * i + 1]) << 8);
                rec.values[i] = dtype == "F16" ? promote_f16(bits) : promote_bf16(bits);
            }
        }
        ck.tensors.push_back(std::move(rec));
    }
    return ck;
}

// ------------------------------------------------------- packed artifact --

namespace {

constexpr char kMagic[4] = {'S', 'O', 'Q', '1'};
constexpr std::uint16_t kVersion = 1;

std::int64_t padded_count(const QuantizedTensor& qt) { return qt.padded_elements(); }

}  // namespace

void write_packed(const std::string& path, const std::vector<QuantizedTensor>& tensors) {
    // Directory size must be known before payload offsets can be assigned.
    size_t dir_size = 0;
    for (const auto& qt : tensors)
        dir_size += 4 + qt.name.size() + 1 + 1 + 2 + 4 + 8 * qt.shape.size() + 8 + 8;

    std::string body;  // directory + payloads (everything after the fixed header)
    std::uint64_t offset = 16 + dir_size;
    for (const auto& qt : tensors) {
        if (qt.block_size < 1 || qt.block_size > 0xffff)
            throw std::runtime_error("block size out of range for " + qt.name);
        if (qt.block_count() * qt.block_size != padded_count(qt))
            throw std::runtime_error("inconsistent quantized tensor " + qt.name);
        put_u32(body, static_cast<std::uint32_t>(qt.name.size()));
        body += qt.name;
        body.push_back(qt.format == Format::nvfp4 ? 0 : 1);
        body.push_back(0);
        put_u16(body, static_cast<std::uint16_t>(qt.block_size));
        put_u32(body, static_cast<std::uint32_t>(qt.shape.size()));
        for (std::int64_t d : qt.shape) put_u64(body, static_cast<std::uint64_t>(d));
        put_u64(body, offset);
        put_u64(body, static_cast<std::uint64_t>(qt.payload_bytes()));
        offset += static_cast<std::uint64_t>(qt.payload_bytes());
    }
    for (const auto& qt : tensors) {
        if (qt.format == Format::nvfp4) {
            put_f32(body, qt.global_scale);
            for (E4M3Value v : qt.block_scales) body.push_back(static_cast<char>(v.bits));
        } else {
            for (E8M0Scale s : qt.e8m0_scales)
                body.push_back(static_cast<char>(s.exponent + 127));
        }
        std::int64_t n = padded_count(qt);
        for (std::int64_t k = 0; k < n; k += 2) {
            int lo = qt.codes[k].bits & 0xf;  // low nibble holds the even index
            int hi = k + 1 < n ? qt.codes[k + 1].bits & 0xf : 0;
            body.push_back(static_cast<char>(lo | hi << 4));
        }
    }

    std::string out;
    out.append(kMagic, 4);
    put_u16(out, kVersion);
    put_u16(out, 0);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    put_u32(out, crc32(body.data(), body.size()));
    out += body;
    write_file(path, out);
}

std::vector<QuantizedTensor> read_packed(const std::string& path) {
    std::string data = read_file(path);
    ByteReader r{data, 0, "artifact " + path};
    if (r.bytes(4) != std::string(kMagic, 4))
        throw std::runtime_error("artifact " + path + " is not a packed artifact (bad magic)");
    std::uint16_t version = static_cast<std::uint16_t>(r.u(2));
    if (version != kVersion)
        throw std::runtime_error("artifact " + path + " has unsupported container version " +
                                 std::to_string(version));
    r.u(2);  // reserved
    std::uint32_t count = static_cast<std::uint32_t>(r.u(4));
    std::uint32_t want_crc = static_cast<std::uint32_t>(r.u(4));
    std::uint32_t got_crc = crc32(data.data() + 16, data.size() - 16);
    if (want_crc != got_crc)
        throw std::runtime_error("artifact " + path + " checksum mismatch (file corrupted)");

    std::vector<QuantizedTensor> tensors(count);
    for (std::uint32_t t = 0; t < count; ++t) {
        QuantizedTensor& qt = tensors[t];
        std::uint32_t name_len = static_cast<std::uint32_t>(r.u(4));
        qt.name = r.bytes(name_len);
        std::uint64_t fmt = r.u(1);
        if (fmt > 1)
            throw std::runtime_error("artifact " + path + ": bad format tag at byte " +
                                     std::to_string(r.pos - 1));
        qt.format = fmt == 0 ? Format::nvfp4 : Format::mxfp4;
        r.u(1);  // reserved
        qt.block_size = static_cast<int>(r.u(2));
        if (qt.block_size < 1)
            throw std::runtime_error("artifact " + path + ": bad block size at byte " +
                                     std::to_string(r.pos - 2));
        std::uint32_t rank = static_cast<std::uint32_t>(r.u(4));
        if (rank > 64)
            throw std::runtime_error("artifact " + path + ": implausible rank at byte " +
                                     std::to_string(r.pos - 4));
        qt.shape.resize(rank);
        for (std::uint32_t i = 0; i < rank; ++i)
            qt.shape[i] = static_cast<std::int64_t>(r.u(8));
        std::uint64_t payload_off = r.u(8);
        std::uint64_t payload_len = r.u(8);

        std::int64_t n = qt.elements();
        if (n < 0 || n == 0)
            throw std::runtime_error("artifact " + path + ": bad shape for " + qt.name);
        std::int64_t padded = (n + qt.block_size - 1) / qt.block_size * qt.block_size;
        std::int64_t blocks = padded / qt.block_size;
        std::int64_t code_bytes = (padded + 1) / 2;
        std::int64_t expect =
            code_bytes + blocks + (qt.format == Format::nvfp4 ? 4 : 0);
        if (payload_len != static_cast<std::uint64_t>(expect))
            throw std::runtime_error("artifact " + path + ": payload length mismatch for " +
                                     qt.name);
        if (payload_off > data.size() || payload_len > data.size() - payload_off)
            throw std::runtime_error("artifact " + path + ": payload for " + qt.name +
                                     " overruns the file at byte " +
                                     std::to_string(payload_off));

        ByteReader p{data, static_cast<size_t>(payload_off), "artifact " + path};
        if (qt.format == Format::nvfp4) {
            std::uint32_t bits = static_cast<std::uint32_t>(p.u(4));
            float gs;
            std::memcpy(&gs, &bits, 4);
            qt.global_scale = gs;
            qt.block_scales.resize(blocks);
            for (std::int64_t i = 0; i < blocks; ++i) {
                std::uint8_t b = static_cast<std::uint8_t>(p.u(1));
                if ((b & 0x7f) == 0x7f || (b & 0x80) || b == 0)
                    throw std::runtime_error("artifact " + path +
                                             ": corrupted block scale at byte " +
                                             std::to_string(p.pos - 1));
                qt.block_scales[i] = E4M3Value{b};
            }
        } else {
            qt.e8m0_scales.resize(blocks);
            for (std::int64_t i = 0; i < blocks; ++i) {
                std::uint8_t b = static_cast<std::uint8_t>(p.u(1));
                if (b == 255)
                    throw std::runtime_error("artifact " + path +
                                             ": corrupted block scale at byte " +
                                             std::to_string(p.pos - 1));
                qt.e8m0_scales[i] = E8M0Scale{static_cast<std::int16_t>(b - 127)};
            }
        }
        qt.codes.resize(padded);
        for (std::int64_t k = 0; k < padded; k += 2) {
            std::uint8_t b = static_cast<std::uint8_t>(p.u(1));
            qt.codes[k] = Fp4Code{static_cast<std::uint8_t>(b & 0xf)};
            if (k + 1 < padded) qt.codes[k + 1] = Fp4Code{static_cast<std::uint8_t>(b >> 4)};
        }
    }
    return tensors;
}

// ------------------------------------------------------------- reporting --

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_shape(const std::vector<std::int64_t>& shape) {
    if (shape.empty()) return "1";
    std::string s;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += 'x';
        s += std::to_string(shape[i]);
    }
    return s;
}

}  // namespace

std::string render_report(const std::vector<MethodResult>& results) {
    std::string out = "# quantization report v1\n";
    out += "name\tshape\tmethod\tformat\tmse\titerations\tpayload_bytes\n";
    for (const auto& r : results) {
        out += r.tensor.name + '\t' + fmt_shape(r.tensor.shape) + '\t' +
               method_name(r.method) + '\t' + format_name(r.tensor.format) + '\t' +
               fmt_double(r.mse) + '\t' + std::to_string(r.iterations) + '\t' +
               std::to_string(r.tensor.payload_bytes()) + '\n';
    }
    return out;
}

void write_report(const std::string& path, const std::vector<MethodResult>& results) {
    write_file(path, render_report(results));
}

std::string render_trace(const std::vector<MethodResult>& results) {
    std::string out = "# convergence trace v1\n";
    out += "tensor\titeration\tloss_after_cjso\tloss_after_dss\trel_improvement\n";
    for (const auto& r : results)
        for (const auto& row : r.trace.rows)
            out += r.tensor.name + '\t' + std::to_string(row.iteration) + '\t' +
                   fmt_double(row.loss_after_cjso) + '\t' + fmt_double(row.loss_after_dss) +
                   '\t' + fmt_double(row.rel_improvement) + '\n';
    return out;
}

void write_trace(const std::string& path, const std::vector<MethodResult>& results) {
    write_file(path, render_trace(results));
}

}  // namespace soarq
