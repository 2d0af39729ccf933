#include "pplx/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace pplx {

namespace {

constexpr char kMagic[4] = {'P', 'P', 'L', 'X'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

struct Reader {
    std::string buf;
    size_t pos = 0;
    std::string path;

    [[noreturn]] void fail(const std::string& why) const {
        throw std::runtime_error("checkpoint " + path + ": " + why);
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) fail("truncated file");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string bytes(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const TransformerParams& params, const ModelConfig& config, uint64_t step,
                     const std::string& path) {
    params.validate(config);
    const std::vector<std::string> names = TransformerParams::tensor_names(config);
    const std::vector<Tensor> tensors = params.flat();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    const std::string cfg_json = nlohmann::json(config).dump();
    put_u32(out, static_cast<uint32_t>(cfg_json.size()));
    out += cfg_json;
    put_u64(out, step);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (size_t t = 0; t < tensors.size(); ++t) {
        put_u32(out, static_cast<uint32_t>(names[t].size()));
        out += names[t];
        const auto& shape = tensors[t].shape();
        put_u32(out, static_cast<uint32_t>(shape.size()));
        for (Index d : shape) put_u64(out, static_cast<uint64_t>(d));
        const Vec& flat = tensors[t].flat();
        for (Index i = 0; i < flat.size(); ++i) put_f64(out, flat[i]);
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint " + path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw std::runtime_error("checkpoint " + path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r;
    r.path = path;
    {
        std::ifstream f(path, std::ios::binary);
        if (!f) r.fail("cannot open");
        r.buf.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    }

    if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic");
    const uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        r.fail("unsupported format version " + std::to_string(version) + " (expected " +
               std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ck;
    const std::string cfg_json = r.bytes(r.u32());
    try {
        ck.config = nlohmann::json::parse(cfg_json).get<ModelConfig>();
        ck.config.validate();
    } catch (const std::exception& e) {
        r.fail(std::string("bad embedded config: ") + e.what());
    }
    ck.step = r.u64();

    const std::vector<std::string> names = TransformerParams::tensor_names(ck.config);
    const uint32_t count = r.u32();
    if (count != names.size()) {
        r.fail("tensor count " + std::to_string(count) + " does not match config (" +
               std::to_string(names.size()) + ")");
    }

    std::vector<Tensor> tensors;
    tensors.reserve(count);
    for (uint32_t t = 0; t < count; ++t) {
        const std::string name = r.bytes(r.u32());
        if (name != names[t]) r.fail("tensor " + std::to_string(t) + " named '" + name + "', expected '" + names[t] + "'");
        const uint32_t rank = r.u32();
        if (rank > 2) r.fail("tensor '" + name + "' has rank " + std::to_string(rank));
        std::vector<Index> shape(rank);
        size_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint64_t dim = r.u64();
            if (dim == 0 || dim > (1u << 26)) r.fail("tensor '" + name + "' has absurd dimension");
            shape[d] = static_cast<Index>(dim);
            numel *= dim;
        }
        Vec data(static_cast<Index>(numel));
        for (size_t i = 0; i < numel; ++i) data[static_cast<Index>(i)] = r.f64();
        try {
            tensors.push_back(Tensor::from_data(shape, data));
        } catch (const std::exception& e) {
            r.fail("tensor '" + name + "': " + e.what());
        }
    }
    if (r.pos != r.buf.size()) r.fail("trailing bytes after payload");

    try {
        ck.params = TransformerParams::from_flat(ck.config, tensors);
        ck.params.validate(ck.config);
    } catch (const std::exception& e) {
        r.fail(std::string("shape mismatch vs embedded config: ") + e.what());
    }
    return ck;
}

} // namespace pplx
