#include "xavdt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <set>

#include "xavdt/errors.hpp"

namespace xavdt {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'X', 'A', 'V', 'C'};
constexpr uint32_t kVersion = 1;

json header_json(const Checkpoint& ckpt) {
    json h;
    h["format"] = "xavc";
    h["version"] = kVersion;
    h["config"] = ckpt.config_text;
    h["config_hash"] = hex(ckpt.config_hash());
    h["seed"] = ckpt.seed;
    h["grids"] = {{"phi_h", ckpt.phi_h}, {"phi_w", ckpt.phi_w}, {"psi_h", ckpt.psi_h}, {"psi_w", ckpt.psi_w}};
    json curve = json::array();
    for (const auto& e : ckpt.log.curve) curve.push_back({{"bce", e.bce}, {"tri", e.tri}, {"total", e.total}});
    h["log"] = {{"curve", curve}, {"steps", ckpt.log.steps}, {"aborted", ckpt.log.aborted}};
    json dir = json::array();
    for (const auto& [name, t] : ckpt.tensors) dir.push_back({{"name", name}, {"dims", t.shape()}});
    h["tensors"] = dir;
    return h;
}

void append_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
uint64_t read_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}
uint32_t read_u32(const uint8_t* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

std::string serialize_bytes(const Checkpoint& ckpt) {
    const std::string head = header_json(ckpt).dump();
    std::string out;
    out.append(kMagic, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((kVersion >> (8 * i)) & 0xff));
    append_u64(out, head.size());
    out += head;
    const size_t payload_start = out.size();
    for (const auto& [name, t] : ckpt.tensors) {
        (void)name;
        out.append(reinterpret_cast<const char*>(t.data()), static_cast<size_t>(t.numel()) * sizeof(float));
    }
    append_u64(out, fnv1a64(out.data() + payload_start, out.size() - payload_start));
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    const std::string bytes = serialize_bytes(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("checkpoint: cannot open for writing: " + path);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw DataError("checkpoint: short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    size_t off = 0;
    auto need = [&](size_t n, const char* what) {
        if (buf.size() - off < n) throw DataError(std::string("checkpoint: truncated at ") + what + ": " + path);
    };
    need(4, "magic");
    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw DataError("checkpoint: bad magic: " + path);
    off = 4;
    need(4, "version");
    const uint32_t version = read_u32(buf.data() + off);
    off += 4;
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version) + ": " + path);
    need(8, "header length");
    const uint64_t hlen = read_u64(buf.data() + off);
    off += 8;
    need(hlen, "header");
    json h;
    try {
        h = json::parse(buf.begin() + static_cast<std::ptrdiff_t>(off),
                        buf.begin() + static_cast<std::ptrdiff_t>(off + hlen));
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: unreadable header: ") + e.what());
    }
    off += hlen;

    static const std::set<std::string> known{"format", "version", "config", "config_hash",
                                            "seed",   "grids",   "log",    "tensors"};
    for (const auto& [key, _] : h.items())
        if (!known.count(key)) throw DataError("checkpoint: unknown header key '" + key + "' — refusing to load");

    Checkpoint ckpt;
    try {
        if (h.at("format").get<std::string>() != "xavc") throw DataError("checkpoint: wrong container format");
        ckpt.config_text = h.at("config").get<std::string>();
        ckpt.seed = h.at("seed").get<uint64_t>();
        const auto& g = h.at("grids");
        ckpt.phi_h = g.at("phi_h").get<int64_t>();
        ckpt.phi_w = g.at("phi_w").get<int64_t>();
        ckpt.psi_h = g.at("psi_h").get<int64_t>();
        ckpt.psi_w = g.at("psi_w").get<int64_t>();
        const auto& lg = h.at("log");
        ckpt.log.steps = lg.at("steps").get<int64_t>();
        ckpt.log.aborted = lg.at("aborted").get<bool>();
        for (const auto& e : lg.at("curve"))
            ckpt.log.curve.push_back(
                {e.at("bce").get<double>(), e.at("tri").get<double>(), e.at("total").get<double>()});

        const std::string stored_hash = h.at("config_hash").get<std::string>();
        if (stored_hash != hex(ckpt.config_hash()))
            throw DataError("checkpoint: config hash mismatch (stored " + stored_hash + ")");

        const size_t payload_start = off;
        for (const auto& entry : h.at("tensors")) {
            const std::string name = entry.at("name").get<std::string>();
            const std::vector<int64_t> dims = entry.at("dims").get<std::vector<int64_t>>();
            int64_t count = 1;
            for (int64_t d : dims) count *= d;
            need(static_cast<size_t>(count) * sizeof(float), name.c_str());
            TensorF t(dims, 0.0f);
            std::memcpy(t.data(), buf.data() + off, static_cast<size_t>(count) * sizeof(float));
            off += static_cast<size_t>(count) * sizeof(float);
            ckpt.tensors.emplace_back(name, std::move(t));
        }
        need(8, "checksum");
        const uint64_t stored = read_u64(buf.data() + off);
        const uint64_t actual = fnv1a64(buf.data() + payload_start, off - payload_start);
        off += 8;
        if (stored != actual) throw DataError("checkpoint: payload checksum mismatch: " + path);
        if (off != buf.size()) throw DataError("checkpoint: trailing bytes after checksum: " + path);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed header field: ") + e.what());
    }
    return ckpt;
}

std::string checkpoint_digest(const Checkpoint& ckpt) { return hex(sha256(serialize_bytes(ckpt))); }

}  // namespace xavdt
