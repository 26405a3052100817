#include "xavdt/xavf.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <vector>

#include "xavdt/errors.hpp"

namespace xavdt {

Sha256 sha256(std::string_view bytes) {
    Sha256 out{};
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, out.data(), &len) != 1 || len != out.size()) {
        EVP_MD_CTX_free(ctx);
        throw NumericError("sha256 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    return out;
}

std::string hex(const uint8_t* bytes, size_t n) {
    static const char* digits = "0123456789abcdef";
    std::string s(n * 2, '0');
    for (size_t i = 0; i < n; ++i) {
        s[2 * i] = digits[bytes[i] >> 4];
        s[2 * i + 1] = digits[bytes[i] & 0xf];
    }
    return s;
}

uint64_t fnv1a64(const void* data, size_t n) {
    const auto* p = static_cast<const uint8_t*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[4] = {'X', 'A', 'V', 'F'};
constexpr uint8_t kVersion = 1;

template <typename T>
constexpr uint8_t dtype_code() {
    if constexpr (std::is_same_v<T, float>) return 1;
    else return 2;
}

void put_u64(std::string& buf, uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64(const uint8_t* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

template <typename T>
void write_xavf(const std::string& path, const Tensor<T>& t, const Sha256& config_hash) {
    if (t.rank() > 255) throw DataError("feature file: rank " + std::to_string(t.rank()) + " too large");
    std::string buf;
    buf.append(kMagic, 4);
    buf.push_back(static_cast<char>(kVersion));
    buf.push_back(static_cast<char>(dtype_code<T>()));
    buf.push_back(static_cast<char>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u64(buf, static_cast<uint64_t>(t.dim(i)));
    buf.append(reinterpret_cast<const char*>(config_hash.data()), config_hash.size());

    const size_t payload_off = buf.size();
    const size_t payload_len = static_cast<size_t>(t.numel()) * sizeof(T);
    buf.resize(payload_off + payload_len);
    if (payload_len) std::memcpy(buf.data() + payload_off, t.data(), payload_len);
    put_u64(buf, fnv1a64(buf.data() + payload_off, payload_len));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("feature file: cannot open for write: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("feature file: short write: " + path);
}

template <typename T>
Tensor<T> read_xavf(const std::string& path, const Sha256* expected_hash, Sha256* stored_hash) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("feature file: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    size_t off = 0;
    auto need = [&](size_t n, const char* what) {
        if (buf.size() - off < n) throw DataError(std::string("feature file: truncated ") + what + ": " + path);
        off += n;
        return buf.data() + (off - n);
    };

    const uint8_t* magic = need(4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("feature file: bad magic: " + path);
    const uint8_t version = *need(1, "version");
    if (version != kVersion)
        throw DataError("feature file: unsupported version " + std::to_string(version) + ": " + path);
    const uint8_t dtype = *need(1, "dtype");
    if (dtype != dtype_code<T>())
        throw DataError("feature file: dtype code " + std::to_string(dtype) + " does not match requested type: " +
                        path);
    const uint8_t rank = *need(1, "rank");
    std::vector<int64_t> dims(rank);
    uint64_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        dims[static_cast<size_t>(i)] = static_cast<int64_t>(get_u64(need(8, "dims")));
        numel *= static_cast<uint64_t>(dims[static_cast<size_t>(i)]);
    }
    Sha256 hash{};
    std::memcpy(hash.data(), need(32, "config hash"), 32);
    if (stored_hash) *stored_hash = hash;
    if (expected_hash && hash != *expected_hash)
        throw DataError("feature file: config hash mismatch (have " + hex(hash) + ", want " + hex(*expected_hash) +
                        "): " + path);

    const size_t payload_len = static_cast<size_t>(numel) * sizeof(T);
    if (buf.size() - off != payload_len + 8)
        throw DataError("feature file: payload length " + std::to_string(buf.size() - off - std::min<size_t>(8, buf.size() - off)) +
                        " does not match header dims (" + std::to_string(payload_len) + " bytes expected): " + path);
    const uint8_t* payload = need(payload_len, "payload");
    const uint64_t want = get_u64(need(8, "checksum"));
    if (fnv1a64(payload, payload_len) != want)
        throw DataError("feature file: payload checksum mismatch: " + path);

    std::vector<T> data(static_cast<size_t>(numel));
    if (payload_len) std::memcpy(data.data(), payload, payload_len);
    return Tensor<T>::from_data(std::move(dims), std::move(data));
}

template void write_xavf<float>(const std::string&, const Tensor<float>&, const Sha256&);
template void write_xavf<double>(const std::string&, const Tensor<double>&, const Sha256&);
template Tensor<float> read_xavf<float>(const std::string&, const Sha256*, Sha256*);
template Tensor<double> read_xavf<double>(const std::string&, const Sha256*, Sha256*);

}  // namespace xavdt
