#pragma once

#include <string>

#include "xavdt/hash.hpp"
#include "xavdt/tensor.hpp"

namespace xavdt {

// Binary tensor container used for cached features, masks, and heatmap
// sidecars. Layout (all integers little-endian):
//   bytes 0..3   magic "XAVF"
//   byte  4      format version (1)
//   byte  5      dtype code: 1 = float32, 2 = float64
//   byte  6      rank
//   rank x u64   dims
//   32 bytes     config hash (SHA-256 of the producing config)
//   payload      row-major elements
//   u64          FNV-1a checksum of the payload bytes
template <typename T>
void write_xavf(const std::string& path, const Tensor<T>& t, const Sha256& config_hash);

// Loads a tensor, verifying magic/version/dtype, dimension-product vs file
// size, and the payload checksum. When expected_hash is non-null the stored
// config hash must match it exactly.
template <typename T>
Tensor<T> read_xavf(const std::string& path, const Sha256* expected_hash = nullptr,
                    Sha256* stored_hash = nullptr);

extern template void write_xavf<float>(const std::string&, const Tensor<float>&, const Sha256&);
extern template void write_xavf<double>(const std::string&, const Tensor<double>&, const Sha256&);
extern template Tensor<float> read_xavf<float>(const std::string&, const Sha256*, Sha256*);
extern template Tensor<double> read_xavf<double>(const std::string&, const Sha256*, Sha256*);

}  // namespace xavdt
