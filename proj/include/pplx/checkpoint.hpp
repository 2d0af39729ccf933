#pragma once

#include "pplx/model.hpp"

#include <cstdint>
#include <string>

namespace pplx {

// On-disk layout, all integers little-endian:
//   "PPLX"                     4-byte magic
//   u32  format version        currently 1
//   u32  config length, then that many bytes of UTF-8 config JSON
//   u64  training step
//   u32  tensor count
//   per tensor, in TransformerParams::tensor_names order:
//     u32 name length, name bytes
//     u32 rank, u64 dim per axis
//     f64 payload, row-major
// Doubles travel as raw IEEE-754 bits, so save/load round-trips bitwise.
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    uint64_t step = 0;
    TransformerParams params;
};

void save_checkpoint(const TransformerParams& params, const ModelConfig& config, uint64_t step,
                     const std::string& path);

// Throws std::runtime_error on bad magic, unsupported version, truncation, or
// tensors that disagree with the embedded config. Never returns a partial model.
Checkpoint load_checkpoint(const std::string& path);

} // namespace pplx
