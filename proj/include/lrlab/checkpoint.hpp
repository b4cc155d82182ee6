#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lrlab/matrix.hpp"
#include "lrlab/model.hpp"

namespace lrlab {

// Single-file binary checkpoint format:
//   magic "LLAB1"
//   u32 json length, then that many bytes of UTF-8 config JSON
//   repeated blocks: u32 id length, id bytes, u32 rows, u32 cols,
//                    rows*cols little-endian f64 values
// Both base models and adapter sets use it; adapter blocks are named
// "L{layer}.{type}.{B|A|mag|ref}".

struct CheckpointBlock {
  std::string id;
  DenseMatrix values;
};

struct Checkpoint {
  std::string config_json;
  std::vector<CheckpointBlock> blocks;

  const CheckpointBlock* find(const std::string& id) const {
    for (const auto& b : blocks)
      if (b.id == id) return &b;
    return nullptr;
  }
};

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// FNV-1a of the serialized byte stream; stable across runs and machines.
std::uint64_t checkpoint_hash(const Checkpoint& ckpt);

Checkpoint model_to_checkpoint(const BaseModel<double>& model);
BaseModel<double> model_from_checkpoint(const Checkpoint& ckpt);

Checkpoint adapters_to_checkpoint(const AdapterSet<double>& set,
                                  const ModelConfig& model_cfg);
AdapterSet<double> adapters_from_checkpoint(const Checkpoint& ckpt,
                                            const BaseModel<double>& model);

}  // namespace lrlab
