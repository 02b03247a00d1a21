#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace trb {

// Flat named-tensor container written as: magic "TRB1", a little-endian
// u32 JSON length, the JSON header, then the raw float32 payloads in header
// order. The header carries everything needed to resume a run bit-for-bit:
// the resolved config text, the data rng state, and optimizer moments.
struct TensorBlob {
  std::string name;
  std::array<int, 4> shape{0, 0, 0, 0};  // n, c, h, w
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_text;  // resolved config, verbatim
  std::string rng_state;    // serialized training rng, empty if untrained
  int epoch = 0;
  std::int64_t adam_t = 0;
  std::vector<TensorBlob> params;
  std::vector<TensorBlob> opt;  // adam moments, empty when not saved
};

void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Total float count across param blobs; optimizer state excluded.
std::int64_t checkpoint_param_count(const Checkpoint& ck);

}  // namespace trb
