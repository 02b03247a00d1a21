#include "trb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace trb {

namespace {

using nlohmann::json;

json blob_headers(const std::vector<TensorBlob>& blobs) {
  json arr = json::array();
  for (const TensorBlob& b : blobs) {
    arr.push_back({{"name", b.name}, {"shape", b.shape}, {"count", b.data.size()}});
  }
  return arr;
}

void write_payload(std::ofstream& f, const std::vector<TensorBlob>& blobs) {
  for (const TensorBlob& b : blobs)
    f.write(reinterpret_cast<const char*>(b.data.data()),
            static_cast<std::streamsize>(b.data.size() * sizeof(float)));
}

std::vector<TensorBlob> read_payload(std::ifstream& f, const json& headers,
                                     const std::string& path) {
  std::vector<TensorBlob> out;
  out.reserve(headers.size());
  for (const auto& h : headers) {
    TensorBlob b;
    b.name = h.at("name").get<std::string>();
    b.shape = h.at("shape").get<std::array<int, 4>>();
    b.data.resize(h.at("count").get<std::size_t>());
    f.read(reinterpret_cast<char*>(b.data.data()),
           static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (static_cast<std::size_t>(f.gcount()) != b.data.size() * sizeof(float))
      throw std::runtime_error("checkpoint truncated: " + path + " at blob " + b.name);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  json meta;
  meta["config"] = ck.config_text;
  meta["rng"] = ck.rng_state;
  meta["epoch"] = ck.epoch;
  meta["adam_t"] = ck.adam_t;
  meta["params"] = blob_headers(ck.params);
  meta["opt"] = blob_headers(ck.opt);
  const std::string head = meta.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
  f.write("TRB1", 4);
  const std::uint32_t len = static_cast<std::uint32_t>(head.size());
  char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                  static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  f.write(lenb, 4);
  f.write(head.data(), static_cast<std::streamsize>(head.size()));
  write_payload(f, ck.params);
  write_payload(f, ck.opt);
  if (!f) throw std::runtime_error("short write on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (f.gcount() != 4 || std::memcmp(magic, "TRB1", 4) != 0)
    throw std::runtime_error("not a checkpoint file: " + path);
  unsigned char lenb[4];
  f.read(reinterpret_cast<char*>(lenb), 4);
  if (f.gcount() != 4) throw std::runtime_error("checkpoint truncated: " + path);
  const std::uint32_t len = static_cast<std::uint32_t>(lenb[0]) | (lenb[1] << 8) |
                            (lenb[2] << 16) | (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string head(len, '\0');
  f.read(head.data(), len);
  if (static_cast<std::uint32_t>(f.gcount()) != len)
    throw std::runtime_error("checkpoint truncated: " + path);

  json meta = json::parse(head);
  Checkpoint ck;
  ck.config_text = meta.at("config").get<std::string>();
  ck.rng_state = meta.at("rng").get<std::string>();
  ck.epoch = meta.at("epoch").get<int>();
  ck.adam_t = meta.at("adam_t").get<std::int64_t>();
  ck.params = read_payload(f, meta.at("params"), path);
  ck.opt = read_payload(f, meta.at("opt"), path);
  return ck;
}

std::int64_t checkpoint_param_count(const Checkpoint& ck) {
  std::int64_t n = 0;
  for (const TensorBlob& b : ck.params) n += static_cast<std::int64_t>(b.data.size());
  return n;
}

}  // namespace trb
