// SPDX-License-Identifier: Apache-2.0
#include "nilm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace nilm {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T le() {
    need(sizeof(T));
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      value |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("checkpoint", 0, "truncated at byte " + std::to_string(pos_));
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

const std::string kMagic = std::string(kCheckpointVersion) + "\n";

}  // namespace

std::string encode_checkpoint(const HybridParams& params) {
  std::string out = kMagic;
  const std::string config = format_config(params.config);
  put_le<std::uint64_t>(out, config.size());
  out += config;
  const auto tensors = params.tensors();
  put_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor->rank()));
    for (auto e : tensor->shape()) put_le<std::uint64_t>(out, e);
    for (double v : tensor->values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

HybridParams decode_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(kMagic.size()) != kMagic) {
    throw ParseError("checkpoint", 1, std::string("missing version header ") + kCheckpointVersion);
  }
  const auto config_len = in.le<std::uint64_t>();
  ModelConfig config = parse_config(in.take(config_len));
  HybridParams params = zero_model(config);
  auto slots = params.tensors();
  const auto count = in.le<std::uint64_t>();
  if (count != slots.size()) {
    throw ParseError("checkpoint", 0, "expected " + std::to_string(slots.size()) + " tensors for this config, found " +
                                          std::to_string(count));
  }
  for (auto& slot : slots) {
    const std::string name = in.take(in.le<std::uint32_t>());
    if (name != slot.name) throw ParseError("checkpoint", 0, "expected tensor '" + slot.name + "', found '" + name + "'");
    Shape shape(in.le<std::uint32_t>());
    for (auto& e : shape) e = in.le<std::uint64_t>();
    if (shape != slot.tensor->shape()) {
      throw ParseError("checkpoint", 0, "tensor '" + name + "' has shape " + shape_to_string(shape) + ", config implies " +
                                            shape_to_string(slot.tensor->shape()));
    }
    std::vector<double> values(slot.tensor->size());
    for (auto& v : values) v = std::bit_cast<double>(in.le<std::uint64_t>());
    *slot.tensor = Tensor(std::move(shape), std::move(values));
  }
  if (!in.done()) throw ParseError("checkpoint", 0, "trailing bytes after last tensor");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const HybridParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

HybridParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_checkpoint(buf.str());
}

}  // namespace nilm
