#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mpnet/error.hpp"
#include "mpnet/tensor.hpp"

// NTF, the named-tensor container used for weight import/export and for
// raw-tensor dataset fixtures. Little-endian throughout:
//   "NTF1" | u32 count | per tensor: u16 name_len, name, u8 rank,
//   rank x u64 extents, raw f32 payload
namespace mpnet::ntf {

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  std::size_t offset() const { return off_; }

  void need(std::size_t n, const char* what) {
    if (off_ + n > bytes_.size())
      throw DataError(origin_ + ": corrupt NTF file, truncated " + what + " at byte offset " +
                      std::to_string(off_));
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[off_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[off_ + static_cast<std::size_t>(i)])) << (8 * i);
    off_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[off_ + static_cast<std::size_t>(i)])) << (8 * i);
    off_ += 4;
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[off_ + static_cast<std::size_t>(i)])) << (8 * i);
    off_ += 8;
    return v;
  }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(off_, n);
    off_ += n;
    return s;
  }
  std::vector<float> floats(std::size_t n, const char* what) {
    need(n * 4, what);
    std::vector<float> out(n);
    std::memcpy(out.data(), bytes_.data() + off_, n * 4);
    off_ += n * 4;
    return out;
  }
  bool done() const { return off_ == bytes_.size(); }

  [[noreturn]] void fail(const std::string& why) {
    throw DataError(origin_ + ": corrupt NTF file, " + why + " at byte offset " + std::to_string(off_));
  }

 private:
  const std::string& bytes_;
  std::string origin_;
  std::size_t off_ = 0;
};

}  // namespace detail

inline std::string encode(const std::map<std::string, Tensor>& tensors) {
  std::string out = "NTF1";
  detail::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.size() > 0xffff) throw ValueError("NTF: bad tensor name length");
    detail::put_u16(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape().dims()) detail::put_u64(out, d);
    const std::size_t payload = t.count() * 4;
    const std::size_t at = out.size();
    out.resize(at + payload);
    std::memcpy(out.data() + at, t.data().data(), payload);
  }
  return out;
}

inline std::map<std::string, Tensor> decode(const std::string& bytes, const std::string& origin) {
  detail::Reader r(bytes, origin);
  if (r.str(4, "magic") != "NTF1") {
    throw DataError(origin + ": corrupt NTF file, bad magic at byte offset 0");
  }
  const std::uint32_t count = r.u32("tensor count");
  std::map<std::string, Tensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = r.u16("name length");
    if (name_len == 0) r.fail("empty tensor name");
    const std::string name = r.str(name_len, "name");
    const std::uint8_t rank = r.u8("rank");
    if (rank < 1 || rank > 4) r.fail("tensor " + name + " has invalid rank " + std::to_string(rank));
    std::vector<std::size_t> dims;
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      const std::uint64_t e = r.u64("extent");
      if (e == 0) r.fail("tensor " + name + " has a zero extent");
      if (e > (1ull << 32) || n > (1ull << 32))
        r.fail("tensor " + name + " is implausibly large");
      dims.push_back(static_cast<std::size_t>(e));
      n *= static_cast<std::size_t>(e);
    }
    std::vector<float> data = r.floats(n, ("payload of " + name).c_str());
    if (out.count(name)) r.fail("duplicate tensor name " + name);
    out.emplace(name, Tensor(Shape(dims), std::move(data)));
  }
  if (!r.done()) r.fail("trailing bytes after last tensor");
  return out;
}

inline void write_file(const std::filesystem::path& path,
                       const std::map<std::string, Tensor>& tensors) {
  const std::string bytes = encode(tensors);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::map<std::string, Tensor> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

}  // namespace mpnet::ntf
