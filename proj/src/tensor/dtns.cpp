// SPDX-License-Identifier: Apache-2.0
#include "kdepth/tensor/dtns.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

namespace kdepth {

namespace io {

namespace {

template <class U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is, std::string_view source) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw FormatError(std::string(source) + ": truncated file");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u8(std::ostream& os, std::uint8_t v) { put_le(os, v); }
void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }

void put_string(std::ostream& os, std::string_view s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint8_t get_u8(std::istream& is, std::string_view source) { return get_le<std::uint8_t>(is, source); }
std::uint32_t get_u32(std::istream& is, std::string_view source) { return get_le<std::uint32_t>(is, source); }
std::uint64_t get_u64(std::istream& is, std::string_view source) { return get_le<std::uint64_t>(is, source); }

std::string get_string(std::istream& is, std::string_view source) {
  const std::uint32_t n = get_u32(is, source);
  if (n > (1u << 26)) throw FormatError(std::string(source) + ": implausible string length");
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), n)) throw FormatError(std::string(source) + ": truncated file");
  return s;
}

}  // namespace io

void write_dtns(std::ostream& os, const Tensor& t) {
  os.write("DTNS", 4);
  io::put_u32(os, kDtnsVersion);
  io::put_u8(os, static_cast<std::uint8_t>(t.dtype()));
  io::put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::put_u64(os, static_cast<std::uint64_t>(d));
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    for (T v : t.data<T>()) io::put_le<Bits>(os, std::bit_cast<Bits>(v));
  });
  if (!os) throw FormatError("write failed while encoding tensor");
}

Tensor read_dtns(std::istream& is, std::string_view source) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError(std::string(source) + ": truncated file");
  if (std::string_view(magic, 4) != "DTNS") throw FormatError(std::string(source) + ": bad magic, not a DTNS tensor");
  const std::uint32_t version = io::get_u32(is, source);
  if (version != kDtnsVersion) {
    throw FormatError(std::string(source) + ": unsupported DTNS version " + std::to_string(version));
  }
  const std::uint8_t code = io::get_u8(is, source);
  if (code > 1) throw FormatError(std::string(source) + ": unknown dtype code " + std::to_string(code));
  const std::uint32_t rank = io::get_u32(is, source);
  if (rank > 16) throw FormatError(std::string(source) + ": implausible rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t total = 1;
  for (auto& d : shape) {
    const std::uint64_t v = io::get_u64(is, source);
    if (v > (1ull << 40)) throw FormatError(std::string(source) + ": implausible dimension");
    d = static_cast<std::int64_t>(v);
    total *= v;
    if (total > (1ull << 34)) throw FormatError(std::string(source) + ": implausible element count");
  }
  const DType dtype = static_cast<DType>(code);
  Tensor t = Tensor::zeros(shape, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    using Bits = std::conditional_t<std::is_same_v<T, float>, std::uint32_t, std::uint64_t>;
    for (T& v : t.data<T>()) v = std::bit_cast<T>(io::get_le<Bits>(is, source));
  });
  return t;
}

void save_dtns(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(path.string() + ": cannot open for writing");
  write_dtns(os, t);
}

Tensor load_dtns(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path.string() + ": cannot open for reading");
  Tensor t = read_dtns(is, path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes after tensor");
  return t;
}

}  // namespace kdepth
