// SPDX-License-Identifier: Apache-2.0
//
// ".dtns" tensor files:
//
//   bytes 0..3   magic "DTNS"
//   u32          version (= 1)
//   u8           dtype code (0 = f32, 1 = f64)
//   u32          rank
//   u64[rank]    dims
//   payload      numel values, IEEE-754 little-endian
//
// All integers are little-endian. Round trips are bit-exact.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "kdepth/tensor/tensor.hpp"

namespace kdepth {

inline constexpr std::uint32_t kDtnsVersion = 1;

void write_dtns(std::ostream& os, const Tensor& t);
/// Throws FormatError mentioning `source` on bad magic, version, dtype or truncation.
Tensor read_dtns(std::istream& is, std::string_view source);

void save_dtns(const std::filesystem::path& path, const Tensor& t);
Tensor load_dtns(const std::filesystem::path& path);

namespace io {

void put_u8(std::ostream& os, std::uint8_t v);
void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_string(std::ostream& os, std::string_view s);
std::uint8_t get_u8(std::istream& is, std::string_view source);
std::uint32_t get_u32(std::istream& is, std::string_view source);
std::uint64_t get_u64(std::istream& is, std::string_view source);
std::string get_string(std::istream& is, std::string_view source);

}  // namespace io

}  // namespace kdepth
