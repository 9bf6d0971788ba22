// Copyright 2026 the blidar authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Little-endian stream helpers shared by the point file and model file code.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace blidar::detail {

inline void write_bytes_le(std::ostream& os, const void* src, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(static_cast<const char*>(src), static_cast<std::streamsize>(n));
  } else {
    const auto* p = static_cast<const unsigned char*>(src);
    for (std::size_t i = n; i > 0; --i) {
      os.put(static_cast<char>(p[i - 1]));
    }
  }
}

inline bool read_bytes_le(std::istream& is, void* dst, std::size_t n) {
  char buf[8];
  if (!is.read(buf, static_cast<std::streamsize>(n))) return false;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, buf, n);
  } else {
    auto* p = static_cast<unsigned char*>(dst);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<unsigned char>(buf[n - 1 - i]);
  }
  return true;
}

inline void write_u32le(std::ostream& os, std::uint32_t v) { write_bytes_le(os, &v, 4); }
inline void write_u64le(std::ostream& os, std::uint64_t v) { write_bytes_le(os, &v, 8); }
inline void write_f32le(std::ostream& os, float v) { write_bytes_le(os, &v, 4); }
inline void write_f64le(std::ostream& os, double v) { write_bytes_le(os, &v, 8); }

inline bool read_u32le(std::istream& is, std::uint32_t& v) { return read_bytes_le(is, &v, 4); }
inline bool read_u64le(std::istream& is, std::uint64_t& v) { return read_bytes_le(is, &v, 8); }
inline bool read_f32le(std::istream& is, float& v) { return read_bytes_le(is, &v, 4); }
inline bool read_f64le(std::istream& is, double& v) { return read_bytes_le(is, &v, 8); }

}  // namespace blidar::detail
