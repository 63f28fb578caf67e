/*
 * SPDX-FileCopyrightText: Copyright (c) 2026 The wavetomo Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wavetomo/field.hpp"

// WTM1 binary container:
//   "WTM1" | u32 dtype | u32 ndim | ndim x u64 dims | f64 dx | 2 x f64 origin | payload
// All little-endian, payload row-major (last dim fastest).

namespace wavetomo::io {

static_assert(std::endian::native == std::endian::little, "WTM1 I/O assumes a little-endian host");

enum class DType : std::uint32_t { f32 = 1, c64 = 2 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Tensor {
  DType dtype = DType::f32;
  std::vector<std::uint64_t> dims;
  double dx = 0.0;
  std::array<double, 2> origin{0.0, 0.0};
  std::vector<float> real;                  // dtype f32
  std::vector<std::complex<float>> cplx;    // dtype c64

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

namespace detail {
template <typename T>
void put(std::string& out, const T& v) {
  const auto* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <typename T>
T take(std::string_view& in) {
  if (in.size() < sizeof(T)) throw FormatError("WTM1: truncated header");
  T v;
  std::memcpy(&v, in.data(), sizeof(T));
  in.remove_prefix(sizeof(T));
  return v;
}
}  // namespace detail

inline std::string encode(const Tensor& t) {
  const std::size_t n = t.count();
  if ((t.dtype == DType::f32 && t.real.size() != n) || (t.dtype == DType::c64 && t.cplx.size() != n))
    throw FormatError("WTM1: payload length does not match dims");
  std::string out = "WTM1";
  detail::put(out, static_cast<std::uint32_t>(t.dtype));
  detail::put(out, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) detail::put(out, d);
  detail::put(out, t.dx);
  detail::put(out, t.origin[0]);
  detail::put(out, t.origin[1]);
  if (t.dtype == DType::f32)
    out.append(reinterpret_cast<const char*>(t.real.data()), n * sizeof(float));
  else
    out.append(reinterpret_cast<const char*>(t.cplx.data()), n * sizeof(std::complex<float>));
  return out;
}

inline Tensor decode(std::string_view in) {
  if (in.size() < 4 || in.substr(0, 4) != "WTM1") throw FormatError("WTM1: bad magic");
  in.remove_prefix(4);
  Tensor t;
  const auto code = detail::take<std::uint32_t>(in);
  if (code != 1 && code != 2) throw FormatError("WTM1: unknown dtype code " + std::to_string(code));
  t.dtype = static_cast<DType>(code);
  const auto ndim = detail::take<std::uint32_t>(in);
  if (ndim == 0 || ndim > 8) throw FormatError("WTM1: unsupported ndim");
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims.push_back(detail::take<std::uint64_t>(in));
  t.dx = detail::take<double>(in);
  t.origin[0] = detail::take<double>(in);
  t.origin[1] = detail::take<double>(in);
  const std::size_t n = t.count();
  const std::size_t bytes = n * (t.dtype == DType::f32 ? sizeof(float) : sizeof(std::complex<float>));
  if (in.size() != bytes) throw FormatError("WTM1: payload size mismatch");
  if (t.dtype == DType::f32) {
    t.real.resize(n);
    std::memcpy(t.real.data(), in.data(), bytes);
  } else {
    t.cplx.resize(n);
    std::memcpy(t.cplx.data(), in.data(), bytes);
  }
  return t;
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

/// Writes via a temporary file and rename so readers never observe a partial file.
inline void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".part";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Tensor read(const std::filesystem::path& path) { return decode(read_bytes(path)); }
inline void write(const std::filesystem::path& path, const Tensor& t) { write_bytes(path, encode(t)); }

inline Tensor from_field(const RealField& f) {
  Tensor t;
  t.dtype = DType::f32;
  t.dims = {f.ny(), f.nx()};
  t.dx = f.grid().dx;
  t.origin = {f.grid().x0, f.grid().y0};
  t.real.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) t.real[i] = static_cast<float>(f[i]);
  return t;
}

inline Tensor from_field(const ComplexField& f) {
  Tensor t;
  t.dtype = DType::c64;
  t.dims = {f.ny(), f.nx()};
  t.dx = f.grid().dx;
  t.origin = {f.grid().x0, f.grid().y0};
  t.cplx.resize(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) t.cplx[i] = std::complex<float>(f[i]);
  return t;
}

inline Grid2D grid_of(const Tensor& t) {
  if (t.dims.size() != 2) throw FormatError("WTM1: expected a 2D field");
  return Grid2D(static_cast<std::size_t>(t.dims[1]), static_cast<std::size_t>(t.dims[0]), t.dx,
                t.origin[0], t.origin[1]);
}

inline RealField to_real_field(const Tensor& t) {
  if (t.dtype != DType::f32) throw FormatError("WTM1: expected real dtype");
  RealField f(grid_of(t));
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = t.real[i];
  return f;
}

inline ComplexField to_complex_field(const Tensor& t) {
  if (t.dtype != DType::c64) throw FormatError("WTM1: expected complex dtype");
  ComplexField f(grid_of(t));
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = complex(t.cplx[i]);
  return f;
}

inline void write_field(const std::filesystem::path& path, const RealField& f) { write(path, from_field(f)); }
inline void write_field(const std::filesystem::path& path, const ComplexField& f) { write(path, from_field(f)); }
inline RealField read_real_field(const std::filesystem::path& path) { return to_real_field(read(path)); }
inline ComplexField read_complex_field(const std::filesystem::path& path) { return to_complex_field(read(path)); }

}  // namespace wavetomo::io
