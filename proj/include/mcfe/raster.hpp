#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mcfe/binary_io.hpp"
#include "mcfe/fft.hpp"

namespace mcfe {

// RST1 raster: "RST1" | u32 dtype | u32 rank | u64 dims[rank] | row-major LE payload.
enum class RasterType : std::uint32_t { Float32 = 1, Float64 = 2, Complex64 = 3, Complex128 = 4 };

struct Raster {
  RasterType type = RasterType::Float32;
  std::vector<std::uint64_t> dims;
  std::vector<double> real;     // Float32 / Float64 payloads
  std::vector<cdouble> complex;  // Complex64 / Complex128 payloads

  std::size_t count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
  bool is_complex() const { return type == RasterType::Complex64 || type == RasterType::Complex128; }
};

inline std::size_t raster_elem_bytes(RasterType t) {
  switch (t) {
    case RasterType::Float32: return 4;
    case RasterType::Float64: return 8;
    case RasterType::Complex64: return 8;
    case RasterType::Complex128: return 16;
  }
  throw FormatError("header", "unknown raster dtype");
}

inline io::ByteWriter encode_raster(const Raster& r) {
  if (r.count() != (r.is_complex() ? r.complex.size() : r.real.size()))
    throw ShapeError("raster: payload size does not match dims");
  io::ByteWriter w;
  w.bytes("RST1");
  w.u32(static_cast<std::uint32_t>(r.type));
  w.u32(static_cast<std::uint32_t>(r.dims.size()));
  for (auto d : r.dims) w.u64(d);
  switch (r.type) {
    case RasterType::Float32:
      for (double v : r.real) w.f32(static_cast<float>(v));
      break;
    case RasterType::Float64:
      for (double v : r.real) w.f64(v);
      break;
    case RasterType::Complex64:
      for (auto c : r.complex) {
        w.f32(static_cast<float>(c.real()));
        w.f32(static_cast<float>(c.imag()));
      }
      break;
    case RasterType::Complex128:
      for (auto c : r.complex) {
        w.f64(c.real());
        w.f64(c.imag());
      }
      break;
  }
  return w;
}

inline void write_raster(const std::filesystem::path& path, const Raster& r) { encode_raster(r).save(path); }

inline Raster decode_raster(io::ByteReader& in) {
  if (in.bytes(4, "magic") != "RST1") throw FormatError("magic", "bad raster magic");
  Raster r;
  const auto type = in.u32("header");
  if (type < 1 || type > 4) throw FormatError("header", "unknown raster dtype " + std::to_string(type));
  r.type = static_cast<RasterType>(type);
  const auto rank = in.u32("header");
  if (rank > 16) throw FormatError("header", "raster rank too large");
  for (std::uint32_t i = 0; i < rank; ++i) r.dims.push_back(in.u64("dims"));
  std::uint64_t count = 1;
  for (auto d : r.dims) {
    if (d != 0 && count > UINT64_MAX / d) throw FormatError("dims", "dimension overflow");
    count *= d;
  }
  io::checked_payload({count}, raster_elem_bytes(r.type), in.remaining(), "payload");
  const auto n = static_cast<std::size_t>(count);
  switch (r.type) {
    case RasterType::Float32:
      r.real.resize(n);
      for (auto& v : r.real) v = in.f32("payload");
      break;
    case RasterType::Float64:
      r.real.resize(n);
      for (auto& v : r.real) v = in.f64("payload");
      break;
    case RasterType::Complex64:
      r.complex.resize(n);
      for (auto& c : r.complex) {
        const double re = in.f32("payload");
        c = {re, static_cast<double>(in.f32("payload"))};
      }
      break;
    case RasterType::Complex128:
      r.complex.resize(n);
      for (auto& c : r.complex) {
        const double re = in.f64("payload");
        c = {re, in.f64("payload")};
      }
      break;
  }
  return r;
}

inline Raster read_raster(const std::filesystem::path& path) {
  auto in = io::ByteReader::from_file(path);
  return decode_raster(in);
}

}  // namespace mcfe
