#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dclsim/core.hpp"
#include "dclsim/rf_analysis.hpp"

// Offset trace files (.dclo), little-endian throughout:
//
//   bytes 0..3   magic "DCLO"
//   bytes 4..7   version, u32 == 1
//   bytes 8..11  layer_count, u32
//   per layer    k, s, h_out, w_out, image_count (5 x u32)
//   payload      per layer, per image: h_out*w_out*2k^2 f32 values in
//                [row][col][2k^2] order, each tap as (dy, dx), taps in
//                row-major kernel order
//
// Loading rejects NaN/Inf payloads. Analyses that only see the trace
// reconstruct each layer as a same-padded convolution (padding=(k-1)/2,
// input dims inverted from the output dims); simulation commands replace
// these with the real shapes from the network config.

namespace dclsim {

class TraceFormatError : public ValidationError {
 public:
  enum class Kind { bad_magic, bad_version, truncated_payload, non_finite_value };

  TraceFormatError(Kind kind, std::uint64_t byte_offset, const std::string& msg)
      : ValidationError(msg + " (byte offset " + std::to_string(byte_offset) +
                        ")"),
        kind_(kind),
        byte_offset_(byte_offset) {}

  Kind kind() const { return kind_; }
  std::uint64_t byte_offset() const { return byte_offset_; }

 private:
  Kind kind_;
  std::uint64_t byte_offset_;
};

namespace detail {

inline std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float read_f32_le(const std::uint8_t* p) {
  const std::uint32_t bits = read_u32_le(p);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

inline void write_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline void write_f32_le(std::vector<std::uint8_t>& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  write_u32_le(out, bits);
}

// Layer shape as reconstructible from the trace header alone.
inline LayerSpec header_layer_spec(std::uint32_t k, std::uint32_t s,
                                   std::uint32_t h_out, std::uint32_t w_out) {
  LayerSpec spec;
  spec.k_c = k;
  spec.stride_s = s;
  spec.padding = (k - 1) / 2;
  spec.h_in = static_cast<std::size_t>(s) * (h_out - 1) + k - 2 * spec.padding;
  spec.w_in = static_cast<std::size_t>(s) * (w_out - 1) + k - 2 * spec.padding;
  spec.n_in = 1;
  spec.m_out = 1;
  return spec;
}

}  // namespace detail

inline OffsetTrace parse_offset_trace(const std::vector<std::uint8_t>& bytes,
                                      const std::string& source) {
  using detail::read_u32_le;
  const auto need = [&](std::uint64_t offset, std::uint64_t count) {
    if (offset + count > bytes.size()) {
      throw TraceFormatError(TraceFormatError::Kind::truncated_payload,
                             bytes.size(),
                             source + ": truncated, need " +
                                 std::to_string(offset + count) + " bytes");
    }
  };
  need(0, 4);
  if (std::memcmp(bytes.data(), "DCLO", 4) != 0) {
    throw TraceFormatError(TraceFormatError::Kind::bad_magic, 0,
                           source + ": bad magic");
  }
  need(4, 4);
  const std::uint32_t version = read_u32_le(bytes.data() + 4);
  if (version != 1) {
    throw TraceFormatError(TraceFormatError::Kind::bad_version, 4,
                           source + ": unsupported version " +
                               std::to_string(version));
  }
  need(8, 4);
  const std::uint32_t layer_count = read_u32_le(bytes.data() + 8);
  if (layer_count == 0) {
    throw ValidationError(source + ": zero layers");
  }

  struct LayerHeader {
    std::uint32_t k, s, h_out, w_out, image_count;
  };
  std::vector<LayerHeader> headers(layer_count);
  std::uint64_t off = 12;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    need(off, 20);
    headers[l] = {read_u32_le(bytes.data() + off),
                  read_u32_le(bytes.data() + off + 4),
                  read_u32_le(bytes.data() + off + 8),
                  read_u32_le(bytes.data() + off + 12),
                  read_u32_le(bytes.data() + off + 16)};
    if (headers[l].k == 0 || headers[l].s == 0 || headers[l].h_out == 0 ||
        headers[l].w_out == 0) {
      throw ValidationError(source + ": layer " + std::to_string(l) +
                            " has zero dims");
    }
    off += 20;
  }

  OffsetTrace trace;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    trace.layer_specs.push_back(detail::header_layer_spec(
        headers[l].k, headers[l].s, headers[l].h_out, headers[l].w_out));
  }
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    const LayerHeader& h = headers[l];
    const std::uint64_t field_vals = static_cast<std::uint64_t>(h.h_out) *
                                     h.w_out * 2 * h.k * h.k;
    for (std::uint32_t img = 0; img < h.image_count; ++img) {
      need(off, field_vals * 4);
      std::vector<float> vals(field_vals);
      for (std::uint64_t i = 0; i < field_vals; ++i) {
        vals[i] = detail::read_f32_le(bytes.data() + off + i * 4);
        if (!std::isfinite(vals[i])) {
          throw TraceFormatError(TraceFormatError::Kind::non_finite_value,
                                 off + i * 4,
                                 source + ": non-finite offset value");
        }
      }
      TraceEntry e;
      e.layer_id = l;
      e.image_id = img;
      e.field = OffsetField(h.k, h.h_out, h.w_out, std::move(vals));
      trace.entries.push_back(std::move(e));
      off += field_vals * 4;
    }
  }
  if (off != bytes.size()) {
    // stray trailing bytes count as corruption too
    throw TraceFormatError(TraceFormatError::Kind::truncated_payload, off,
                           source + ": payload length mismatch");
  }
  validate_trace(trace);
  return trace;
}

inline OffsetTrace load_offset_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw ValidationError("cannot open trace file: " + path);
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_offset_trace(bytes, path);
}

/// Serializes a trace in canonical order (layers ascending, images ascending).
inline std::vector<std::uint8_t> serialize_offset_trace(
    const OffsetTrace& trace) {
  using detail::write_u32_le;
  validate_trace(trace);
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'D', 'C', 'L', 'O'});
  write_u32_le(out, 1);
  write_u32_le(out, static_cast<std::uint32_t>(trace.layer_specs.size()));

  std::vector<std::vector<const TraceEntry*>> per_layer(
      trace.layer_specs.size());
  for (const TraceEntry& e : trace.entries) {
    per_layer[e.layer_id].push_back(&e);
  }
  for (auto& v : per_layer) {
    std::stable_sort(v.begin(), v.end(),
                     [](const TraceEntry* a, const TraceEntry* b) {
                       return a->image_id < b->image_id;
                     });
  }
  for (std::size_t l = 0; l < trace.layer_specs.size(); ++l) {
    const LayerSpec& spec = trace.layer_specs[l];
    write_u32_le(out, static_cast<std::uint32_t>(spec.k_c));
    write_u32_le(out, static_cast<std::uint32_t>(spec.stride_s));
    write_u32_le(out, static_cast<std::uint32_t>(spec.h_out()));
    write_u32_le(out, static_cast<std::uint32_t>(spec.w_out()));
    write_u32_le(out, static_cast<std::uint32_t>(per_layer[l].size()));
  }
  for (const auto& entries : per_layer) {
    for (const TraceEntry* e : entries) {
      for (float v : e->field.data) detail::write_f32_le(out, v);
    }
  }
  return out;
}

inline void write_offset_trace(const std::string& path,
                               const OffsetTrace& trace) {
  const std::vector<std::uint8_t> bytes = serialize_offset_trace(trace);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ValidationError("cannot open trace file for writing: " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw ValidationError("failed writing trace file: " + path);
  }
}

/// Synthetic offset distributions standing in for trained offsets.
struct OffsetDistribution {
  enum class Kind { zero, uniform, gaussian } kind = Kind::zero;
  double max_abs = 0.0;  // uniform support [-max_abs, max_abs]
  double sigma = 0.0;    // gaussian
  double clip = 0.0;     // gaussian hard clip

  static OffsetDistribution zero() { return {}; }
  static OffsetDistribution uniform(double max_abs) {
    OffsetDistribution d;
    d.kind = Kind::uniform;
    d.max_abs = max_abs;
    return d;
  }
  static OffsetDistribution gaussian(double sigma, double clip) {
    OffsetDistribution d;
    d.kind = Kind::gaussian;
    d.sigma = sigma;
    d.clip = clip;
    return d;
  }
};

inline void validate_distribution(const OffsetDistribution& d) {
  using Kind = OffsetDistribution::Kind;
  if (d.kind == Kind::uniform &&
      (!std::isfinite(d.max_abs) || d.max_abs < 0.0)) {
    throw ValidationError("gen_trace: uniform max_abs must be finite, >= 0");
  }
  if (d.kind == Kind::gaussian &&
      (!std::isfinite(d.sigma) || d.sigma < 0.0 || !std::isfinite(d.clip) ||
       d.clip < 0.0)) {
    throw ValidationError("gen_trace: gaussian sigma/clip must be finite, >= 0");
  }
}

namespace detail {

// Explicit draw mappings keep generated traces bit-identical across
// standard library implementations.
class OffsetRng {
 public:
  explicit OffsetRng(std::uint64_t seed) : state_(seed) {}

  double unit() {  // [0, 1)
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }

  double uniform_pm(double a) { return (2.0 * unit() - 1.0) * a; }

  double gaussian(double sigma, double clip) {
    const double u1 =
        (static_cast<double>(state_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = unit();
    const double z =
        std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * u2);
    return std::clamp(z * sigma, -clip, clip);
  }

 private:
  std::mt19937_64 state_;
};

}  // namespace detail

/// Deterministically generates a trace for the given layer shapes: one field
/// per (layer, image), values drawn from the distribution.
inline OffsetTrace gen_trace(const std::vector<LayerSpec>& specs,
                             const OffsetDistribution& dist,
                             std::uint64_t seed, std::uint32_t images) {
  if (specs.empty() || images == 0) {
    throw ValidationError("gen_trace: need at least one layer and one image");
  }
  validate_distribution(dist);
  detail::OffsetRng rng(seed);
  OffsetTrace trace;
  for (const LayerSpec& s : specs) trace.layer_specs.push_back(validate_layer(s));
  for (std::uint32_t l = 0; l < specs.size(); ++l) {
    const LayerSpec& spec = trace.layer_specs[l];
    for (std::uint32_t img = 0; img < images; ++img) {
      OffsetField f(spec.k_c, spec.h_out(), spec.w_out());
      for (float& v : f.data) {
        switch (dist.kind) {
          case OffsetDistribution::Kind::zero:
            v = 0.0f;
            break;
          case OffsetDistribution::Kind::uniform:
            v = static_cast<float>(rng.uniform_pm(dist.max_abs));
            break;
          case OffsetDistribution::Kind::gaussian:
            v = static_cast<float>(rng.gaussian(dist.sigma, dist.clip));
            break;
        }
      }
      TraceEntry e;
      e.layer_id = l;
      e.image_id = img;
      e.field = std::move(f);
      trace.entries.push_back(std::move(e));
    }
  }
  return trace;
}

}  // namespace dclsim
