#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dclsim {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed shapes, parameters, or file contents. The CLI maps this to exit 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// On-chip buffer capacity or tiling feasibility violations. CLI exit 2.
class CapacityError : public Error {
 public:
  using Error::Error;
};

// The max-offset regularizer has no unique argmax; the subdifferential is a
// set and a single gradient cannot be reported.
class DegenerateMaxError : public Error {
 public:
  using Error::Error;
};

/// Dense rank-3 tensor of 32-bit reals, flat row-major [channel][row][col].
struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  FeatureMap() = default;

  FeatureMap(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), data(c * h * w, 0.0f) {
    check_shape();
  }

  FeatureMap(std::size_t c, std::size_t h, std::size_t w, std::vector<float> d)
      : channels(c), height(h), width(w), data(std::move(d)) {
    check_shape();
    if (data.size() != c * h * w) {
      throw ValidationError("FeatureMap: data length " +
                            std::to_string(data.size()) + " != " +
                            std::to_string(c * h * w));
    }
  }

  std::size_t index(std::size_t c, std::size_t y, std::size_t x) const {
    return (c * height + y) * width + x;
  }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[index(c, y, x)];
  }
  float& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[index(c, y, x)];
  }
  std::size_t size() const { return data.size(); }

 private:
  void check_shape() const {
    if (channels < 1 || height < 1 || width < 1) {
      throw ValidationError("FeatureMap: all dims must be >= 1");
    }
  }
};

/// Convolution weights, flat row-major [out][in][ky][kx], square odd kernel.
struct WeightTensor {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t k = 0;
  std::vector<float> data;

  WeightTensor() = default;

  WeightTensor(std::size_t out, std::size_t in, std::size_t k_)
      : out_channels(out), in_channels(in), k(k_),
        data(out * in * k_ * k_, 0.0f) {
    check_shape();
  }

  WeightTensor(std::size_t out, std::size_t in, std::size_t k_,
               std::vector<float> d)
      : out_channels(out), in_channels(in), k(k_), data(std::move(d)) {
    check_shape();
    if (data.size() != out * in * k * k) {
      throw ValidationError("WeightTensor: data length " +
                            std::to_string(data.size()) + " != " +
                            std::to_string(out * in * k * k));
    }
  }

  std::size_t index(std::size_t o, std::size_t i, std::size_t ky,
                    std::size_t kx) const {
    return ((o * in_channels + i) * k + ky) * k + kx;
  }
  float at(std::size_t o, std::size_t i, std::size_t ky,
           std::size_t kx) const {
    return data[index(o, i, ky, kx)];
  }
  float& at(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
    return data[index(o, i, ky, kx)];
  }

 private:
  void check_shape() const {
    if (out_channels < 1 || in_channels < 1) {
      throw ValidationError("WeightTensor: channel counts must be >= 1");
    }
    if (k < 1 || k % 2 == 0) {
      throw ValidationError("WeightTensor: kernel size must be odd, got " +
                            std::to_string(k));
    }
  }
};

/// Per-output-position sampling displacements, flat [row][col][2k^2].
/// Taps are in row-major kernel order; each tap stores (dy, dx), in input
/// pixels, fractional allowed. All values must be finite.
struct OffsetField {
  std::size_t k = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  OffsetField() = default;

  OffsetField(std::size_t k_, std::size_t h, std::size_t w)
      : k(k_), height(h), width(w), data(h * w * 2 * k_ * k_, 0.0f) {
    check_shape();
  }

  OffsetField(std::size_t k_, std::size_t h, std::size_t w,
              std::vector<float> d)
      : k(k_), height(h), width(w), data(std::move(d)) {
    check_shape();
    if (data.size() != h * w * 2 * k * k) {
      throw ValidationError("OffsetField: data length " +
                            std::to_string(data.size()) + " != " +
                            std::to_string(h * w * 2 * k * k));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(data[i])) {
        throw ValidationError("OffsetField: non-finite value at element " +
                              std::to_string(i));
      }
    }
  }

  std::size_t taps() const { return k * k; }
  std::size_t index(std::size_t y, std::size_t x, std::size_t tap,
                    std::size_t comp) const {
    return ((y * width + x) * taps() + tap) * 2 + comp;
  }
  float dy(std::size_t y, std::size_t x, std::size_t tap) const {
    return data[index(y, x, tap, 0)];
  }
  float dx(std::size_t y, std::size_t x, std::size_t tap) const {
    return data[index(y, x, tap, 1)];
  }
  float& dy(std::size_t y, std::size_t x, std::size_t tap) {
    return data[index(y, x, tap, 0)];
  }
  float& dx(std::size_t y, std::size_t x, std::size_t tap) {
    return data[index(y, x, tap, 1)];
  }

 private:
  void check_shape() const {
    if (k < 1 || height < 1 || width < 1) {
      throw ValidationError("OffsetField: all dims must be >= 1");
    }
  }
};

/// Static shape of one layer: kernel, stride, channel counts, spatial dims,
/// symmetric zero padding.
struct LayerSpec {
  std::size_t k_c = 3;
  std::size_t stride_s = 1;
  std::size_t n_in = 1;
  std::size_t m_out = 1;
  std::size_t h_in = 1;
  std::size_t w_in = 1;
  std::size_t padding = 0;

  std::size_t h_out() const {
    return (h_in + 2 * padding - k_c) / stride_s + 1;
  }
  std::size_t w_out() const {
    return (w_in + 2 * padding - k_c) / stride_s + 1;
  }
};

/// Checks a LayerSpec's invariants and returns it with output dims derivable.
inline LayerSpec validate_layer(const LayerSpec& spec) {
  if (spec.k_c < 1 || spec.k_c % 2 == 0) {
    throw ValidationError("LayerSpec: kernel size must be odd, got " +
                          std::to_string(spec.k_c));
  }
  if (spec.stride_s < 1) {
    throw ValidationError("LayerSpec: stride must be >= 1");
  }
  if (spec.n_in < 1 || spec.m_out < 1) {
    throw ValidationError("LayerSpec: channel counts must be >= 1");
  }
  if (spec.h_in + 2 * spec.padding < spec.k_c ||
      spec.w_in + 2 * spec.padding < spec.k_c) {
    throw ValidationError("LayerSpec: kernel does not fit padded input");
  }
  if (spec.h_out() < 1 || spec.w_out() < 1) {
    throw ValidationError("LayerSpec: non-positive output dims");
  }
  return spec;
}

/// Loop tiling factors (input channels, output channels, rows, cols).
struct TileSpec {
  std::size_t t_n = 1;
  std::size_t t_m = 1;
  std::size_t t_h = 1;
  std::size_t t_w = 1;
};

/// Checks tile factors against a validated layer.
inline TileSpec validate_tile(const TileSpec& tile, const LayerSpec& spec) {
  if (tile.t_n < 1 || tile.t_m < 1 || tile.t_h < 1 || tile.t_w < 1) {
    throw ValidationError("TileSpec: all factors must be >= 1");
  }
  if (tile.t_n > spec.n_in || tile.t_m > spec.m_out ||
      tile.t_h > spec.h_out() || tile.t_w > spec.w_out()) {
    throw ValidationError("TileSpec: factors exceed layer bounds");
  }
  return tile;
}

inline std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

// Floor division for possibly negative numerators (window margins).
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Length of [lo, hi) clamped to [0, limit).
inline std::uint64_t clamped_span(std::int64_t lo, std::int64_t hi,
                                  std::int64_t limit) {
  const std::int64_t a = lo > 0 ? lo : 0;
  const std::int64_t b = hi < limit ? hi : limit;
  return b > a ? static_cast<std::uint64_t>(b - a) : 0;
}

}  // namespace dclsim
