#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dclsim/core.hpp"

// Functional reference of the deformable convolutional layer: offset
// generation, bilinear sampling, the deformable convolution itself, and the
// receptive-field / max-offset regularizer math. Everything here is the
// correctness oracle the accelerator models are checked against, so the
// accumulation order is fixed (channel-major, then ky, then kx) and results
// are bit-reproducible across runs and thread counts.

namespace dclsim {

/// Plain direct convolution with symmetric zero padding.
inline FeatureMap standard_conv(const FeatureMap& x, const WeightTensor& w,
                                const LayerSpec& spec) {
  validate_layer(spec);
  if (x.channels != spec.n_in || x.height != spec.h_in ||
      x.width != spec.w_in) {
    throw ValidationError("standard_conv: input dims do not match layer spec");
  }
  if (w.in_channels != spec.n_in || w.k != spec.k_c) {
    throw ValidationError("standard_conv: weight dims do not match layer spec");
  }
  const std::size_t ho = spec.h_out(), wo = spec.w_out(), k = spec.k_c;
  FeatureMap y(w.out_channels, ho, wo);
  for (std::size_t m = 0; m < w.out_channels; ++m) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < spec.n_in; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const std::int64_t iy =
                  static_cast<std::int64_t>(oy * spec.stride_s) + ky -
                  static_cast<std::int64_t>(spec.padding);
              const std::int64_t ix =
                  static_cast<std::int64_t>(ox * spec.stride_s) + kx -
                  static_cast<std::int64_t>(spec.padding);
              if (iy < 0 || iy >= static_cast<std::int64_t>(x.height) ||
                  ix < 0 || ix >= static_cast<std::int64_t>(x.width)) {
                continue;  // zero padding
              }
              acc += static_cast<double>(x.at(c, iy, ix)) * w.at(m, c, ky, kx);
            }
          }
        }
        y.at(m, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return y;
}

/// Runs the offset-generating convolution and reinterprets its output as an
/// OffsetField: conv channel 2*tap+0 is dy, 2*tap+1 is dx for the tap in
/// row-major kernel order.
inline OffsetField generate_offsets(const FeatureMap& x,
                                    const WeightTensor& w_o,
                                    const LayerSpec& spec) {
  const std::size_t need = 2 * spec.k_c * spec.k_c;
  if (w_o.out_channels != need) {
    throw ValidationError("generate_offsets: offset weights must have " +
                          std::to_string(need) + " output channels, got " +
                          std::to_string(w_o.out_channels));
  }
  const FeatureMap raw = standard_conv(x, w_o, spec);
  OffsetField o(spec.k_c, raw.height, raw.width);
  for (std::size_t y = 0; y < raw.height; ++y) {
    for (std::size_t xx = 0; xx < raw.width; ++xx) {
      for (std::size_t ch = 0; ch < need; ++ch) {
        o.data[(y * raw.width + xx) * need + ch] = raw.at(ch, y, xx);
      }
    }
  }
  return o;
}

/// Bilinear interpolation at real coordinates (py, px) in channel c.
/// Neighbors outside the map contribute zero (zero-padding semantics).
inline float bilinear_sample(const FeatureMap& x, std::size_t c, double py,
                             double px) {
  if (c >= x.channels) {
    throw ValidationError("bilinear_sample: channel out of range");
  }
  if (!std::isfinite(py) || !std::isfinite(px)) {
    throw ValidationError("bilinear_sample: non-finite coordinates");
  }
  const std::int64_t y0 = static_cast<std::int64_t>(std::floor(py));
  const std::int64_t x0 = static_cast<std::int64_t>(std::floor(px));
  const double fy = py - static_cast<double>(y0);
  const double fx = px - static_cast<double>(x0);
  double acc = 0.0;
  for (int ny = 0; ny < 2; ++ny) {
    for (int nx = 0; nx < 2; ++nx) {
      const std::int64_t yy = y0 + ny;
      const std::int64_t xx = x0 + nx;
      if (yy < 0 || yy >= static_cast<std::int64_t>(x.height) || xx < 0 ||
          xx >= static_cast<std::int64_t>(x.width)) {
        continue;
      }
      const double wy = ny ? fy : 1.0 - fy;
      const double wx = nx ? fx : 1.0 - fx;
      acc += static_cast<double>(x.at(c, yy, xx)) * wy * wx;
    }
  }
  return static_cast<float>(acc);
}

/// Interpolated inputs for the second convolution, one n_in*k^2 column per
/// output position, flat [row][col][c*k^2 + tap].
struct SampledTensor {
  std::size_t n_in = 0;
  std::size_t k = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> data;

  std::size_t cols() const { return n_in * k * k; }
  float at(std::size_t y, std::size_t x, std::size_t c,
           std::size_t tap) const {
    return data[(y * width + x) * cols() + c * k * k + tap];
  }
};

/// Sampling process: for each output position and tap, bilinearly samples
/// every input channel at the regular grid point displaced by that tap's
/// offset. With all-zero offsets this degenerates to the im2col patches of a
/// standard zero-padded convolution.
inline SampledTensor sample_inputs(const FeatureMap& x, const OffsetField& o,
                                   const LayerSpec& spec) {
  validate_layer(spec);
  const std::size_t ho = spec.h_out(), wo = spec.w_out(), k = spec.k_c;
  if (o.k != k || o.height != ho || o.width != wo) {
    throw ValidationError("sample_inputs: offset field dims do not match");
  }
  if (x.channels != spec.n_in || x.height != spec.h_in ||
      x.width != spec.w_in) {
    throw ValidationError("sample_inputs: input dims do not match layer spec");
  }
  SampledTensor s;
  s.n_in = spec.n_in;
  s.k = k;
  s.height = ho;
  s.width = wo;
  s.data.assign(ho * wo * s.cols(), 0.0f);
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      for (std::size_t c = 0; c < spec.n_in; ++c) {
        for (std::size_t tap = 0; tap < k * k; ++tap) {
          const std::size_t ky = tap / k, kx = tap % k;
          const double gy = static_cast<double>(oy * spec.stride_s + ky) -
                            static_cast<double>(spec.padding);
          const double gx = static_cast<double>(ox * spec.stride_s + kx) -
                            static_cast<double>(spec.padding);
          const double py = gy + static_cast<double>(o.dy(oy, ox, tap));
          const double px = gx + static_cast<double>(o.dx(oy, ox, tap));
          s.data[(oy * wo + ox) * s.cols() + c * k * k + tap] =
              bilinear_sample(x, c, py, px);
        }
      }
    }
  }
  return s;
}

struct DeformConvResult {
  FeatureMap y;
  OffsetField offsets;
};

/// Full deformable convolutional layer: offset generation, sampling, and the
/// dynamic convolution over the sampled inputs. Returns both the output map
/// and the generated offsets.
inline DeformConvResult deformable_conv(const FeatureMap& x,
                                        const WeightTensor& w_o,
                                        const WeightTensor& w_d,
                                        const LayerSpec& spec) {
  if (w_d.in_channels != spec.n_in || w_d.k != spec.k_c ||
      w_d.out_channels != spec.m_out) {
    throw ValidationError("deformable_conv: w_d dims do not match layer spec");
  }
  OffsetField o = generate_offsets(x, w_o, spec);
  const SampledTensor s = sample_inputs(x, o, spec);
  const std::size_t ho = s.height, wo = s.width, k = spec.k_c;
  FeatureMap y(spec.m_out, ho, wo);
  for (std::size_t m = 0; m < spec.m_out; ++m) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = 0.0;
        for (std::size_t c = 0; c < spec.n_in; ++c) {
          for (std::size_t tap = 0; tap < k * k; ++tap) {
            acc += static_cast<double>(s.at(oy, ox, c, tap)) *
                   w_d.at(m, c, tap / k, tap % k);
          }
        }
        y.at(m, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return {std::move(y), std::move(o)};
}

/// Maximum absolute offset of one field (the sign only encodes direction).
inline double offset_max(const OffsetField& o) {
  double m = 0.0;
  for (float v : o.data) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

/// Maximum absolute offset over a set of fields.
inline double offset_max(std::span<const OffsetField> fields) {
  if (fields.empty()) {
    throw ValidationError("offset_max: empty offset set");
  }
  double m = 0.0;
  for (const OffsetField& f : fields) m = std::max(m, offset_max(f));
  return m;
}

/// Receptive field of a deformable layer: k_c + 2*ceil(o_max).
inline std::size_t receptive_field(std::size_t k_c, double o_max) {
  if (k_c < 1) throw ValidationError("receptive_field: kernel size must be >= 1");
  if (!(o_max >= 0.0)) {
    throw ValidationError("receptive_field: o_max must be non-negative");
  }
  return k_c + 2 * static_cast<std::size_t>(std::ceil(o_max));
}

/// Mixing weight and base task loss for the max-offset regularizer.
struct RegularizerConfig {
  double lambda = 0.0;    // in [0, 1)
  double base_loss = 0.0; // externally supplied task loss L
};

inline void validate_regularizer(const RegularizerConfig& cfg) {
  if (!(cfg.lambda >= 0.0 && cfg.lambda < 1.0)) {
    throw ValidationError("RegularizerConfig: lambda must be in [0, 1)");
  }
}

/// Regularized loss (1 - lambda) * L + lambda * max over layers of o_max.
inline double regularized_loss(const RegularizerConfig& cfg,
                               std::span<const OffsetField> dcl_offsets) {
  validate_regularizer(cfg);
  if (dcl_offsets.empty()) {
    throw ValidationError("regularized_loss: empty DCL set");
  }
  return (1.0 - cfg.lambda) * cfg.base_loss +
         cfg.lambda * offset_max(dcl_offsets);
}

/// Subgradient of the regularizer term: lambda * sign at the single
/// max-magnitude element, zero elsewhere. Scaling the base-loss gradient by
/// (1 - lambda) is the caller's responsibility. A tie at the max (including
/// the all-zero case) is degenerate and raised as DegenerateMaxError.
inline std::vector<OffsetField> regularizer_subgradient(
    const RegularizerConfig& cfg, std::span<const OffsetField> dcl_offsets) {
  validate_regularizer(cfg);
  if (dcl_offsets.empty()) {
    throw ValidationError("regularizer_subgradient: empty DCL set");
  }
  double best = -1.0;
  std::size_t best_field = 0, best_elem = 0, count = 0;
  for (std::size_t f = 0; f < dcl_offsets.size(); ++f) {
    const auto& d = dcl_offsets[f].data;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double a = std::abs(static_cast<double>(d[i]));
      if (a > best) {
        best = a;
        best_field = f;
        best_elem = i;
        count = 1;
      } else if (a == best) {
        ++count;
      }
    }
  }
  if (count != 1 || best == 0.0) {
    throw DegenerateMaxError(
        "regularizer_subgradient: argmax is not unique (tie at |o| = " +
        std::to_string(best) + ")");
  }
  std::vector<OffsetField> grads;
  grads.reserve(dcl_offsets.size());
  for (const OffsetField& f : dcl_offsets) {
    grads.emplace_back(f.k, f.height, f.width);
  }
  const float v = dcl_offsets[best_field].data[best_elem];
  grads[best_field].data[best_elem] =
      static_cast<float>(cfg.lambda * (v > 0.0f ? 1.0 : -1.0));
  return grads;
}

}  // namespace dclsim
