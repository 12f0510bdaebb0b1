#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dclsim/core.hpp"
#include "dclsim/deform_conv.hpp"
#include "dclsim/parallel.hpp"

// Offline analysis of offset traces: per-image maximum-offset histograms,
// input-buffer hit-rate curves, and the buffer sizing arithmetic with its
// inversion (capacity -> largest receptive field that fits).

namespace dclsim {

/// One recorded offset field: which layer and which input image produced it.
struct TraceEntry {
  std::uint32_t layer_id = 0;
  std::uint32_t image_id = 0;
  OffsetField field;
};

/// Ordered offset recordings plus the static shape of every recorded layer.
struct OffsetTrace {
  std::vector<TraceEntry> entries;
  std::vector<LayerSpec> layer_specs;  // indexed by layer_id
};

inline void validate_trace(const OffsetTrace& trace) {
  if (trace.entries.empty()) {
    throw ValidationError("OffsetTrace: no entries");
  }
  for (const TraceEntry& e : trace.entries) {
    if (e.layer_id >= trace.layer_specs.size()) {
      throw ValidationError("OffsetTrace: entry references unknown layer " +
                            std::to_string(e.layer_id));
    }
    const LayerSpec& spec = trace.layer_specs[e.layer_id];
    if (e.field.k != spec.k_c || e.field.height != spec.h_out() ||
        e.field.width != spec.w_out()) {
      throw ValidationError("OffsetTrace: field dims do not match layer " +
                            std::to_string(e.layer_id));
    }
  }
}

/// Input buffer elements needed for a given receptive field:
/// RF * (S*T_W + RF - S) * T_N.
inline std::uint64_t input_buffer_size(std::uint64_t rf, std::uint64_t s,
                                       std::uint64_t t_w, std::uint64_t t_n) {
  if (rf < 1 || s < 1 || t_w < 1 || t_n < 1) {
    throw ValidationError("input_buffer_size: all arguments must be >= 1");
  }
  return rf * (s * t_w + rf - s) * t_n;
}

/// Output buffer elements (offsets, interpolated inputs, outputs):
/// T_W * T_N * 2 * K_C^2.
inline std::uint64_t output_buffer_size(std::uint64_t t_w, std::uint64_t t_n,
                                        std::uint64_t k_c) {
  if (t_w < 1 || t_n < 1 || k_c < 1) {
    throw ValidationError("output_buffer_size: all arguments must be >= 1");
  }
  return t_w * t_n * 2 * k_c * k_c;
}

/// Largest integer RF whose input buffer fits in capacity_bytes.
inline std::uint64_t rf_from_capacity(std::uint64_t capacity_bytes,
                                      std::uint64_t s, std::uint64_t t_w,
                                      std::uint64_t t_n,
                                      std::uint64_t bytes_per_elem = 4) {
  if (bytes_per_elem < 1) {
    throw ValidationError("rf_from_capacity: bytes_per_elem must be >= 1");
  }
  const auto fits = [&](std::uint64_t rf) {
    const unsigned __int128 elems =
        static_cast<unsigned __int128>(rf) * (s * t_w + rf - s) * t_n;
    return elems * bytes_per_elem <= capacity_bytes;
  };
  if (!fits(1)) {
    throw CapacityError("rf_from_capacity: capacity " +
                        std::to_string(capacity_bytes) +
                        " bytes is below the minimal RF=1 window");
  }
  std::uint64_t lo = 1, hi = 2;
  while (fits(hi)) {
    lo = hi;
    hi *= 2;
  }
  // invariant: fits(lo) && !fits(hi)
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    if (fits(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// Histogram of per-image maximum offsets, bins [i*w, (i+1)*w) from zero.
struct OffsetHistogram {
  double bin_width = 0.5;
  std::vector<std::uint64_t> counts;
  std::uint64_t total = 0;

  double bin_lo(std::size_t i) const { return bin_width * i; }
  double bin_hi(std::size_t i) const { return bin_width * (i + 1); }
};

/// One sample per image: the max over all layers of that image's offset_max.
inline OffsetHistogram offset_histogram(const OffsetTrace& trace,
                                        double bin_width = 0.5) {
  validate_trace(trace);
  if (!(bin_width > 0.0)) {
    throw ValidationError("offset_histogram: bin width must be positive");
  }
  std::map<std::uint32_t, double> per_image;
  for (const TraceEntry& e : trace.entries) {
    double& m = per_image.try_emplace(e.image_id, 0.0).first->second;
    m = std::max(m, offset_max(e.field));
  }
  OffsetHistogram h;
  h.bin_width = bin_width;
  for (const auto& [image, sample] : per_image) {
    const auto bin = static_cast<std::size_t>(sample / bin_width);
    if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
    ++h.counts[bin];
    ++h.total;
  }
  return h;
}

/// Hit/total counts of bilinear-neighbor reads against a buffered window.
struct ReadCounts {
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
};

// The buffered window is row-aligned and matches the sizing formula's
// geometry: rf_cap rows by (S*T_W + rf_cap - S) cols, anchored so the
// regular (offset-free) taps of the current output row / column tile sit
// centered.
// A read is one in-image, nonzero-weight bilinear neighbor; reads are
// de-duplicated per output position (adjacent taps share neighbors).
inline ReadCounts count_window_reads(const OffsetField& field,
                                     const LayerSpec& spec,
                                     std::size_t tile_w,
                                     std::uint64_t rf_cap) {
  const std::int64_t k = static_cast<std::int64_t>(spec.k_c);
  const std::int64_t s = static_cast<std::int64_t>(spec.stride_s);
  const std::int64_t pad = static_cast<std::int64_t>(spec.padding);
  const std::int64_t h_in = static_cast<std::int64_t>(spec.h_in);
  const std::int64_t w_in = static_cast<std::int64_t>(spec.w_in);
  const std::int64_t rf = static_cast<std::int64_t>(rf_cap);
  const std::int64_t margin = floor_div(rf - k, 2);
  const std::int64_t win_cols = s * static_cast<std::int64_t>(tile_w) + rf - s;

  ReadCounts rc;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  for (std::size_t oy = 0; oy < field.height; ++oy) {
    const std::int64_t row_top = static_cast<std::int64_t>(oy) * s - pad;
    const std::int64_t win_r0 = row_top - margin;
    for (std::size_t ox = 0; ox < field.width; ++ox) {
      const std::int64_t tile_left =
          static_cast<std::int64_t>(ox / tile_w * tile_w) * s - pad;
      const std::int64_t win_c0 = tile_left - margin;
      seen.clear();
      for (std::size_t tap = 0; tap < field.taps(); ++tap) {
        const std::size_t ky = tap / spec.k_c, kx = tap % spec.k_c;
        const std::int64_t gy = row_top + static_cast<std::int64_t>(ky);
        const std::int64_t gx =
            static_cast<std::int64_t>(ox) * s - pad + static_cast<std::int64_t>(kx);
        const double py =
            static_cast<double>(gy) + static_cast<double>(field.dy(oy, ox, tap));
        const double px =
            static_cast<double>(gx) + static_cast<double>(field.dx(oy, ox, tap));
        const auto y0 = static_cast<std::int64_t>(std::floor(py));
        const auto x0 = static_cast<std::int64_t>(std::floor(px));
        const bool frac_y = py != static_cast<double>(y0);
        const bool frac_x = px != static_cast<double>(x0);
        for (int ny = 0; ny < (frac_y ? 2 : 1); ++ny) {
          for (int nx = 0; nx < (frac_x ? 2 : 1); ++nx) {
            const std::int64_t yy = y0 + ny, xx = x0 + nx;
            if (yy < 0 || yy >= h_in || xx < 0 || xx >= w_in) {
              continue;  // zero padding, never fetched
            }
            if (!seen.insert({yy, xx}).second) continue;
            ++rc.total;
            if (yy >= win_r0 && yy < win_r0 + rf && xx >= win_c0 &&
                xx < win_c0 + win_cols) {
              ++rc.hits;
            }
          }
        }
      }
    }
  }
  return rc;
}

/// Fraction of bilinear-neighbor reads served by an input buffer of the given
/// capacity (the rest would miss and go to DRAM).
inline double buffer_efficiency(const OffsetTrace& trace, const TileSpec& tile,
                                std::uint64_t capacity_bytes,
                                std::uint64_t bytes_per_elem = 4) {
  validate_trace(trace);
  if (tile.t_n < 1 || tile.t_w < 1) {
    throw ValidationError("buffer_efficiency: tile factors must be >= 1");
  }
  std::vector<ReadCounts> partial(trace.entries.size());
  parallel_for(trace.entries.size(), [&](std::size_t i) {
    const TraceEntry& e = trace.entries[i];
    const LayerSpec& spec = trace.layer_specs[e.layer_id];
    const std::uint64_t rf_cap = rf_from_capacity(
        capacity_bytes, spec.stride_s, tile.t_w, tile.t_n, bytes_per_elem);
    partial[i] = count_window_reads(e.field, spec, tile.t_w, rf_cap);
  });
  ReadCounts sum;
  for (const ReadCounts& rc : partial) {  // merged in entry order
    sum.hits += rc.hits;
    sum.total += rc.total;
  }
  if (sum.total == 0) return 1.0;  // no in-image reads at all
  return static_cast<double>(sum.hits) / static_cast<double>(sum.total);
}

/// Efficiency at each capacity; capacities must be sorted ascending and the
/// resulting curve is non-decreasing.
inline std::vector<std::pair<std::uint64_t, double>> efficiency_curve(
    const OffsetTrace& trace, const TileSpec& tile,
    const std::vector<std::uint64_t>& capacities,
    std::uint64_t bytes_per_elem = 4) {
  if (!std::is_sorted(capacities.begin(), capacities.end())) {
    throw ValidationError("efficiency_curve: capacities must be ascending");
  }
  std::vector<std::pair<std::uint64_t, double>> curve;
  curve.reserve(capacities.size());
  for (std::uint64_t cap : capacities) {
    curve.emplace_back(cap, buffer_efficiency(trace, tile, cap, bytes_per_elem));
  }
  return curve;
}

}  // namespace dclsim
