#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "dclsim/accel_sim.hpp"
#include "dclsim/core.hpp"
#include "dclsim/rf_analysis.hpp"

// Roofline-driven tile-factor selection over the input/output buffer
// capacity constraints: brute-force enumeration of a candidate grid with a
// total ordering, so the winner is independent of evaluation order.

namespace dclsim {

struct RooflinePoint {
  double ctc = 0.0;  // operations per DRAM byte
  double attainable_ops_per_s = 0.0;
  double compute_roof_ops_per_s = 0.0;
  enum class Bound { compute, memory } bound = Bound::compute;
};

/// Computation-to-communication ratio of the dynamic-convolution stage under
/// the tile's reuse schedule: every input tile is re-loaded once per output-
/// channel group, weights are re-loaded once per spatial tile, outputs are
/// stored once. Ops are counted as 2 per MAC.
inline double ctc_ratio(const LayerSpec& spec, const TileSpec& tile) {
  validate_layer(spec);
  validate_tile(tile, spec);
  const std::uint64_t k = spec.k_c, s = spec.stride_s;
  const std::uint64_t ho = spec.h_out(), wo = spec.w_out();
  const std::uint64_t ops = 2 * mac_count(spec).conv_stage;

  const std::uint64_t m_groups = ceil_div(spec.m_out, tile.t_m);
  std::uint64_t x_bytes = 0;
  std::uint64_t tiles = 0;
  for (std::uint64_t th0 = 0; th0 < ho; th0 += tile.t_h) {
    const std::uint64_t nh = std::min<std::uint64_t>(tile.t_h, ho - th0);
    const std::int64_t r0 = static_cast<std::int64_t>(th0 * s) -
                            static_cast<std::int64_t>(spec.padding);
    const std::int64_t r1 = r0 + static_cast<std::int64_t>(s * nh + k - s);
    const std::uint64_t rows = static_cast<std::uint64_t>(
        std::max<std::int64_t>(
            0, std::min<std::int64_t>(r1, static_cast<std::int64_t>(spec.h_in)) -
                   std::max<std::int64_t>(0, r0)));
    for (std::uint64_t tw0 = 0; tw0 < wo; tw0 += tile.t_w) {
      const std::uint64_t nw = std::min<std::uint64_t>(tile.t_w, wo - tw0);
      const std::int64_t c0 = static_cast<std::int64_t>(tw0 * s) -
                              static_cast<std::int64_t>(spec.padding);
      const std::int64_t c1 = c0 + static_cast<std::int64_t>(s * nw + k - s);
      const std::uint64_t cols = static_cast<std::uint64_t>(
          std::max<std::int64_t>(
              0, std::min<std::int64_t>(c1, static_cast<std::int64_t>(spec.w_in)) -
                     std::max<std::int64_t>(0, c0)));
      x_bytes += rows * cols * spec.n_in * 4;
      ++tiles;
    }
  }
  x_bytes *= m_groups;
  const std::uint64_t w_bytes =
      tiles * static_cast<std::uint64_t>(spec.m_out) * spec.n_in * k * k * 4;
  const std::uint64_t y_bytes =
      static_cast<std::uint64_t>(spec.m_out) * ho * wo * 4;
  return static_cast<double>(ops) /
         static_cast<double>(x_bytes + w_bytes + y_bytes);
}

/// Attainable throughput at a given arithmetic intensity.
inline RooflinePoint attainable(double ctc, const AccelConfig& cfg) {
  if (!(ctc > 0.0)) {
    throw ValidationError("attainable: ctc must be positive");
  }
  validate_config(cfg);
  RooflinePoint p;
  p.ctc = ctc;
  p.compute_roof_ops_per_s =
      2.0 * static_cast<double>(cfg.pe_rows * cfg.pe_cols) * cfg.clock_hz;
  const double mem_bound = ctc * cfg.dram_bw_bytes_per_s;
  if (mem_bound < p.compute_roof_ops_per_s) {
    p.attainable_ops_per_s = mem_bound;
    p.bound = RooflinePoint::Bound::memory;
  } else {
    p.attainable_ops_per_s = p.compute_roof_ops_per_s;
    p.bound = RooflinePoint::Bound::compute;
  }
  return p;
}

/// Power-of-two candidates up to the given per-dimension bounds.
inline std::vector<TileSpec> tile_grid_from_bounds(std::uint64_t n_bound,
                                                   std::uint64_t m_bound,
                                                   std::uint64_t h_bound,
                                                   std::uint64_t w_bound) {
  const auto pows = [](std::uint64_t bound) {
    std::vector<std::uint64_t> v;
    for (std::uint64_t p = 1; p <= bound; p *= 2) v.push_back(p);
    return v;
  };
  std::vector<TileSpec> grid;
  for (std::uint64_t tn : pows(n_bound)) {
    for (std::uint64_t tm : pows(m_bound)) {
      for (std::uint64_t th : pows(h_bound)) {
        for (std::uint64_t tw : pows(w_bound)) {
          grid.push_back({tn, tm, th, tw});
        }
      }
    }
  }
  return grid;
}

/// Power-of-two candidates up to each of one layer's dimension bounds.
inline std::vector<TileSpec> default_tile_grid(const LayerSpec& spec) {
  return tile_grid_from_bounds(spec.n_in, spec.m_out, spec.h_out(),
                               spec.w_out());
}

inline bool tile_fits_buffers(const LayerSpec& spec, const TileSpec& tile,
                              const AccelConfig& cfg, std::uint64_t rf) {
  const std::uint64_t in_need =
      input_buffer_size(rf, spec.stride_s, tile.t_w, tile.t_n) * 4;
  const std::uint64_t out_need =
      output_buffer_size(tile.t_w, tile.t_n, spec.k_c) * 4;
  return in_need <= cfg.input_buffer_bytes &&
         out_need <= cfg.output_buffer_bytes;
}

struct TilingChoice {
  TileSpec tile;
  RooflinePoint roofline;
};

namespace detail {

inline bool tile_valid(const LayerSpec& spec, const TileSpec& t) {
  return t.t_n >= 1 && t.t_m >= 1 && t.t_h >= 1 && t.t_w >= 1 &&
         t.t_n <= spec.n_in && t.t_m <= spec.m_out && t.t_h <= spec.h_out() &&
         t.t_w <= spec.w_out();
}

inline bool lex_less(const TileSpec& a, const TileSpec& b) {
  if (a.t_n != b.t_n) return a.t_n < b.t_n;
  if (a.t_m != b.t_m) return a.t_m < b.t_m;
  if (a.t_h != b.t_h) return a.t_h < b.t_h;
  return a.t_w < b.t_w;
}

}  // namespace detail

/// Best feasible tile for one layer: maximize attainable throughput, ties
/// broken by higher CTC, then smaller input-buffer need, then lexicographic
/// (t_n, t_m, t_h, t_w).
inline TilingChoice select_tiling(const LayerSpec& spec, const AccelConfig& cfg,
                                  std::uint64_t rf,
                                  const std::vector<TileSpec>& grid) {
  validate_layer(spec);
  validate_config(cfg);
  if (grid.empty()) {
    throw ValidationError("select_tiling: empty candidate grid");
  }
  bool have = false;
  TilingChoice best;
  std::uint64_t best_in_need = 0;
  for (const TileSpec& t : grid) {
    if (!detail::tile_valid(spec, t)) continue;
    if (!tile_fits_buffers(spec, t, cfg, rf)) continue;
    const RooflinePoint p = attainable(ctc_ratio(spec, t), cfg);
    const std::uint64_t in_need =
        input_buffer_size(rf, spec.stride_s, t.t_w, t.t_n) * 4;
    bool wins = !have;
    if (have) {
      if (p.attainable_ops_per_s != best.roofline.attainable_ops_per_s) {
        wins = p.attainable_ops_per_s > best.roofline.attainable_ops_per_s;
      } else if (p.ctc != best.roofline.ctc) {
        wins = p.ctc > best.roofline.ctc;
      } else if (in_need != best_in_need) {
        wins = in_need < best_in_need;
      } else {
        wins = detail::lex_less(t, best.tile);
      }
    }
    if (wins) {
      have = true;
      best = {t, p};
      best_in_need = in_need;
    }
  }
  if (!have) {
    throw CapacityError(
        "select_tiling: no candidate fits the configured buffers");
  }
  return best;
}

struct CrossTilingChoice {
  TileSpec tile;
  double total_runtime_s = 0.0;
};

/// One shared tile tuple across several layers: minimizes the sum of modeled
/// per-layer runtimes (stage-2 ops / attainable), feasible for every layer at
/// its own receptive field. Ties resolved by smaller worst-case input-buffer
/// need, then lexicographic order.
inline CrossTilingChoice select_tiling_cross(
    const std::vector<LayerSpec>& layers, const AccelConfig& cfg,
    const std::vector<std::uint64_t>& rfs, const std::vector<TileSpec>& grid) {
  if (layers.empty() || layers.size() != rfs.size()) {
    throw ValidationError("select_tiling_cross: layers and rfs mismatch");
  }
  validate_config(cfg);
  if (grid.empty()) {
    throw ValidationError("select_tiling_cross: empty candidate grid");
  }
  bool have = false;
  CrossTilingChoice best;
  std::uint64_t best_need = 0;
  for (const TileSpec& t : grid) {
    bool ok = true;
    double runtime = 0.0;
    std::uint64_t need = 0;
    for (std::size_t i = 0; i < layers.size() && ok; ++i) {
      if (!detail::tile_valid(layers[i], t) ||
          !tile_fits_buffers(layers[i], t, cfg, rfs[i])) {
        ok = false;
        break;
      }
      const RooflinePoint p = attainable(ctc_ratio(layers[i], t), cfg);
      runtime += 2.0 * static_cast<double>(mac_count(layers[i]).conv_stage) /
                 p.attainable_ops_per_s;
      need = std::max(need, input_buffer_size(rfs[i], layers[i].stride_s,
                                              t.t_w, t.t_n) *
                                4);
    }
    if (!ok) continue;
    bool wins = !have;
    if (have) {
      if (runtime != best.total_runtime_s) {
        wins = runtime < best.total_runtime_s;
      } else if (need != best_need) {
        wins = need < best_need;
      } else {
        wins = detail::lex_less(t, best.tile);
      }
    }
    if (wins) {
      have = true;
      best = {t, runtime};
      best_need = need;
    }
  }
  if (!have) {
    throw CapacityError(
        "select_tiling_cross: no candidate fits every layer");
  }
  return best;
}

}  // namespace dclsim
