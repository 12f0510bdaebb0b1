#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dclsim/core.hpp"
#include "dclsim/deform_conv.hpp"
#include "dclsim/parallel.hpp"
#include "dclsim/rf_analysis.hpp"

// Deterministic analytic simulator of two accelerators running one
// deformable convolutional layer over a trace of recorded offset fields:
//
//  - proposed: holds the full receptive-field window on chip (sized from the
//    trace's maximum offset), samples without ever missing, and stages the
//    interpolated inputs through DRAM exactly once between the input
//    sampling phase and the dynamic convolution phase.
//  - baseline: a conventional systolic design whose input buffer holds only
//    the regular kernel window. Every bilinear-neighbor read outside that
//    window is an irregular DRAM burst that stalls the pipeline.
//
// Both share the same compute model: a weight-loading preamble, then per
// spatial tile the engine runs offset generation, interpolation, and the
// dynamic convolution back to back, with DRAM transfers double-buffered
// against compute (per-tile cost = max(compute, memory)). The baseline adds
// its miss stalls serially; miss counting uses the same windowed-read rule
// as the buffer-efficiency analysis, multiplied by the input channel count
// (each channel's plane is fetched separately).

namespace dclsim {

struct AccelConfig {
  std::size_t pe_rows = 64;  // output-channel dimension of the PE array
  std::size_t pe_cols = 8;   // output-pixel dimension
  double clock_hz = 100e6;
  double dram_bw_bytes_per_s = 4e9;
  std::uint64_t burst_bytes = 64;
  std::uint64_t row_miss_penalty_cycles = 100;
  double e_dram_seq_nj_per_byte = 0.16;
  double irregular_energy_factor = 3.0;  // premium over sequential, >= 1
  double e_mac_nj = 0.004;
  double e_buf_nj_per_byte = 0.01;
  std::uint64_t input_buffer_bytes = 16ull << 20;
  std::uint64_t output_buffer_bytes = 2ull << 20;
};

inline void validate_config(const AccelConfig& cfg) {
  if (cfg.pe_rows < 1 || cfg.pe_cols < 1) {
    throw ValidationError("AccelConfig: PE array dims must be >= 1");
  }
  if (!(cfg.clock_hz > 0.0) || !(cfg.dram_bw_bytes_per_s > 0.0)) {
    throw ValidationError("AccelConfig: clock and bandwidth must be positive");
  }
  if (cfg.burst_bytes < 1) {
    throw ValidationError("AccelConfig: burst_bytes must be >= 1");
  }
  if (!(cfg.e_dram_seq_nj_per_byte > 0.0) || !(cfg.e_mac_nj > 0.0) ||
      !(cfg.e_buf_nj_per_byte > 0.0)) {
    throw ValidationError("AccelConfig: energy constants must be positive");
  }
  if (!(cfg.irregular_energy_factor >= 1.0)) {
    throw ValidationError("AccelConfig: irregular_energy_factor must be >= 1");
  }
}

struct EnergyBreakdown {
  double dram_seq = 0.0;
  double dram_irregular = 0.0;
  double mac = 0.0;
  double buffer = 0.0;

  double total() const { return dram_seq + dram_irregular + mac + buffer; }
};

struct SimReport {
  std::uint64_t cycles_total = 0;
  std::uint64_t cycles_stall = 0;
  std::uint64_t macs = 0;  // all multiply-accumulates incl. interpolation
  std::uint64_t dram_bytes_seq = 0;
  std::uint64_t dram_bytes_irregular = 0;
  std::uint64_t buffer_bytes_accessed = 0;
  EnergyBreakdown energy;
  double wall_time_s = 0.0;
};

struct MacCount {
  std::uint64_t offset_stage = 0;  // offset-generating convolution
  std::uint64_t conv_stage = 0;    // dynamic convolution
  std::uint64_t total = 0;
};

/// Convolution MACs of both stages (interpolation not included).
inline MacCount mac_count(const LayerSpec& spec) {
  validate_layer(spec);
  const std::uint64_t k2 = spec.k_c * spec.k_c;
  const std::uint64_t hw = spec.h_out() * spec.w_out();
  MacCount mc;
  mc.conv_stage = static_cast<std::uint64_t>(spec.m_out) * spec.n_in * k2 * hw;
  mc.offset_stage = 2 * k2 * spec.n_in * k2 * hw;
  mc.total = mc.conv_stage + mc.offset_stage;
  return mc;
}

/// Cycles of one systolic pass: streaming depth T_N*K_C^2 plus the skew
/// fill/drain of a rows-by-cols array.
inline std::uint64_t systolic_pass_cycles(std::uint64_t t_n, std::uint64_t k_c,
                                          std::uint64_t rows,
                                          std::uint64_t cols) {
  if (t_n < 1 || k_c < 1 || rows < 1 || cols < 1) {
    throw ValidationError("systolic_pass_cycles: all arguments must be >= 1");
  }
  return t_n * k_c * k_c + rows + cols - 2;
}

/// Per-source energy for a report's traffic and compute counts.
inline EnergyBreakdown energy_report(const SimReport& r,
                                     const AccelConfig& cfg) {
  EnergyBreakdown e;
  e.dram_seq =
      static_cast<double>(r.dram_bytes_seq) * cfg.e_dram_seq_nj_per_byte;
  e.dram_irregular = static_cast<double>(r.dram_bytes_irregular) *
                     cfg.e_dram_seq_nj_per_byte * cfg.irregular_energy_factor;
  e.mac = static_cast<double>(r.macs) * cfg.e_mac_nj;
  e.buffer =
      static_cast<double>(r.buffer_bytes_accessed) * cfg.e_buf_nj_per_byte;
  return e;
}

namespace detail {

constexpr std::uint64_t kElemBytes = 4;

inline std::uint64_t cycles_for_bytes(std::uint64_t bytes,
                                      const AccelConfig& cfg) {
  const double bytes_per_cycle = cfg.dram_bw_bytes_per_s / cfg.clock_hz;
  return static_cast<std::uint64_t>(
      std::ceil(static_cast<double>(bytes) / bytes_per_cycle));
}

// Per-image, per-layer cost model shared by both accelerators. rf_window is
// the receptive field the input buffer is provisioned for: the trace RF for
// the proposed design, K_C for the baseline.
struct TileModel {
  std::uint64_t compute_cycles = 0;   // all tiles, one image
  std::uint64_t memory_bytes = 0;     // sequential DRAM bytes, one image
  std::uint64_t pipelined_cycles = 0; // sum of per-tile max(compute, memory)
  std::uint64_t macs = 0;
  std::uint64_t buffer_bytes = 0;     // on-chip streams, one image
};

inline TileModel model_image(const LayerSpec& spec, const TileSpec& tile,
                             const AccelConfig& cfg, std::uint64_t rf_window) {
  const std::uint64_t k = spec.k_c, s = spec.stride_s, n = spec.n_in,
                      m = spec.m_out;
  const std::uint64_t ho = spec.h_out(), wo = spec.w_out();
  const std::uint64_t k2 = k * k;
  const std::int64_t pad = static_cast<std::int64_t>(spec.padding);
  const std::int64_t margin =
      floor_div(static_cast<std::int64_t>(rf_window) -
                    static_cast<std::int64_t>(k),
                2);

  // Input-channel chunks streamed through one systolic pass.
  std::vector<std::uint64_t> chunks;
  for (std::uint64_t done = 0; done < n; done += tile.t_n) {
    chunks.push_back(std::min<std::uint64_t>(tile.t_n, n - done));
  }
  std::uint64_t chunk_pass_cycles = 0;
  for (std::uint64_t c : chunks) {
    chunk_pass_cycles += systolic_pass_cycles(c, k, cfg.pe_rows, cfg.pe_cols);
  }

  // Output-channel row passes for the dynamic convolution.
  std::uint64_t conv_row_passes = 0;
  for (std::uint64_t done = 0; done < m; done += tile.t_m) {
    conv_row_passes +=
        ceil_div(std::min<std::uint64_t>(tile.t_m, m - done), cfg.pe_rows);
  }
  const std::uint64_t off_row_passes = ceil_div(2 * k2, cfg.pe_rows);

  TileModel out;
  for (std::uint64_t th0 = 0; th0 < ho; th0 += tile.t_h) {
    const std::uint64_t nh = std::min<std::uint64_t>(tile.t_h, ho - th0);
    for (std::uint64_t tw0 = 0; tw0 < wo; tw0 += tile.t_w) {
      const std::uint64_t nw = std::min<std::uint64_t>(tile.t_w, wo - tw0);
      const std::uint64_t npos = nh * nw;
      const std::uint64_t pos_groups = ceil_div(npos, cfg.pe_cols);

      // Compute: offset conv, interpolation, dynamic conv, back to back.
      const std::uint64_t c_off = off_row_passes * pos_groups * chunk_pass_cycles;
      const std::uint64_t interp_ops = 4 * n * k2 * npos;
      const std::uint64_t c_interp =
          ceil_div(interp_ops, cfg.pe_rows * cfg.pe_cols);
      const std::uint64_t c_conv = conv_row_passes * pos_groups * chunk_pass_cycles;
      const std::uint64_t compute = c_off + c_interp + c_conv;

      // DRAM traffic: the input window per output row (clamped to the
      // image; padding is synthesized, not fetched), offsets and
      // interpolated inputs staged through DRAM once, outputs stored once.
      const std::int64_t win_c0 =
          static_cast<std::int64_t>(tw0 * s) - pad - margin;
      const std::int64_t win_c1 =
          win_c0 + static_cast<std::int64_t>(s * nw + rf_window - s);
      const std::uint64_t cols_in_image =
          clamped_span(win_c0, win_c1, static_cast<std::int64_t>(spec.w_in));
      std::uint64_t x_elems = 0;
      for (std::uint64_t oy = th0; oy < th0 + nh; ++oy) {
        const std::int64_t win_r0 =
            static_cast<std::int64_t>(oy * s) - pad - margin;
        const std::int64_t win_r1 =
            win_r0 + static_cast<std::int64_t>(rf_window);
        x_elems += clamped_span(win_r0, win_r1,
                                static_cast<std::int64_t>(spec.h_in)) *
                   cols_in_image;
      }
      const std::uint64_t x_bytes = x_elems * n * kElemBytes;
      const std::uint64_t offset_bytes = npos * 2 * k2 * kElemBytes;
      const std::uint64_t interp_bytes = npos * n * k2 * kElemBytes;
      const std::uint64_t y_bytes = npos * m * kElemBytes;
      const std::uint64_t bytes =
          x_bytes + offset_bytes + 2 * interp_bytes + y_bytes;
      const std::uint64_t mem = cycles_for_bytes(bytes, cfg);

      out.compute_cycles += compute;
      out.memory_bytes += bytes;
      out.pipelined_cycles += std::max(compute, mem);
      out.macs += 2 * k2 * n * k2 * npos + interp_ops + m * n * k2 * npos;

      // On-chip buffer streams: systolic operand/result edges, the
      // interpolation unit's reads and writes, and DRAM staging.
      const std::uint64_t depth_elems = n * k2;
      const std::uint64_t pass_stream =
          (cfg.pe_rows + cfg.pe_cols) * depth_elems +
          cfg.pe_rows * cfg.pe_cols;
      out.buffer_bytes +=
          (off_row_passes + conv_row_passes) * pos_groups * pass_stream *
              kElemBytes +
          5 * (n * k2 * npos) * kElemBytes + offset_bytes + bytes;
    }
  }
  return out;
}

inline std::uint64_t weight_bytes(const LayerSpec& spec) {
  const std::uint64_t k2 = spec.k_c * spec.k_c;
  return (2 * k2 + spec.m_out) * spec.n_in * k2 * kElemBytes;
}

inline void finalize(SimReport& r, const AccelConfig& cfg) {
  r.energy = energy_report(r, cfg);
  r.wall_time_s = static_cast<double>(r.cycles_total) / cfg.clock_hz;
}

}  // namespace detail

/// Receptive field implied by a set of recorded offset fields.
inline std::uint64_t trace_receptive_field(
    const LayerSpec& spec, const std::vector<OffsetField>& fields) {
  if (fields.empty()) {
    throw ValidationError("trace_receptive_field: no offset fields");
  }
  return receptive_field(spec.k_c,
                         offset_max(std::span<const OffsetField>(fields)));
}

/// Proposed accelerator: RF-sized input windows, no irregular accesses, no
/// stalls. Throws CapacityError if the configured buffers cannot hold the
/// window the trace requires.
inline SimReport simulate_proposed(const LayerSpec& spec, const TileSpec& tile,
                                   const AccelConfig& cfg,
                                   const std::vector<OffsetField>& fields) {
  validate_layer(spec);
  validate_tile(tile, spec);
  validate_config(cfg);
  const std::uint64_t rf = trace_receptive_field(spec, fields);
  const std::uint64_t in_need =
      input_buffer_size(rf, spec.stride_s, tile.t_w, tile.t_n) *
      detail::kElemBytes;
  if (in_need > cfg.input_buffer_bytes) {
    throw CapacityError("simulate_proposed: input buffer needs " +
                        std::to_string(in_need) + " bytes for RF " +
                        std::to_string(rf) + ", configured " +
                        std::to_string(cfg.input_buffer_bytes));
  }
  const std::uint64_t out_need =
      output_buffer_size(tile.t_w, tile.t_n, spec.k_c) * detail::kElemBytes;
  if (out_need > cfg.output_buffer_bytes) {
    throw CapacityError("simulate_proposed: output buffer needs " +
                        std::to_string(out_need) + " bytes, configured " +
                        std::to_string(cfg.output_buffer_bytes));
  }

  const detail::TileModel per_image = detail::model_image(spec, tile, cfg, rf);
  const std::uint64_t images = fields.size();
  const std::uint64_t w_bytes = detail::weight_bytes(spec);

  SimReport r;
  r.cycles_total =
      detail::cycles_for_bytes(w_bytes, cfg) + images * per_image.pipelined_cycles;
  r.cycles_stall = 0;
  r.macs = images * per_image.macs;
  r.dram_bytes_seq = w_bytes + images * per_image.memory_bytes;
  r.dram_bytes_irregular = 0;
  r.buffer_bytes_accessed = w_bytes + images * per_image.buffer_bytes;
  detail::finalize(r, cfg);
  return r;
}

/// Conventional accelerator: only the regular kernel window is buffered;
/// every windowed-read miss costs one irregular burst per input channel and
/// serializes with compute.
inline SimReport simulate_baseline(const LayerSpec& spec, const TileSpec& tile,
                                   const AccelConfig& cfg,
                                   const std::vector<OffsetField>& fields) {
  validate_layer(spec);
  validate_tile(tile, spec);
  validate_config(cfg);
  if (fields.empty()) {
    throw ValidationError("simulate_baseline: no offset fields");
  }

  std::vector<std::uint64_t> misses(fields.size(), 0);
  parallel_for(fields.size(), [&](std::size_t i) {
    const ReadCounts rc =
        count_window_reads(fields[i], spec, tile.t_w, spec.k_c);
    misses[i] = (rc.total - rc.hits) * spec.n_in;
  });
  std::uint64_t miss_count = 0;
  for (std::uint64_t m : misses) miss_count += m;

  const detail::TileModel per_image =
      detail::model_image(spec, tile, cfg, spec.k_c);
  const std::uint64_t images = fields.size();
  const std::uint64_t w_bytes = detail::weight_bytes(spec);

  SimReport r;
  r.cycles_stall = miss_count * cfg.row_miss_penalty_cycles;
  r.cycles_total = detail::cycles_for_bytes(w_bytes, cfg) +
                   images * per_image.pipelined_cycles + r.cycles_stall;
  r.macs = images * per_image.macs;
  r.dram_bytes_seq = w_bytes + images * per_image.memory_bytes;
  r.dram_bytes_irregular = miss_count * cfg.burst_bytes;
  r.buffer_bytes_accessed =
      w_bytes + images * per_image.buffer_bytes + r.dram_bytes_irregular;
  detail::finalize(r, cfg);
  return r;
}

struct CompareResult {
  double speedup = 0.0;       // baseline wall time / proposed wall time
  double energy_ratio = 0.0;  // baseline energy / proposed energy
  SimReport proposed;
  SimReport baseline;
};

/// Runs both accelerators on the same workload and reports the ratios.
inline CompareResult compare(const LayerSpec& spec, const TileSpec& tile,
                             const AccelConfig& cfg,
                             const std::vector<OffsetField>& fields) {
  CompareResult c;
  c.proposed = simulate_proposed(spec, tile, cfg, fields);
  c.baseline = simulate_baseline(spec, tile, cfg, fields);
  c.speedup = c.baseline.wall_time_s / c.proposed.wall_time_s;
  c.energy_ratio = c.baseline.energy.total() / c.proposed.energy.total();
  return c;
}

/// Collects the offset fields recorded for one layer, in trace order.
inline std::vector<OffsetField> layer_fields(const OffsetTrace& trace,
                                             std::uint32_t layer_id) {
  std::vector<OffsetField> fields;
  for (const TraceEntry& e : trace.entries) {
    if (e.layer_id == layer_id) fields.push_back(e.field);
  }
  return fields;
}

}  // namespace dclsim
