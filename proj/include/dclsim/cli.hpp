#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dclsim/accel_sim.hpp"
#include "dclsim/config_io.hpp"
#include "dclsim/core.hpp"
#include "dclsim/deform_conv.hpp"
#include "dclsim/rf_analysis.hpp"
#include "dclsim/tiling.hpp"
#include "dclsim/trace_io.hpp"

// Command-line front end. Every command is deterministic: fixed seeds and
// inputs produce byte-identical output files. Exit codes: 0 success,
// 1 malformed input (message names file and field), 2 capacity/feasibility.

namespace dclsim {
namespace cli {

inline std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw ValidationError("cannot open output file: " + path);
  }
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) {
    throw ValidationError("failed writing output file: " + path);
  }
}

inline std::vector<std::uint64_t> parse_u64_list(const std::string& s,
                                                 const std::string& what) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const std::uint64_t v = std::stoull(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError(what + ": bad list element \"" + item + "\"");
    }
  }
  if (out.empty()) {
    throw ValidationError(what + ": empty list");
  }
  return out;
}

inline TileSpec parse_tile(const std::string& s) {
  const auto v = parse_u64_list(s, "--tile");
  if (v.size() != 4 || v[0] < 1 || v[1] < 1 || v[2] < 1 || v[3] < 1) {
    throw ValidationError("--tile: expected t_n,t_m,t_h,t_w, all >= 1");
  }
  return TileSpec{v[0], v[1], v[2], v[3]};
}

// Replaces a trace's header-reconstructed layer shapes with the real ones
// from the network config; dims must agree.
inline void bind_trace_to_network(OffsetTrace& trace,
                                  const NetworkConfig& net,
                                  const std::string& trace_path,
                                  const std::string& net_path) {
  const std::vector<LayerSpec> dcls = net.dcl_layers();
  if (dcls.size() != trace.layer_specs.size()) {
    throw ValidationError(trace_path + ": has " +
                          std::to_string(trace.layer_specs.size()) +
                          " layers but " + net_path + " declares " +
                          std::to_string(dcls.size()) + " dcl layers");
  }
  for (std::size_t i = 0; i < dcls.size(); ++i) {
    const LayerSpec& t = trace.layer_specs[i];
    const LayerSpec& n = dcls[i];
    if (t.k_c != n.k_c || t.stride_s != n.stride_s ||
        t.h_out() != n.h_out() || t.w_out() != n.w_out()) {
      throw ValidationError(trace_path + ": layer " + std::to_string(i) +
                            " dims do not match " + net_path);
    }
  }
  trace.layer_specs = dcls;
  validate_trace(trace);
}

inline nlohmann::json report_to_json(const SimReport& r) {
  nlohmann::json j;
  j["cycles_total"] = r.cycles_total;
  j["cycles_stall"] = r.cycles_stall;
  j["macs"] = r.macs;
  j["dram_bytes_seq"] = r.dram_bytes_seq;
  j["dram_bytes_irregular"] = r.dram_bytes_irregular;
  j["buffer_bytes_accessed"] = r.buffer_bytes_accessed;
  j["energy_nj"] = {{"dram_seq", r.energy.dram_seq},
                    {"dram_irregular", r.energy.dram_irregular},
                    {"mac", r.energy.mac},
                    {"buffer", r.energy.buffer},
                    {"total", r.energy.total()}};
  j["wall_time_s"] = r.wall_time_s;
  return j;
}

// check-conv: self-test of the functional reference against a from-scratch
// per-element oracle that calls nothing but its own loops.
inline int run_check_conv(std::uint64_t seed, std::size_t instances,
                          std::ostream& out, std::ostream& err) {
  detail::OffsetRng rng(seed);
  const auto rnd = [&](double lo, double hi) {
    return static_cast<float>(lo + (hi - lo) * rng.unit());
  };
  for (std::size_t inst = 0; inst < instances; ++inst) {
    LayerSpec spec;
    spec.k_c = 3;
    spec.stride_s = 1 + static_cast<std::size_t>(rng.unit() * 2.0);
    spec.n_in = 1 + static_cast<std::size_t>(rng.unit() * 4.0);
    spec.m_out = 1 + static_cast<std::size_t>(rng.unit() * 3.0);
    spec.h_in = 5 + static_cast<std::size_t>(rng.unit() * 4.0);
    spec.w_in = 5 + static_cast<std::size_t>(rng.unit() * 4.0);
    spec.padding = 1;
    validate_layer(spec);

    FeatureMap x(spec.n_in, spec.h_in, spec.w_in);
    for (float& v : x.data) v = rnd(-0.5, 0.5);
    WeightTensor w_o(2 * spec.k_c * spec.k_c, spec.n_in, spec.k_c);
    for (float& v : w_o.data) v = rnd(-0.25, 0.25);
    WeightTensor w_d(spec.m_out, spec.n_in, spec.k_c);
    for (float& v : w_d.data) v = rnd(-0.5, 0.5);

    const DeformConvResult got = deformable_conv(x, w_o, w_d, spec);

    // per-element re-derivation: only bilinear_sample is shared
    const std::size_t k = spec.k_c, ho = spec.h_out(), wo = spec.w_out();
    double worst = 0.0;
    for (std::size_t m = 0; m < spec.m_out; ++m) {
      for (std::size_t oy = 0; oy < ho; ++oy) {
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < spec.n_in; ++c) {
            for (std::size_t tap = 0; tap < k * k; ++tap) {
              const double gy =
                  static_cast<double>(oy * spec.stride_s + tap / k) -
                  static_cast<double>(spec.padding);
              const double gx =
                  static_cast<double>(ox * spec.stride_s + tap % k) -
                  static_cast<double>(spec.padding);
              const double py = gy + got.offsets.dy(oy, ox, tap);
              const double px = gx + got.offsets.dx(oy, ox, tap);
              acc += static_cast<double>(bilinear_sample(x, c, py, px)) *
                     w_d.at(m, c, tap / k, tap % k);
            }
          }
          worst = std::max(worst, std::abs(acc - static_cast<double>(
                                                     got.y.at(m, oy, ox))));
        }
      }
    }
    if (worst > 1e-6) {
      err << "check-conv: instance " << inst << " max abs error " << worst
          << "\n";
      return 1;
    }

    // zero offsets must reduce to the standard convolution
    WeightTensor w_zero(2 * spec.k_c * spec.k_c, spec.n_in, spec.k_c);
    const DeformConvResult plain = deformable_conv(x, w_zero, w_d, spec);
    const FeatureMap ref = standard_conv(x, w_d, spec);
    for (std::size_t i = 0; i < ref.data.size(); ++i) {
      const double diff = std::abs(plain.y.data[i] - ref.data[i]);
      const double scale = std::max(1.0, std::abs(static_cast<double>(ref.data[i])));
      if (diff / scale > 1e-6) {
        err << "check-conv: zero-offset mismatch at element " << i << "\n";
        return 1;
      }
    }
  }
  out << "check-conv: " << instances << " instances ok\n";
  return 0;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out,
                    std::ostream& err) {
  CLI::App app{"Deformable-convolution accelerator analysis toolkit"};
  app.name("dclsim");
  app.require_subcommand(1);

  // check-conv
  auto* c_check = app.add_subcommand(
      "check-conv", "Self-test the DCL reference against a per-element oracle");
  std::uint64_t check_seed = 1;
  std::size_t check_instances = 50;
  c_check->add_option("--seed", check_seed, "RNG seed");
  c_check->add_option("--instances", check_instances, "Random instances");

  // gen-trace
  auto* c_gen = app.add_subcommand(
      "gen-trace", "Generate a synthetic .dclo offset trace for a network");
  std::string gen_net, gen_out, gen_dist = "zero";
  double gen_max_abs = 0.0, gen_sigma = 0.0, gen_clip = 0.0;
  std::uint64_t gen_seed = 0;
  std::uint32_t gen_images = 1;
  c_gen->add_option("--net", gen_net, "net.json")->required();
  c_gen->add_option("--out", gen_out, "output .dclo path")->required();
  c_gen->add_option("--dist", gen_dist, "zero | uniform | gaussian");
  c_gen->add_option("--max-abs", gen_max_abs, "uniform support half-width");
  c_gen->add_option("--sigma", gen_sigma, "gaussian sigma");
  c_gen->add_option("--clip", gen_clip, "gaussian hard clip");
  c_gen->add_option("--seed", gen_seed, "RNG seed");
  c_gen->add_option("--images", gen_images, "images per layer");

  // offset-hist
  auto* c_hist = app.add_subcommand(
      "offset-hist", "Histogram of per-image maximum offsets.\n"
                     "CSV columns: bin_lo,bin_hi,count");
  std::string hist_trace, hist_out;
  double hist_bin = 0.5;
  c_hist->add_option("--trace", hist_trace, ".dclo trace")->required();
  c_hist->add_option("--bin-width", hist_bin, "bin width in pixels");
  c_hist->add_option("--out", hist_out, "output CSV path")->required();

  // buffer-curve
  auto* c_curve = app.add_subcommand(
      "buffer-curve", "Input-buffer efficiency at each capacity.\n"
                      "CSV columns: capacity_bytes,rf_cap,efficiency");
  std::string curve_trace, curve_tile = "512,64,1,8", curve_caps, curve_out;
  std::uint64_t curve_bpe = 4;
  c_curve->add_option("--trace", curve_trace, ".dclo trace")->required();
  c_curve->add_option("--tile", curve_tile, "t_n,t_m,t_h,t_w");
  c_curve->add_option("--capacities", curve_caps,
                      "ascending byte capacities, comma separated")
      ->required();
  c_curve->add_option("--bytes-per-elem", curve_bpe, "element size in bytes");
  c_curve->add_option("--out", curve_out, "output CSV path")->required();

  // simulate
  auto* c_sim = app.add_subcommand(
      "simulate", "Run one accelerator model over a trace, JSON report");
  std::string sim_net, sim_arch, sim_trace, sim_mode, sim_out;
  c_sim->add_option("--net", sim_net, "net.json")->required();
  c_sim->add_option("--arch", sim_arch, "arch.json")->required();
  c_sim->add_option("--trace", sim_trace, ".dclo trace")->required();
  c_sim->add_option("--mode", sim_mode, "proposed | baseline")->required();
  c_sim->add_option("--out", sim_out, "output JSON path")->required();

  // compare
  auto* c_cmp = app.add_subcommand(
      "compare",
      "Proposed vs baseline on the same workload.\n"
      "CSV columns: n_in,speedup,energy_ratio,proposed_cycles,"
      "baseline_cycles,baseline_stall_cycles,proposed_energy_nj,"
      "baseline_energy_nj,baseline_irregular_bytes");
  std::string cmp_net, cmp_arch, cmp_trace, cmp_sweep, cmp_out;
  c_cmp->add_option("--net", cmp_net, "net.json")->required();
  c_cmp->add_option("--arch", cmp_arch, "arch.json")->required();
  c_cmp->add_option("--trace", cmp_trace, ".dclo trace")->required();
  c_cmp->add_option("--sweep-n", cmp_sweep,
                    "sweep the first dcl layer's n_in over this list");
  c_cmp->add_option("--out", cmp_out, "output CSV path")->required();

  // tile-search
  auto* c_tile = app.add_subcommand(
      "tile-search",
      "Cross-layer tile selection over the power-of-two grid.\n"
      "CSV columns: t_n,t_m,t_h,t_w,feasible,total_runtime_s,selected");
  std::string tile_net, tile_arch, tile_out;
  std::uint64_t tile_rf = 0;
  c_tile->add_option("--net", tile_net, "net.json")->required();
  c_tile->add_option("--arch", tile_arch, "arch.json")->required();
  c_tile->add_option("--rf", tile_rf, "receptive field to provision for")
      ->required();
  c_tile->add_option("--out", tile_out, "output CSV path")->required();

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("dclsim");
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    return 1;
  }

  if (c_check->parsed()) {
    return run_check_conv(check_seed, check_instances, out, err);
  }

  if (c_gen->parsed()) {
    const NetworkConfig net = load_network(gen_net);
    OffsetDistribution dist;
    if (gen_dist == "zero") {
      dist = OffsetDistribution::zero();
    } else if (gen_dist == "uniform") {
      dist = OffsetDistribution::uniform(gen_max_abs);
    } else if (gen_dist == "gaussian") {
      dist = OffsetDistribution::gaussian(gen_sigma, gen_clip);
    } else {
      throw ValidationError("--dist: unknown distribution \"" + gen_dist +
                            "\"");
    }
    const OffsetTrace trace =
        gen_trace(net.dcl_layers(), dist, gen_seed, gen_images);
    write_offset_trace(gen_out, trace);
    out << "gen-trace: wrote " << trace.entries.size() << " fields to "
        << gen_out << "\n";
    return 0;
  }

  if (c_hist->parsed()) {
    const OffsetTrace trace = load_offset_trace(hist_trace);
    const OffsetHistogram h = offset_histogram(trace, hist_bin);
    std::string csv = "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      csv += fmt(h.bin_lo(i)) + "," + fmt(h.bin_hi(i)) + "," +
             std::to_string(h.counts[i]) + "\n";
    }
    write_text_file(hist_out, csv);
    out << "offset-hist: " << h.total << " images into " << h.counts.size()
        << " bins -> " << hist_out << "\n";
    return 0;
  }

  if (c_curve->parsed()) {
    const OffsetTrace trace = load_offset_trace(curve_trace);
    const TileSpec tile = parse_tile(curve_tile);
    const std::vector<std::uint64_t> caps =
        parse_u64_list(curve_caps, "--capacities");
    const auto curve = efficiency_curve(trace, tile, caps, curve_bpe);
    std::string csv = "capacity_bytes,rf_cap,efficiency\n";
    for (const auto& [cap, eff] : curve) {
      const std::uint64_t rf_cap = rf_from_capacity(
          cap, trace.layer_specs[0].stride_s, tile.t_w, tile.t_n, curve_bpe);
      csv += std::to_string(cap) + "," + std::to_string(rf_cap) + "," +
             fmt(eff) + "\n";
    }
    write_text_file(curve_out, csv);
    out << "buffer-curve: " << curve.size() << " points -> " << curve_out
        << "\n";
    return 0;
  }

  if (c_sim->parsed()) {
    if (sim_mode != "proposed" && sim_mode != "baseline") {
      throw ValidationError("--mode: must be \"proposed\" or \"baseline\"");
    }
    const NetworkConfig net = load_network(sim_net);
    const ArchConfig arch = load_arch(sim_arch);
    OffsetTrace trace = load_offset_trace(sim_trace);
    bind_trace_to_network(trace, net, sim_trace, sim_net);

    nlohmann::json j;
    j["version"] = 1;
    j["mode"] = sim_mode;
    j["layers"] = nlohmann::json::array();
    SimReport total;
    for (std::uint32_t l = 0; l < trace.layer_specs.size(); ++l) {
      const LayerSpec& spec = trace.layer_specs[l];
      const TileSpec tile = default_tile_for(spec, arch.tile);
      const std::vector<OffsetField> fields = layer_fields(trace, l);
      const SimReport r =
          sim_mode == "proposed"
              ? simulate_proposed(spec, tile, arch.accel, fields)
              : simulate_baseline(spec, tile, arch.accel, fields);
      nlohmann::json jl = report_to_json(r);
      jl["layer_id"] = l;
      j["layers"].push_back(jl);
      total.cycles_total += r.cycles_total;
      total.cycles_stall += r.cycles_stall;
      total.macs += r.macs;
      total.dram_bytes_seq += r.dram_bytes_seq;
      total.dram_bytes_irregular += r.dram_bytes_irregular;
      total.buffer_bytes_accessed += r.buffer_bytes_accessed;
    }
    total.energy = energy_report(total, arch.accel);
    total.wall_time_s =
        static_cast<double>(total.cycles_total) / arch.accel.clock_hz;
    j["total"] = report_to_json(total);
    write_text_file(sim_out, j.dump(2) + "\n");
    out << "simulate: " << sim_mode << " -> " << sim_out << "\n";
    return 0;
  }

  if (c_cmp->parsed()) {
    const NetworkConfig net = load_network(cmp_net);
    const ArchConfig arch = load_arch(cmp_arch);
    OffsetTrace trace = load_offset_trace(cmp_trace);
    bind_trace_to_network(trace, net, cmp_trace, cmp_net);

    std::string csv =
        "n_in,speedup,energy_ratio,proposed_cycles,baseline_cycles,"
        "baseline_stall_cycles,proposed_energy_nj,baseline_energy_nj,"
        "baseline_irregular_bytes\n";
    const auto emit = [&](const LayerSpec& spec, std::uint32_t layer_id) {
      const TileSpec tile = default_tile_for(spec, arch.tile);
      const CompareResult cr =
          compare(spec, tile, arch.accel, layer_fields(trace, layer_id));
      csv += std::to_string(spec.n_in) + "," + fmt(cr.speedup) + "," +
             fmt(cr.energy_ratio) + "," +
             std::to_string(cr.proposed.cycles_total) + "," +
             std::to_string(cr.baseline.cycles_total) + "," +
             std::to_string(cr.baseline.cycles_stall) + "," +
             fmt(cr.proposed.energy.total()) + "," +
             fmt(cr.baseline.energy.total()) + "," +
             std::to_string(cr.baseline.dram_bytes_irregular) + "\n";
    };
    if (!cmp_sweep.empty()) {
      LayerSpec base = trace.layer_specs[0];
      for (std::uint64_t n : parse_u64_list(cmp_sweep, "--sweep-n")) {
        LayerSpec spec = base;
        spec.n_in = n;
        validate_layer(spec);
        emit(spec, 0);
      }
    } else {
      for (std::uint32_t l = 0; l < trace.layer_specs.size(); ++l) {
        emit(trace.layer_specs[l], l);
      }
    }
    write_text_file(cmp_out, csv);
    out << "compare: -> " << cmp_out << "\n";
    return 0;
  }

  if (c_tile->parsed()) {
    const NetworkConfig net = load_network(tile_net);
    const ArchConfig arch = load_arch(tile_arch);
    const std::vector<LayerSpec> layers = net.dcl_layers();
    if (tile_rf < 1) {
      throw ValidationError("--rf: must be >= 1");
    }
    const std::vector<std::uint64_t> rfs(layers.size(), tile_rf);

    // candidate grid bounded by the tightest dimension over all layers
    std::uint64_t nb = layers[0].n_in, mb = layers[0].m_out,
                  hb = layers[0].h_out(), wb = layers[0].w_out();
    for (const LayerSpec& l : layers) {
      nb = std::min<std::uint64_t>(nb, l.n_in);
      mb = std::min<std::uint64_t>(mb, l.m_out);
      hb = std::min<std::uint64_t>(hb, l.h_out());
      wb = std::min<std::uint64_t>(wb, l.w_out());
    }
    const std::vector<TileSpec> grid = tile_grid_from_bounds(nb, mb, hb, wb);
    const CrossTilingChoice choice =
        select_tiling_cross(layers, arch.accel, rfs, grid);

    std::string csv = "t_n,t_m,t_h,t_w,feasible,total_runtime_s,selected\n";
    for (const TileSpec& t : grid) {
      bool feasible = true;
      double runtime = 0.0;
      for (std::size_t i = 0; i < layers.size() && feasible; ++i) {
        if (t.t_n > layers[i].n_in || t.t_m > layers[i].m_out ||
            t.t_h > layers[i].h_out() || t.t_w > layers[i].w_out() ||
            !tile_fits_buffers(layers[i], t, arch.accel, rfs[i])) {
          feasible = false;
          break;
        }
        runtime +=
            2.0 * static_cast<double>(mac_count(layers[i]).conv_stage) /
            attainable(ctc_ratio(layers[i], t), arch.accel)
                .attainable_ops_per_s;
      }
      const bool selected =
          feasible && t.t_n == choice.tile.t_n && t.t_m == choice.tile.t_m &&
          t.t_h == choice.tile.t_h && t.t_w == choice.tile.t_w;
      csv += std::to_string(t.t_n) + "," + std::to_string(t.t_m) + "," +
             std::to_string(t.t_h) + "," + std::to_string(t.t_w) + "," +
             (feasible ? "1" : "0") + "," +
             (feasible ? fmt(runtime) : std::string("")) + "," +
             (selected ? "1" : "0") + "\n";
    }
    write_text_file(tile_out, csv);
    out << "tile-search: selected " << choice.tile.t_n << ","
        << choice.tile.t_m << "," << choice.tile.t_h << ","
        << choice.tile.t_w << " -> " << tile_out << "\n";
    return 0;
  }

  err << app.help();
  return 1;
}

}  // namespace cli

/// CLI entry point; returns the process exit code.
inline int run_command(const std::vector<std::string>& args, std::ostream& out,
                       std::ostream& err) {
  try {
    return cli::dispatch(args, out, err);
  } catch (const CapacityError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dclsim
