#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dclsim/accel_sim.hpp"
#include "dclsim/core.hpp"

// net.json / arch.json loading. Parsing is strict: unknown keys are
// rejected so typos fail loudly instead of silently using a default.

namespace dclsim {

enum class LayerRole { dcl, standard };

struct NetworkLayer {
  LayerRole role = LayerRole::dcl;
  LayerSpec spec;
};

struct NetworkConfig {
  std::vector<NetworkLayer> layers;
  std::optional<double> lambda_preset;

  std::vector<LayerSpec> dcl_layers() const {
    std::vector<LayerSpec> out;
    for (const NetworkLayer& l : layers) {
      if (l.role == LayerRole::dcl) out.push_back(l.spec);
    }
    return out;
  }
};

struct ArchConfig {
  AccelConfig accel;
  std::optional<TileSpec> tile;
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown_keys(const json& obj,
                                const std::set<std::string>& allowed,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) {
      throw ValidationError(where + ": unknown key \"" + item.key() + "\"");
    }
  }
}

inline json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ValidationError("cannot open config file: " + path);
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline std::uint64_t get_u64(const json& obj, const std::string& key,
                             const std::string& where) {
  if (!obj.contains(key)) {
    throw ValidationError(where + ": missing key \"" + key + "\"");
  }
  const json& v = obj.at(key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() &&
                                   v.get<std::int64_t>() >= 0)) {
    throw ValidationError(where + ": key \"" + key +
                          "\" must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

inline double get_double_or(const json& obj, const std::string& key,
                             const std::string& where, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) {
    throw ValidationError(where + ": key \"" + key + "\" must be numeric");
  }
  return v.get<double>();
}

inline std::uint64_t get_u64_or(const json& obj, const std::string& key,
                                const std::string& where,
                                std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  return get_u64(obj, key, where);
}

inline void check_version(const json& obj, const std::string& where) {
  if (get_u64(obj, "version", where) != 1) {
    throw ValidationError(where + ": unsupported config version");
  }
}

}  // namespace detail

inline NetworkConfig parse_network(const nlohmann::json& root,
                                   const std::string& where) {
  using detail::get_u64;
  if (!root.is_object()) {
    throw ValidationError(where + ": top level must be an object");
  }
  detail::reject_unknown_keys(root, {"version", "layers", "lambda_preset"},
                              where);
  detail::check_version(root, where);
  if (!root.contains("layers") || !root.at("layers").is_array() ||
      root.at("layers").empty()) {
    throw ValidationError(where + ": \"layers\" must be a non-empty array");
  }
  NetworkConfig net;
  std::size_t idx = 0;
  for (const auto& jl : root.at("layers")) {
    const std::string lw = where + ": layers[" + std::to_string(idx) + "]";
    if (!jl.is_object()) {
      throw ValidationError(lw + " must be an object");
    }
    detail::reject_unknown_keys(
        jl, {"role", "k_c", "stride", "n_in", "m_out", "h_in", "w_in",
             "padding"},
        lw);
    NetworkLayer layer;
    if (jl.contains("role")) {
      const std::string role = jl.at("role").get<std::string>();
      if (role == "dcl") {
        layer.role = LayerRole::dcl;
      } else if (role == "standard") {
        layer.role = LayerRole::standard;
      } else {
        throw ValidationError(lw + ": role must be \"dcl\" or \"standard\"");
      }
    }
    layer.spec.k_c = get_u64(jl, "k_c", lw);
    layer.spec.stride_s = detail::get_u64_or(jl, "stride", lw, 1);
    layer.spec.n_in = get_u64(jl, "n_in", lw);
    layer.spec.m_out = get_u64(jl, "m_out", lw);
    layer.spec.h_in = get_u64(jl, "h_in", lw);
    layer.spec.w_in = get_u64(jl, "w_in", lw);
    layer.spec.padding = detail::get_u64_or(jl, "padding", lw, 0);
    try {
      validate_layer(layer.spec);
    } catch (const ValidationError& e) {
      throw ValidationError(lw + ": " + e.what());
    }
    net.layers.push_back(layer);
    ++idx;
  }
  if (root.contains("lambda_preset")) {
    const double lam = root.at("lambda_preset").get<double>();
    if (!(lam >= 0.0 && lam < 1.0)) {
      throw ValidationError(where + ": lambda_preset must be in [0, 1)");
    }
    net.lambda_preset = lam;
  }
  if (net.dcl_layers().empty()) {
    throw ValidationError(where + ": network has no dcl layers");
  }
  return net;
}

inline NetworkConfig load_network(const std::string& path) {
  return parse_network(detail::parse_file(path), path);
}

inline ArchConfig parse_arch(const nlohmann::json& root,
                             const std::string& where) {
  if (!root.is_object()) {
    throw ValidationError(where + ": top level must be an object");
  }
  detail::reject_unknown_keys(
      root,
      {"version", "pe_rows", "pe_cols", "clock_hz", "dram_bw_bytes_per_s",
       "burst_bytes", "row_miss_penalty_cycles", "e_dram_seq_nj_per_byte",
       "irregular_energy_factor", "e_mac_nj", "e_buf_nj_per_byte",
       "input_buffer_bytes", "output_buffer_bytes", "tile"},
      where);
  detail::check_version(root, where);
  ArchConfig arch;
  AccelConfig& a = arch.accel;
  a.pe_rows = detail::get_u64_or(root, "pe_rows", where, a.pe_rows);
  a.pe_cols = detail::get_u64_or(root, "pe_cols", where, a.pe_cols);
  a.clock_hz = detail::get_double_or(root, "clock_hz", where, a.clock_hz);
  a.dram_bw_bytes_per_s = detail::get_double_or(root, "dram_bw_bytes_per_s",
                                                 where, a.dram_bw_bytes_per_s);
  a.burst_bytes = detail::get_u64_or(root, "burst_bytes", where, a.burst_bytes);
  a.row_miss_penalty_cycles = detail::get_u64_or(
      root, "row_miss_penalty_cycles", where, a.row_miss_penalty_cycles);
  a.e_dram_seq_nj_per_byte = detail::get_double_or(
      root, "e_dram_seq_nj_per_byte", where, a.e_dram_seq_nj_per_byte);
  a.irregular_energy_factor = detail::get_double_or(
      root, "irregular_energy_factor", where, a.irregular_energy_factor);
  a.e_mac_nj = detail::get_double_or(root, "e_mac_nj", where, a.e_mac_nj);
  a.e_buf_nj_per_byte = detail::get_double_or(root, "e_buf_nj_per_byte",
                                               where, a.e_buf_nj_per_byte);
  a.input_buffer_bytes = detail::get_u64_or(root, "input_buffer_bytes", where,
                                            a.input_buffer_bytes);
  a.output_buffer_bytes = detail::get_u64_or(root, "output_buffer_bytes",
                                             where, a.output_buffer_bytes);
  validate_config(a);
  if (root.contains("tile")) {
    const auto& jt = root.at("tile");
    const std::string tw = where + ": tile";
    if (!jt.is_object()) {
      throw ValidationError(tw + " must be an object");
    }
    detail::reject_unknown_keys(jt, {"t_n", "t_m", "t_h", "t_w"}, tw);
    TileSpec t;
    t.t_n = detail::get_u64(jt, "t_n", tw);
    t.t_m = detail::get_u64(jt, "t_m", tw);
    t.t_h = detail::get_u64(jt, "t_h", tw);
    t.t_w = detail::get_u64(jt, "t_w", tw);
    arch.tile = t;
  }
  return arch;
}

inline ArchConfig load_arch(const std::string& path) {
  return parse_arch(detail::parse_file(path), path);
}

/// Default (512, 64, 1, 8) tile preset clamped to a layer's bounds.
inline TileSpec default_tile_for(const LayerSpec& spec,
                                 const std::optional<TileSpec>& preset) {
  const TileSpec base = preset.value_or(TileSpec{512, 64, 1, 8});
  TileSpec t;
  t.t_n = std::min<std::size_t>(base.t_n, spec.n_in);
  t.t_m = std::min<std::size_t>(base.t_m, spec.m_out);
  t.t_h = std::min<std::size_t>(base.t_h, spec.h_out());
  t.t_w = std::min<std::size_t>(base.t_w, spec.w_out());
  return t;
}

}  // namespace dclsim
