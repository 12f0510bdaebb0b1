#include "dclsim/rf_analysis.hpp"

#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace dclsim;

namespace {

LayerSpec trace_layer(std::size_t hw, std::size_t k = 3, std::size_t s = 1,
                      std::size_t n = 4) {
  LayerSpec spec;
  spec.k_c = k;
  spec.stride_s = s;
  spec.n_in = n;
  spec.m_out = 1;
  spec.h_in = spec.w_in = hw;
  spec.padding = (k - 1) / 2;
  return validate_layer(spec);
}

OffsetTrace make_trace(const LayerSpec& spec,
                       std::vector<OffsetField> fields) {
  OffsetTrace trace;
  trace.layer_specs.push_back(spec);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    TraceEntry e;
    e.layer_id = 0;
    e.image_id = static_cast<std::uint32_t>(i);
    e.field = std::move(fields[i]);
    trace.entries.push_back(std::move(e));
  }
  return trace;
}

}  // namespace

TEST(InputBufferSize, HandValues) {
  EXPECT_EQ(input_buffer_size(7, 1, 8, 512), 50176u);
  EXPECT_EQ(input_buffer_size(7, 1, 8, 512) * 4, 196u * 1024u);
  EXPECT_EQ(input_buffer_size(79, 1, 8, 512), 3478528u);
  // degenerate tile reduces to the bare kernel window
  EXPECT_EQ(input_buffer_size(3, 1, 1, 1), 9u);
  EXPECT_THROW(input_buffer_size(0, 1, 1, 1), ValidationError);
}

TEST(InputBufferSize, ReducesToClassicLineBuffer) {
  testsup::Rng rng(20);
  for (int i = 0; i < 50; ++i) {
    const std::uint64_t k = 1 + 2 * rng.integer(0, 3);
    const std::uint64_t tw = rng.integer(1, 32), tn = rng.integer(1, 64);
    EXPECT_EQ(input_buffer_size(k, 1, tw, tn), k * (tw + k - 1) * tn);
  }
}

TEST(OutputBufferSize, HandValues) {
  EXPECT_EQ(output_buffer_size(8, 512, 3), 73728u);
  EXPECT_EQ(output_buffer_size(1, 1, 1), 2u);
  EXPECT_EQ(output_buffer_size(16, 512, 3), 2 * output_buffer_size(8, 512, 3));
  EXPECT_THROW(output_buffer_size(0, 1, 1), ValidationError);
}

TEST(RfFromCapacity, ExactFitAndBoundary) {
  const std::uint64_t cap7 = input_buffer_size(7, 1, 8, 512) * 4;
  EXPECT_EQ(rf_from_capacity(cap7, 1, 8, 512), 7u);
  EXPECT_EQ(rf_from_capacity(cap7 - 1, 1, 8, 512), 6u);
}

TEST(RfFromCapacity, LargeCapacityLandsNearSeventyNine) {
  const std::uint64_t rf =
      rf_from_capacity(static_cast<std::uint64_t>(13.8e6), 1, 8, 512);
  EXPECT_TRUE(rf == 78 || rf == 79) << "rf = " << rf;
}

TEST(RfFromCapacity, TooSmallThrows) {
  // RF=1 needs 1*(8+1-1)*512*4 bytes
  const std::uint64_t min_cap = input_buffer_size(1, 1, 8, 512) * 4;
  EXPECT_EQ(rf_from_capacity(min_cap, 1, 8, 512), 1u);
  EXPECT_THROW(rf_from_capacity(min_cap - 1, 1, 8, 512), CapacityError);
}

TEST(RfFromCapacity, RoundTripIdentity) {
  for (std::uint64_t rf = 3; rf <= 100; ++rf) {
    const std::uint64_t cap = input_buffer_size(rf, 1, 8, 512) * 4;
    EXPECT_EQ(rf_from_capacity(cap, 1, 8, 512), rf);
  }
  for (std::uint64_t rf = 1; rf <= 50; ++rf) {
    const std::uint64_t cap = input_buffer_size(rf, 2, 4, 16) * 4;
    EXPECT_EQ(rf_from_capacity(cap, 2, 4, 16), rf);
  }
}

TEST(OffsetHistogram, ZeroTraceSingleBin) {
  const LayerSpec spec = trace_layer(4);
  std::vector<OffsetField> fields(5, OffsetField(3, 4, 4));
  const OffsetHistogram h = offset_histogram(make_trace(spec, fields), 0.5);
  ASSERT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.counts[0], 5u);
  EXPECT_EQ(h.total, 5u);
}

TEST(OffsetHistogram, BinPlacement) {
  const LayerSpec spec = trace_layer(4);
  OffsetField f(3, 4, 4);
  f.data[0] = 1.5f;
  f.data[1] = -1.5f;
  const OffsetHistogram h =
      offset_histogram(make_trace(spec, {f}), 1.0);
  ASSERT_EQ(h.counts.size(), 2u);
  EXPECT_EQ(h.counts[0], 0u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.bin_lo(1), 1.0);
  EXPECT_EQ(h.bin_hi(1), 2.0);
}

TEST(OffsetHistogram, MatchesTwoPassOracle) {
  testsup::Rng rng(21);
  const LayerSpec spec = trace_layer(5);
  std::vector<OffsetField> fields;
  for (int i = 0; i < 12; ++i) {
    fields.push_back(testsup::random_field(rng, 3, 5, 5, 4.0));
  }
  const OffsetTrace trace = make_trace(spec, fields);
  const double bw = 0.5;
  const OffsetHistogram h = offset_histogram(trace, bw);

  // oracle: rescan per image, then bin
  std::vector<std::uint64_t> want;
  std::uint64_t total = 0;
  for (const TraceEntry& e : trace.entries) {
    double m = 0.0;
    for (float v : e.field.data) m = std::max(m, std::abs(static_cast<double>(v)));
    const auto bin = static_cast<std::size_t>(m / bw);
    if (bin >= want.size()) want.resize(bin + 1, 0);
    ++want[bin];
    ++total;
  }
  ASSERT_EQ(h.counts, want);
  EXPECT_EQ(h.total, total);
}

TEST(OffsetHistogram, MassEqualsDistinctImages) {
  testsup::Rng rng(22);
  const LayerSpec spec = trace_layer(4);
  // two layers sharing image ids: one sample per image, not per entry
  OffsetTrace trace;
  trace.layer_specs = {spec, spec};
  for (std::uint32_t img = 0; img < 7; ++img) {
    for (std::uint32_t l = 0; l < 2; ++l) {
      TraceEntry e;
      e.layer_id = l;
      e.image_id = img;
      e.field = testsup::random_field(rng, 3, 4, 4, 2.0);
      trace.entries.push_back(std::move(e));
    }
  }
  EXPECT_EQ(offset_histogram(trace, 0.5).total, 7u);
}

TEST(OffsetHistogram, RejectsBadInputs) {
  const LayerSpec spec = trace_layer(4);
  OffsetTrace empty;
  empty.layer_specs.push_back(spec);
  EXPECT_THROW(offset_histogram(empty, 0.5), ValidationError);
  const OffsetTrace trace = make_trace(spec, {OffsetField(3, 4, 4)});
  EXPECT_THROW(offset_histogram(trace, 0.0), ValidationError);
}

TEST(BufferEfficiency, ZeroOffsetsFitKernelWindow) {
  const LayerSpec spec = trace_layer(8);
  const OffsetTrace trace = make_trace(spec, {OffsetField(3, 8, 8)});
  const TileSpec tile{4, 1, 1, 4};
  const std::uint64_t cap = input_buffer_size(3, 1, tile.t_w, tile.t_n) * 4;
  EXPECT_EQ(buffer_efficiency(trace, tile, cap), 1.0);
}

TEST(BufferEfficiency, TraceRfCapacityAlwaysHits) {
  testsup::Rng rng(23);
  for (int round = 0; round < 10; ++round) {
    const LayerSpec spec = trace_layer(8, 3, 1 + round % 2);
    std::vector<OffsetField> fields;
    for (int i = 0; i < 3; ++i) {
      fields.push_back(testsup::random_field(rng, 3, spec.h_out(),
                                             spec.w_out(), 0.5 + round));
    }
    const OffsetTrace trace = make_trace(spec, std::move(fields));
    double o_max = 0.0;
    for (const TraceEntry& e : trace.entries) {
      o_max = std::max(o_max, offset_max(e.field));
    }
    const TileSpec tile{2, 1, 1, 4};
    const std::uint64_t rf = receptive_field(3, o_max);
    const std::uint64_t cap =
        input_buffer_size(rf, spec.stride_s, tile.t_w, tile.t_n) * 4;
    EXPECT_EQ(buffer_efficiency(trace, tile, cap), 1.0);
  }
}

TEST(BufferEfficiency, KernelWindowMissesWideOffsets) {
  const LayerSpec spec = trace_layer(12);
  OffsetField f(3, 12, 12);
  // center tap displaced by 5 pixels: in-image but outside the 3-row
  // window; the remaining taps stay regular and keep hitting
  for (std::size_t y = 0; y < 12; ++y) {
    for (std::size_t x = 0; x < 12; ++x) f.dy(y, x, 4) = 5.0f;
  }
  const TileSpec tile{4, 1, 1, 4};
  const std::uint64_t cap = input_buffer_size(3, 1, tile.t_w, tile.t_n) * 4;
  const double eff = buffer_efficiency(make_trace(spec, {f}), tile, cap);
  EXPECT_LT(eff, 1.0);
  EXPECT_GT(eff, 0.0);
}

TEST(BufferEfficiency, MatchesCountingOracle) {
  testsup::Rng rng(24);
  for (int round = 0; round < 8; ++round) {
    const LayerSpec spec = trace_layer(9, 3, 1 + round % 2);
    const OffsetField f = testsup::random_field(rng, 3, spec.h_out(),
                                                spec.w_out(), 4.0);
    const TileSpec tile{2, 1, 1, 3};
    for (std::uint64_t rf_cap : {3ull, 5ull, 7ull, 11ull}) {
      const ReadCounts got = count_window_reads(f, spec, tile.t_w, rf_cap);
      const ReadCounts want =
          testsup::count_reads_oracle(f, spec, tile.t_w, rf_cap);
      EXPECT_EQ(got.hits, want.hits) << "rf_cap=" << rf_cap;
      EXPECT_EQ(got.total, want.total) << "rf_cap=" << rf_cap;
    }
  }
}

TEST(EfficiencyCurve, SingletonAndSaturation) {
  testsup::Rng rng(25);
  const LayerSpec spec = trace_layer(8);
  const OffsetField f = testsup::random_field(rng, 3, 8, 8, 3.0);
  const OffsetTrace trace = make_trace(spec, {f});
  const TileSpec tile{4, 1, 1, 4};

  const std::uint64_t lo = input_buffer_size(1, 1, tile.t_w, tile.t_n) * 4;
  const auto single = efficiency_curve(trace, tile, {lo});
  ASSERT_EQ(single.size(), 1u);

  const std::uint64_t hi = input_buffer_size(
                               receptive_field(3, offset_max(f)), 1,
                               tile.t_w, tile.t_n) *
                           4;
  const auto curve = efficiency_curve(trace, tile, {lo, hi / 2, hi});
  EXPECT_EQ(curve.back().second, 1.0);
  for (std::size_t i = 1; i < curve.size(); ++i) {
    EXPECT_GE(curve[i].second, curve[i - 1].second);
  }
}

TEST(EfficiencyCurve, MonotoneOnSeededTraces) {
  testsup::Rng rng(26);
  for (int round = 0; round < 5; ++round) {
    const LayerSpec spec = trace_layer(8);
    std::vector<OffsetField> fields;
    for (int i = 0; i < 2; ++i) {
      fields.push_back(testsup::random_field(rng, 3, 8, 8, 4.0));
    }
    const OffsetTrace trace = make_trace(spec, std::move(fields));
    const TileSpec tile{4, 1, 1, 4};
    std::vector<std::uint64_t> caps;
    for (std::uint64_t rf = 1; rf <= 13; rf += 2) {
      caps.push_back(input_buffer_size(rf, 1, tile.t_w, tile.t_n) * 4);
    }
    const auto curve = efficiency_curve(trace, tile, caps);
    for (std::size_t i = 1; i < curve.size(); ++i) {
      EXPECT_GE(curve[i].second, curve[i - 1].second);
    }
  }
}

TEST(EfficiencyCurve, RejectsUnsortedCapacities) {
  const LayerSpec spec = trace_layer(4);
  const OffsetTrace trace = make_trace(spec, {OffsetField(3, 4, 4)});
  EXPECT_THROW(efficiency_curve(trace, {4, 1, 1, 4}, {2000, 1000}),
               ValidationError);
}

TEST(ValidateTrace, RejectsDimMismatch) {
  const LayerSpec spec = trace_layer(4);
  OffsetTrace trace;
  trace.layer_specs.push_back(spec);
  TraceEntry e;
  e.layer_id = 0;
  e.image_id = 0;
  e.field = OffsetField(3, 5, 5);  // wrong dims
  trace.entries.push_back(std::move(e));
  EXPECT_THROW(validate_trace(trace), ValidationError);
}
