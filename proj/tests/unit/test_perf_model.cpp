// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "hfsim/error.hpp"
#include "hfsim/perf_model.hpp"

using namespace hfsim;

TEST(PerfModel, MultiplierPerH2DPath) {
  EXPECT_EQ(memory_ops_multiplier(H2DMode::kGdrCopy), 24);
  EXPECT_EQ(memory_ops_multiplier(H2DMode::kMemcpy), 30);
  EXPECT_EQ(memory_ops_multiplier(H2DMode::kGdrCopy, 4), 16);
  EXPECT_EQ(memory_ops_multiplier(H2DMode::kGdrCopy, 8, true), 16);
  EXPECT_EQ(memory_ops_multiplier(H2DMode::kMemcpy, 8, true), 18);
}

TEST(PerfModel, BreakdownComponents) {
  const auto b = memory_op_breakdown(H2DMode::kGdrCopy);
  EXPECT_EQ(b.d2h_writes, 8);
  EXPECT_EQ(b.reduce_reads, 8);
  EXPECT_EQ(b.reduce_writes, 1);
  EXPECT_EQ(b.ib_send_reads + b.ib_recv_writes + b.ib_recv_reads, 5);
  EXPECT_EQ(b.h2d_reads, 2);
  EXPECT_EQ(memory_op_breakdown(H2DMode::kMemcpy).h2d_reads, 8);
}

TEST(PerfModel, TheoreticalPeak) {
  EXPECT_NEAR(theoretical_peak_bw(320e9, 24), 13.333e9, 0.01e9);
  EXPECT_THROW(theoretical_peak_bw(320e9, 0), Error);
}

TEST(PerfModel, PcieUnits) {
  for (int n = 1; n <= 1024; ++n) {
    const Rational u = pcie_bandwidth_units(AllreduceAlgorithm::kRing, n);
    EXPECT_EQ(u.num * n, u.den * (2 * n - 1));
    EXPECT_EQ(pcie_bandwidth_units(AllreduceAlgorithm::kHfreduce, n), Rational::make(1, 1));
  }
  EXPECT_EQ(pcie_bandwidth_units(AllreduceAlgorithm::kRing, 8).str(), "15/8");
  EXPECT_THROW(pcie_bandwidth_units(AllreduceAlgorithm::kRing, 0), Error);
}

TEST(PerfModel, ParseH2D) {
  EXPECT_EQ(parse_h2d_mode("gdrcopy"), H2DMode::kGdrCopy);
  EXPECT_EQ(parse_h2d_mode("memcpy"), H2DMode::kMemcpy);
  EXPECT_THROW(parse_h2d_mode("dma"), Error);
}
