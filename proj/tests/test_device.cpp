#include <gtest/gtest.h>

#include <array>
#include <cmath>

#include "flymaster/device.hpp"

namespace fm = flymaster;

namespace {

const fm::DeviceType kUnit{"unit", 1, 1, 1, 10, 1000};

fm::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const fm::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected flymaster::Error";
  return fm::ErrorKind::Io;
}

}  // namespace

TEST(Catalog, PrefixAndOverrides) {
  const auto two = fm::build_catalog(2);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_EQ(two[0].name, "jetson_nano");
  EXPECT_DOUBLE_EQ(two[0].cpu, 1.43);
  EXPECT_DOUBLE_EQ(two[0].mem, 4.0);
  EXPECT_EQ(two[1].name, fm::default_catalog()[1].name);

  const std::vector<fm::DeviceOverride> ov{{0, "cpu", "2.0"}, {3, "name", "board"}};
  const auto four = fm::build_catalog(4, ov);
  EXPECT_DOUBLE_EQ(four[0].cpu, 2.0);
  EXPECT_EQ(four[3].name, "board");
  for (const auto& t : fm::default_catalog()) EXPECT_NO_THROW(t.validate());
}

TEST(Catalog, CountOutOfRange) {
  EXPECT_EQ(kind_of([] { fm::build_catalog(0); }), fm::ErrorKind::CountOutOfRange);
  EXPECT_EQ(kind_of([] { fm::build_catalog(6); }), fm::ErrorKind::CountOutOfRange);
}

TEST(AssignTypes, SingleTypeDeterministicAndBalanced) {
  auto s = fm::derive_stream(1, "placement");
  const std::vector<fm::DeviceType> one{kUnit};
  for (auto t : fm::assign_types(50, one, s)) EXPECT_EQ(t, 0u);

  const auto cat = fm::build_catalog(4);
  auto a = fm::derive_stream(2, "placement");
  auto b = fm::derive_stream(2, "placement");
  const auto ta = fm::assign_types(10000, cat, a);
  EXPECT_EQ(ta, fm::assign_types(10000, cat, b));
  std::array<int, 4> counts{};
  for (auto t : ta) ++counts[t];
  for (int c : counts) EXPECT_NEAR(c / 10000.0, 0.25, 0.02);
}

TEST(Occupancy, UniformOverThreeLevels) {
  auto s = fm::derive_stream(3, "stress");
  auto again = fm::derive_stream(3, "stress");
  std::array<int, 3> counts{};
  for (int i = 0; i < 30000; ++i) {
    const double o = fm::draw_occupancy(s);
    ASSERT_EQ(o, fm::draw_occupancy(again));
    const auto it = std::find(fm::kOccupancyLevels.begin(), fm::kOccupancyLevels.end(), o);
    ASSERT_NE(it, fm::kOccupancyLevels.end());
    ++counts[static_cast<std::size_t>(it - fm::kOccupancyLevels.begin())];
  }
  for (int c : counts) EXPECT_NEAR(c / 30000.0, 1.0 / 3.0, 0.02);
}

TEST(Stress, DirectEvaluation) {
  EXPECT_EQ(fm::stress_metric(kUnit, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(fm::stress_metric({"x", 2, 4, 100, 1, 1}, 0.0), 0.00125);
  const auto& jn = fm::default_catalog()[0];
  EXPECT_DOUBLE_EQ(fm::stress_metric(jn, 0.5) / fm::stress_metric(jn, 0.0), 8.0);
}

TEST(Stress, MonotoneAndScaleInvariantArgmin) {
  const fm::DeviceType base{"b", 2, 2, 50, 1, 1};
  for (double f : {1.1, 2.0}) {
    auto t = base;
    t.cpu *= f;
    EXPECT_LT(fm::stress_metric(t, 0.25), fm::stress_metric(base, 0.25));
    t = base;
    t.mem *= f;
    EXPECT_LT(fm::stress_metric(t, 0.25), fm::stress_metric(base, 0.25));
    t = base;
    t.net *= f;
    EXPECT_LT(fm::stress_metric(t, 0.25), fm::stress_metric(base, 0.25));
  }
  EXPECT_LT(fm::stress_metric(base, 0.25), fm::stress_metric(base, 0.5));
  EXPECT_LT(fm::stress_metric(base, 0.5), fm::stress_metric(base, 0.75));

  auto s = fm::derive_stream(4, "stress");
  std::vector<fm::DeviceType> devs(fm::default_catalog().begin(), fm::default_catalog().end());
  std::vector<double> occ(devs.size());
  for (auto& o : occ) o = fm::draw_occupancy(s);
  auto argmin = [&](double scale) {
    std::size_t best = 0;
    double bv = INFINITY;
    for (std::size_t i = 0; i < devs.size(); ++i) {
      auto t = devs[i];
      t.cpu *= scale;
      t.mem *= scale;
      t.net *= scale;
      if (const double v = fm::stress_metric(t, occ[i]); v < bv) {
        bv = v;
        best = i;
      }
    }
    return best;
  };
  EXPECT_EQ(argmin(1.0), argmin(3.7));
}

TEST(ComputeTime, ScalingRules) {
  EXPECT_DOUBLE_EQ(fm::compute_time(kUnit, 0.0, 1, fm::kReferenceModelSize), kUnit.batch_time_ms);
  EXPECT_DOUBLE_EQ(fm::compute_time(kUnit, 0.75, 3, 1000) / fm::compute_time(kUnit, 0.0, 3, 1000), 4.0);
  EXPECT_LT(fm::compute_time(kUnit, 0.25, 2, 1000), fm::compute_time(kUnit, 0.25, 3, 1000));
  EXPECT_LT(fm::compute_time(kUnit, 0.25, 2, 1000), fm::compute_time(kUnit, 0.5, 2, 1000));
  EXPECT_LT(fm::compute_time(kUnit, 0.25, 2, 1000), fm::compute_time(kUnit, 0.25, 2, 2000));
  EXPECT_EQ(kind_of([] { fm::compute_time(kUnit, 0.0, 0, 10); }), fm::ErrorKind::InvalidRange);
}

TEST(TransferTime, UnitConversion) {
  const fm::DeviceType hundred{"h", 1, 1, 100, 1, 1};
  EXPECT_EQ(fm::transfer_time(hundred, 0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(fm::transfer_time(hundred, 0.0, 1e6), 10.0);
  EXPECT_DOUBLE_EQ(fm::transfer_time(hundred, 0.25, 2e6), 2.0 * fm::transfer_time(hundred, 0.25, 1e6));
}

TEST(AggregationTime, LinearAndCalibrated) {
  const auto& t = fm::default_catalog()[2];
  EXPECT_DOUBLE_EQ(fm::aggregation_time(t, 0.0, 10, 1000) / fm::aggregation_time(t, 0.0, 1, 1000), 10.0);
  EXPECT_DOUBLE_EQ(fm::aggregation_time(t, 0.5, 4, 1000) / fm::aggregation_time(t, 0.0, 4, 1000), 2.0);
  double fastest = 0.0;
  const fm::DeviceType* fast = nullptr;
  for (const auto& d : fm::default_catalog()) {
    if (d.cpu > fastest) {
      fastest = d.cpu;
      fast = &d;
    }
  }
  EXPECT_NEAR(fm::aggregation_time(*fast, 0.0, 10, fm::kReferenceModelSize), 5.0, 1e-12);
}

TEST(PowSolveTime, ExponentialMeanAndScaling) {
  const fm::DeviceType t{"p", 1, 1, 1, 1, 1e5};
  auto s = fm::derive_stream(5, "pow");
  const double mean = fm::pow_mean_solve_ms(t, 0.5, 10);
  EXPECT_DOUBLE_EQ(mean, 1024.0 / (1e5 * 0.5) * 1000.0);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += fm::pow_solve_time(t, 0.5, 10, s);
  EXPECT_NEAR(sum / 10000.0, mean, 0.03 * mean);

  auto fast = t;
  fast.hash_rate *= 2;
  EXPECT_DOUBLE_EQ(fm::pow_mean_solve_ms(fast, 0.5, 10), mean / 2);
  EXPECT_DOUBLE_EQ(fm::pow_mean_solve_ms(t, 0.5, 11), mean * 2);
}
