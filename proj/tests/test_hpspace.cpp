#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "ipbt/hpspace.hpp"

using namespace ipbt;

namespace {

HyperparameterSpace classification_space() {
  return HyperparameterSpace({
      {"learning_rate", DimKind::real, -6, 0, 10.0},
      {"n_augmentations", DimKind::integer, 1, 4, std::nullopt},
      {"augmentation_strength", DimKind::integer, 1, 30, std::nullopt},
      {"weight_decay", DimKind::real, -8, -2, 10.0},
      {"momentum", DimKind::real, 0.5, 0.999, std::nullopt},
  });
}

HyperparameterSpace batch_space() { return HyperparameterSpace({{"batch_size", DimKind::integer, 8, 10, 2.0}}); }

}  // namespace

TEST(HpSpace, RejectsInvalidDimensions) {
  EXPECT_THROW(HyperparameterSpace({{"a", DimKind::real, 1, 1, std::nullopt}}), std::invalid_argument);
  EXPECT_THROW(HyperparameterSpace({{"a", DimKind::real, 0, 1, 1.0}}), std::invalid_argument);
  EXPECT_THROW(HyperparameterSpace({{"a", DimKind::integer, 0.5, 3, std::nullopt}}), std::invalid_argument);
  EXPECT_THROW(HyperparameterSpace({{"a", DimKind::real, 0, 1, std::nullopt}, {"a", DimKind::real, 0, 1, std::nullopt}}),
               std::invalid_argument);
  EXPECT_THROW(HyperparameterSpace(std::vector<Dimension>{}), std::invalid_argument);
}

TEST(HpSpace, SampleLogRealStaysInNativeRange) {
  auto space = classification_space();
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    auto v = space.sample_uniform(rng);
    EXPECT_GE(v[0], 1e-6);
    EXPECT_LE(v[0], 1.0);
    EXPECT_GE(v[4], 0.5);
    EXPECT_LE(v[4], 0.999);
  }
}

TEST(HpSpace, SampleIntegerLogProducesPowersOfTwo) {
  auto space = batch_space();
  Rng rng(2);
  std::set<double> seen;
  for (int i = 0; i < 500; ++i) seen.insert(space.sample_uniform(rng)[0]);
  EXPECT_EQ(seen, (std::set<double>{256, 512, 1024}));
}

TEST(HpSpace, SamplingIsDeterministicPerSeed) {
  HyperparameterSpace space({{"x", DimKind::real, 0, 1, std::nullopt}});
  Rng a(42), b(42);
  EXPECT_EQ(space.sample_uniform(a), space.sample_uniform(b));
}

TEST(HpSpace, LogSamplingIsUniformInExponent) {
  HyperparameterSpace space({{"lr", DimKind::real, -6, 0, 10.0}});
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) sum += std::log10(space.sample_uniform(rng)[0]);
  EXPECT_NEAR(sum / 10000.0, -3.0, 0.1);
}

TEST(HpSpace, IntegerSamplesAreOnLattice) {
  auto space = classification_space();
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    auto v = space.sample_uniform(rng);
    EXPECT_EQ(v[1], std::round(v[1]));
    EXPECT_EQ(v[2], std::round(v[2]));
  }
}

TEST(HpSpace, NormalizeExamples) {
  auto space = classification_space();
  auto v = space.make({1e-3, 1, 1, 1e-8, 0.5});
  auto u = space.normalize(v);
  EXPECT_NEAR(u[0], 0.5, 1e-12);
  EXPECT_NEAR(u[4], 0.0, 1e-12);
  EXPECT_NEAR(batch_space().normalize(batch_space().make({512}))[0], 0.5, 1e-12);
}

TEST(HpSpace, NormalizeRejectsOutOfRange) {
  auto space = classification_space();
  HPVector bad{{2.0, 1, 1, 1e-8, 0.5}, space.id()};
  EXPECT_THROW(space.normalize(bad), std::out_of_range);
  HPVector off_lattice{{1e-3, 1.5, 1, 1e-8, 0.5}, space.id()};
  EXPECT_THROW(space.normalize(off_lattice), std::out_of_range);
}

TEST(HpSpace, DenormalizeExamples) {
  HyperparameterSpace lr({{"lr", DimKind::real, -6, 0, 10.0}});
  EXPECT_NEAR(lr.denormalize({0.5})[0], 1e-3, 1e-15);
  // 8 + 0.49 * 2 = 8.98 rounds to exponent 9.
  EXPECT_EQ(batch_space().denormalize({0.49})[0], 512);
  // exponent 8.5 exactly: ties go up.
  EXPECT_EQ(batch_space().denormalize({0.25})[0], 512);
}

TEST(HpSpace, RoundTripProperty) {
  auto space = classification_space();
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) {
    auto v = space.sample_uniform(rng);
    auto back = space.denormalize(space.normalize(v));
    for (std::size_t d = 0; d < space.size(); ++d) {
      if (space.dim(d).kind == DimKind::integer)
        EXPECT_EQ(back[d], v[d]);
      else
        EXPECT_LE(std::abs(back[d] - v[d]), 1e-12 * std::abs(v[d]));
    }
  }
}
