#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "csikit/csi_data.hpp"
#include "csikit/rng.hpp"

using namespace csikit;
using namespace csikit::data;

namespace {

CsiStream make_stream(const std::vector<double>& stamps, double rate,
                      std::size_t m = 2, double base = 1.0) {
  CsiStream s;
  s.sample_rate = rate;
  for (double t : stamps) {
    CsiFrame f;
    f.timestamp = t;
    f.values.assign(m, base + t);
    s.frames.push_back(f);
  }
  return s;
}

// Brute-force oracle: the nominal-slot count whose grid best explains the gap.
long long slot_count_oracle(double t_lo, double t_hi, double rate) {
  const double dt = 1.0 / rate;
  long long best = 0;
  double err_best = 1e300;
  for (long long k = 0; k <= 2000; ++k) {
    const double err = std::abs(t_hi - (t_lo + dt * static_cast<double>(k + 1)));
    if (err < err_best) {
      err_best = err;
      best = k;
    }
  }
  return best;
}

}  // namespace

TEST(DetectGaps, InsertsExactlyTheMissingSlots) {
  // 100 Hz, 0.05 s gap -> 4 placeholders
  auto s = make_stream({1.00, 1.05}, 100.0);
  auto padded = detect_gaps(s);
  ASSERT_EQ(padded.frames.size(), 6u);
  for (std::size_t i = 1; i <= 4; ++i)
    EXPECT_EQ(padded.frames[i].flag, TokenFlag::Pad);
  EXPECT_EQ(padded.frames[0].flag, TokenFlag::Observed);
  EXPECT_EQ(padded.frames[5].flag, TokenFlag::Observed);
  for (double v : padded.frames[2].values) EXPECT_EQ(v, 0.0);
}

TEST(DetectGaps, NominalGapInsertsNothing) {
  auto s = make_stream({1.00, 1.01}, 100.0);
  EXPECT_EQ(detect_gaps(s).frames.size(), 2u);
}

TEST(DetectGaps, RoundingMatchesSlotOracle) {
  // 13 ms gap rounds to no loss, 16 ms to one lost packet
  EXPECT_EQ(missing_between(1.000, 1.013, 0.01), slot_count_oracle(1.000, 1.013, 100.0));
  EXPECT_EQ(missing_between(1.000, 1.013, 0.01), 0);
  EXPECT_EQ(missing_between(1.000, 1.016, 0.01), slot_count_oracle(1.000, 1.016, 100.0));
  EXPECT_EQ(missing_between(1.000, 1.016, 0.01), 1);
}

TEST(DetectGaps, RejectsBadInput) {
  auto s = make_stream({1.0, 0.9}, 100.0);
  EXPECT_THROW(detect_gaps(s), Error);
  auto s2 = make_stream({1.0, 1.1}, 0.0);
  EXPECT_THROW(detect_gaps(s2), Error);
}

TEST(DetectGaps, IsIdempotent) {
  Rng rng(5);
  std::vector<double> stamps;
  double t = 0.5;
  for (int i = 0; i < 60; ++i) {
    t += 0.01 * (rng.uniform() < 0.2 ? 1 + rng.below(5) : 1);
    stamps.push_back(t + rng.uniform(-5e-4, 5e-4));
  }
  auto padded = detect_gaps(make_stream(stamps, 100.0), 5e-4, 7);
  auto twice = detect_gaps(padded, 5e-4, 8);
  EXPECT_EQ(padded.frames.size(), twice.frames.size());
}

TEST(DetectGaps, PaddedLengthTracksRateTimesDuration) {
  // ~14.5% loss over 10 s at 100 Hz -> padded count within 1 of 1000
  Rng rng(11);
  std::vector<double> stamps;
  const double dt = 0.01;
  for (int i = 0; i < 1000; ++i) {
    const bool keep = i == 0 || i == 999 || rng.uniform() > 0.145;
    if (keep) stamps.push_back(0.01 + dt * i + rng.uniform(-2e-4, 2e-4));
  }
  auto padded = detect_gaps(make_stream(stamps, 100.0), 0.0, 0);
  EXPECT_NEAR(static_cast<double>(padded.frames.size()), 1000.0, 1.0);
  auto windows = window(padded, 100);
  EXPECT_EQ(windows.size(), padded.frames.size() / 100);
}

TEST(InterpolateTimestamps, JitterFreeEqualSpacing) {
  auto out = interpolate_timestamps(0.0, 0.05, 4);
  ASSERT_EQ(out.size(), 4u);
  const double expect[] = {0.01, 0.02, 0.03, 0.04};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], expect[i], 1e-15);
}

TEST(InterpolateTimestamps, SingleStampIsMidpoint) {
  auto out = interpolate_timestamps(2.0, 3.0, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_DOUBLE_EQ(out[0], 2.5);
}

TEST(InterpolateTimestamps, JitterStaysBoundedAndOrdered) {
  const double jitter = 1e-4;
  auto base = interpolate_timestamps(1.0, 1.05, 4);
  auto out = interpolate_timestamps(1.0, 1.05, 4, jitter, 1234);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(out[i], base[i], jitter + 1e-15);
  for (int i = 0; i + 1 < 4; ++i) EXPECT_LT(out[i], out[i + 1]);
  EXPECT_GT(out.front(), 1.0);
  EXPECT_LT(out.back(), 1.05);
}

TEST(InterpolateTimestamps, RejectsOversizedJitter) {
  EXPECT_THROW(interpolate_timestamps(0.0, 0.05, 4, 0.02, 1), Error);
}

TEST(Window, IntegerDivisionDropsRemainder) {
  std::vector<double> stamps(250);
  for (int i = 0; i < 250; ++i) stamps[i] = 0.01 * (i + 1);
  auto seqs = window(make_stream(stamps, 100.0), 100);
  EXPECT_EQ(seqs.size(), 2u);
  std::vector<double> exact(100);
  for (int i = 0; i < 100; ++i) exact[i] = 0.01 * (i + 1);
  EXPECT_EQ(window(make_stream(exact, 100.0), 100).size(), 1u);
  CsiStream empty;
  empty.sample_rate = 100.0;
  EXPECT_TRUE(window(empty, 100).empty());
}

TEST(Window, SequencesAreDisjointAndOrdered) {
  std::vector<double> stamps(230);
  for (int i = 0; i < 230; ++i) stamps[i] = 0.01 * (i + 1);
  auto s = make_stream(stamps, 100.0);
  for (std::size_t i = 0; i < s.frames.size(); ++i)
    s.frames[i].values[0] = static_cast<double>(i);
  auto seqs = window(s, 100);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_DOUBLE_EQ(seqs[0].at(99, 0), 99.0);
  EXPECT_DOUBLE_EQ(seqs[1].at(0, 0), 100.0);
}

TEST(Standardize, MatchesClosedFormColumn) {
  // column [1,2,3]: mu=2, population sigma=sqrt(2/3)
  CsiSequence seq;
  seq.length = 3;
  seq.dim = 1;
  seq.values = {1.0, 2.0, 3.0};
  seq.timestamps = {0.0, 0.01, 0.02};
  seq.flags.assign(3, TokenFlag::Observed);
  auto [std_values, stats] = standardize(seq);
  const double sigma = std::sqrt(2.0 / 3.0);
  EXPECT_NEAR(stats.mu[0], 2.0, 1e-15);
  EXPECT_NEAR(stats.sigma[0], sigma, 1e-15);
  EXPECT_NEAR(std_values[0], -1.2247448713915890, 1e-12);
  EXPECT_NEAR(std_values[1], 0.0, 1e-15);
  EXPECT_NEAR(std_values[2], 1.2247448713915890, 1e-12);
}

TEST(Standardize, ConstantColumnGuarded) {
  CsiSequence seq;
  seq.length = 3;
  seq.dim = 1;
  seq.values = {5.0, 5.0, 5.0};
  seq.timestamps = {0.0, 0.01, 0.02};
  seq.flags.assign(3, TokenFlag::Observed);
  auto [std_values, stats] = standardize(seq);
  for (double v : std_values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(stats.sigma[0], 0.0);
}

TEST(Standardize, FixedPointWhenAlreadyNormalized) {
  CsiSequence seq;
  seq.length = 4;
  seq.dim = 1;
  seq.values = {-1.0, 1.0, -1.0, 1.0};  // zero mean, unit population variance
  seq.timestamps = {0.0, 0.01, 0.02, 0.03};
  seq.flags.assign(4, TokenFlag::Observed);
  auto [std_values, stats] = standardize(seq);
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(std_values[i], seq.values[i], 1e-12);
}

TEST(Standardize, OutputStatsAreNormalized) {
  Rng rng(31);
  CsiSequence seq;
  seq.length = 50;
  seq.dim = 8;
  seq.values.resize(400);
  for (auto& v : seq.values) v = 2.0 + 3.0 * rng.normal();
  seq.timestamps.resize(50);
  for (int i = 0; i < 50; ++i) seq.timestamps[i] = 0.01 * (i + 1);
  seq.flags.assign(50, TokenFlag::Observed);
  auto [std_values, stats] = standardize(seq);
  auto out_stats = compute_stats(std_values, 50, 8);
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_LT(std::abs(out_stats.mu[j]), 1e-9);
    EXPECT_NEAR(out_stats.sigma[j], 1.0, 1e-9);
  }
}

TEST(Destandardize, InverseOfStandardize) {
  Rng rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    CsiSequence seq;
    seq.length = 30;
    seq.dim = 5;
    seq.values.resize(150);
    for (auto& v : seq.values) v = 10.0 * rng.uniform() + rng.normal();
    seq.timestamps.resize(30);
    for (int i = 0; i < 30; ++i) seq.timestamps[i] = 0.01 * (i + 1);
    seq.flags.assign(30, TokenFlag::Observed);
    auto [std_values, stats] = standardize(seq);
    auto back = destandardize(std_values, 30, 5, stats);
    for (std::size_t i = 0; i < back.size(); ++i) {
      const double rel = std::abs(back[i] - seq.values[i]) /
                         std::max(std::abs(seq.values[i]), 1e-9);
      EXPECT_LT(rel, 1e-6);
    }
  }
}

TEST(Destandardize, ZeroInputBroadcastsMu) {
  NormStats stats;
  stats.mu = {2.0, -1.0};
  stats.sigma = {0.5, 3.0};
  std::vector<double> zeros(6, 0.0);
  auto out = destandardize(zeros, 3, 2, stats);
  for (int i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(out[i * 2 + 0], 2.0);
    EXPECT_DOUBLE_EQ(out[i * 2 + 1], -1.0);
  }
}

TEST(Destandardize, InverseOfTheWorkedExample) {
  NormStats stats;
  stats.mu = {2.0};
  stats.sigma = {std::sqrt(2.0 / 3.0)};
  std::vector<double> y = {-1.2247448713915890, 0.0, 1.2247448713915890};
  auto out = destandardize(y, 3, 1, stats);
  EXPECT_NEAR(out[0], 1.0, 1e-12);
  EXPECT_NEAR(out[1], 2.0, 1e-12);
  EXPECT_NEAR(out[2], 3.0, 1e-12);
  std::vector<double> bad(4, 0.0);
  EXPECT_THROW(destandardize(bad, 2, 3, stats), Error);
}

TEST(SplitDataset, FloorArithmetic) {
  std::vector<int> items(100);
  auto [train100, test100] = split_dataset(items, 0.9);
  EXPECT_EQ(train100.size(), 90u);
  EXPECT_EQ(test100.size(), 10u);

  std::vector<int> one(1);
  auto [train1, test1] = split_dataset(one, 0.9);
  EXPECT_EQ(train1.size(), 0u);
  EXPECT_EQ(test1.size(), 1u);

  std::vector<int> items55(55);
  auto [train55, test55] = split_dataset(items55, 0.9);
  EXPECT_EQ(train55.size(), 49u);
  EXPECT_EQ(test55.size(), 6u);
}

TEST(SplitDataset, ChronologicalPrefix) {
  std::vector<int> items;
  for (int i = 0; i < 10; ++i) items.push_back(i);
  auto [train, test] = split_dataset(items, 0.7);
  ASSERT_EQ(train.size(), 7u);
  for (int i = 0; i < 7; ++i) EXPECT_EQ(train[i], i);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(test[i], 7 + i);
}

TEST(DatasetFiles, WriteReadWriteIsBitIdentical) {
  Rng rng(41);
  CsiStream s;
  s.sample_rate = 100.0;
  s.label = 2;
  double t = 0.25;
  for (int i = 0; i < 40; ++i) {
    CsiFrame f;
    t += 0.01 + rng.uniform(-1e-4, 1e-4);
    f.timestamp = t;
    f.values.resize(5);
    for (auto& v : f.values) v = 3.0 * rng.uniform();
    s.frames.push_back(f);
  }
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_test";
  std::filesystem::create_directories(dir);
  const auto p1 = (dir / "a.csi").string();
  const auto p2 = (dir / "b.csi").string();
  write_stream(s, p1);
  auto loaded = read_stream(p1);
  EXPECT_EQ(loaded.label, s.label);
  write_stream(loaded, p2);
  std::ifstream f1(p1), f2(p2);
  std::string c1((std::istreambuf_iterator<char>(f1)), {});
  std::string c2((std::istreambuf_iterator<char>(f2)), {});
  EXPECT_EQ(c1, c2);
}

TEST(DatasetFiles, HeaderRateMatchesRowSpan) {
  // 1000 rows spanning ~10 s with rate=100 in the header
  CsiStream s;
  s.sample_rate = 100.0;
  for (int i = 0; i < 1000; ++i) {
    CsiFrame f;
    f.timestamp = 0.01 * (i + 1);
    f.values = {1.0};
    s.frames.push_back(f);
  }
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_test";
  std::filesystem::create_directories(dir);
  const auto p = (dir / "rate.csi").string();
  write_stream(s, p);
  auto loaded = read_stream(p);
  EXPECT_DOUBLE_EQ(loaded.sample_rate, 100.0);
  const double implied =
      static_cast<double>(loaded.frames.size() - 1) / loaded.duration();
  EXPECT_NEAR(implied, loaded.sample_rate, 0.5);
}

TEST(DatasetFiles, WrongColumnCountNamesTheLine) {
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_test";
  std::filesystem::create_directories(dir);
  const auto p = (dir / "bad_cols.csi").string();
  {
    std::ofstream os(p);
    os << "#csi v1 rate=100 subcarriers=52 label=none\n";
    os << "0.01,1.0,2.0,3.0\n";
  }
  try {
    read_stream(p);
    FAIL() << "expected parse error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(DatasetFiles, NonMonotoneTimestampsRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_test";
  std::filesystem::create_directories(dir);
  const auto p = (dir / "bad_time.csi").string();
  {
    std::ofstream os(p);
    os << "#csi v1 rate=100 subcarriers=1 label=none\n";
    os << "0.02,1.0\n0.01,1.0\n";
  }
  EXPECT_THROW(read_stream(p), Error);
}

TEST(DatasetFiles, MalformedHeaderRejected) {
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_test";
  std::filesystem::create_directories(dir);
  const auto p = (dir / "bad_head.csi").string();
  {
    std::ofstream os(p);
    os << "#wrong v1 rate=100 subcarriers=1 label=none\n";
  }
  EXPECT_THROW(read_stream(p), Error);
}

TEST(DatasetFiles, DirectoryRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "csikit_ds_dir";
  std::filesystem::remove_all(dir);
  std::vector<CsiStream> streams;
  for (int k = 0; k < 3; ++k) {
    CsiStream s;
    s.sample_rate = 50.0;
    s.label = k;
    for (int i = 0; i < 10; ++i) {
      CsiFrame f;
      f.timestamp = 0.02 * (i + 1);
      f.values = {static_cast<double>(k), static_cast<double>(i)};
      s.frames.push_back(f);
    }
    streams.push_back(s);
  }
  auto names = write_dataset(streams, dir.string());
  EXPECT_EQ(names.size(), 3u);
  auto loaded = read_dataset(dir.string());
  ASSERT_EQ(loaded.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(*loaded[k].label, k);
    EXPECT_EQ(loaded[k].frames.size(), 10u);
  }
}
