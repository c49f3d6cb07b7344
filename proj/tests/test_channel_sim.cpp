#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <vector>

#include "csikit/channel_sim.hpp"

using namespace csikit;
using namespace csikit::sim;

namespace {

// Straight-line re-implementation of the multipath sum, kept independent of
// the library path it checks.
double brute_force_amplitude(const Scenario& sc, double t, double freq) {
  double re = 0.0, im = 0.0;
  for (const auto& p : sc.paths) {
    const double a = p.amplitude(t);
    const double tau = p.delay(t);
    re += a * std::cos(-2.0 * M_PI * freq * tau);
    im += a * std::sin(-2.0 * M_PI * freq * tau);
  }
  return std::sqrt(re * re + im * im);
}

Scenario small_scenario(Motion motion = Motion::Periodic) {
  Scenario sc;
  sc.rate = 100.0;
  sc.duration = 0.5;
  sc.subcarrier_freqs = default_subcarriers(8);
  PathSpec p1;
  p1.motion = Motion::Static;
  p1.base_amplitude = 1.0;
  p1.base_delay = 8e-8;
  PathSpec p2;
  p2.motion = motion;
  p2.base_amplitude = 0.6;
  p2.base_delay = 1.5e-7;
  p2.velocity = 12.0;
  p2.osc_hz = 4.0;
  p2.amp_mod = motion == Motion::Periodic ? 0.3 : 0.0;
  PathSpec p3;
  p3.motion = motion;
  p3.base_amplitude = 0.4;
  p3.base_delay = 1.1e-7;
  p3.velocity = 7.0;
  p3.osc_hz = 6.0;
  sc.paths = {p1, p2, p3};
  return sc;
}

}  // namespace

TEST(SynthCsi, SinglePathHasUnitAmplitudeEverywhere) {
  Scenario sc;
  sc.rate = 100.0;
  sc.duration = 0.2;
  sc.subcarrier_freqs = default_subcarriers(4);
  PathSpec p;
  p.motion = Motion::Static;
  p.base_amplitude = 1.0;
  p.base_delay = 1e-7;
  sc.paths = {p};
  auto stream = synth_csi(sc, 1);
  for (const auto& f : stream.frames)
    for (double v : f.values) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(SynthCsi, HalfCycleOffsetCancels) {
  // two equal paths with f * (tau2 - tau1) = 0.5 -> destructive interference
  const double f0 = 2.4e9;
  Scenario sc;
  sc.rate = 100.0;
  sc.duration = 0.1;
  sc.subcarrier_freqs = {f0};
  PathSpec p1;
  p1.base_amplitude = 1.0;
  p1.base_delay = 100.0 / f0;  // whole cycles
  PathSpec p2;
  p2.base_amplitude = 1.0;
  p2.base_delay = 100.5 / f0;  // half a cycle later
  sc.paths = {p1, p2};
  auto stream = synth_csi(sc, 1);
  for (const auto& f : stream.frames) EXPECT_NEAR(f.values[0], 0.0, 1e-9);
}

TEST(SynthCsi, MatchesBruteForceEvaluation) {
  auto sc = small_scenario();
  auto stream = synth_csi(sc, 7);
  const double dt = 1.0 / sc.rate;
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    const double t = dt * static_cast<double>(i + 1);  // nominal evaluation time
    for (std::size_t j = 0; j < sc.subcarrier_freqs.size(); ++j) {
      const double expect = brute_force_amplitude(sc, t, sc.subcarrier_freqs[j]);
      EXPECT_NEAR(stream.frames[i].values[j], expect, 1e-12);
    }
  }
}

TEST(SynthCsi, GlobalPhaseShiftLeavesAmplitudeUnchanged) {
  // adding a common delay offset of whole cycles at one frequency only moves
  // the global phase; |H| is invariant under any common phase rotation
  Scenario sc = small_scenario(Motion::Static);
  sc.subcarrier_freqs = {2.4e9};
  auto base = synth_csi(sc, 3);
  Scenario shifted = sc;
  for (auto& p : shifted.paths) p.base_delay += 1000.0 / 2.4e9;
  auto moved = synth_csi(shifted, 3);
  for (std::size_t i = 0; i < base.frames.size(); ++i)
    EXPECT_NEAR(base.frames[i].values[0], moved.frames[i].values[0], 1e-7);
}

TEST(SynthCsi, LabelsAndMonotoneTimestamps) {
  auto sc = small_scenario();
  sc.motion_class = 2;
  sc.timestamp_jitter = 0.0002;
  auto stream = synth_csi(sc, 9);
  EXPECT_EQ(stream.label, 2);
  for (std::size_t i = 0; i + 1 < stream.frames.size(); ++i)
    EXPECT_LT(stream.frames[i].timestamp, stream.frames[i + 1].timestamp);
  EXPECT_GE(stream.frames.front().timestamp, 0.0);
}

TEST(InjectLoss, ZeroRatesKeepEverything) {
  auto stream = synth_csi(small_scenario(), 2);
  LossModel none;
  none.iid_rate = 0.0;
  auto [lossy, mask] = inject_loss(stream, none, 5);
  EXPECT_EQ(lossy.frames.size(), stream.frames.size());
  for (bool b : mask) EXPECT_FALSE(b);
}

TEST(InjectLoss, FullInteriorLossKeepsEndpoints) {
  auto stream = synth_csi(small_scenario(), 2);
  LossModel all;
  all.iid_rate = 1.0;
  auto [lossy, mask] = inject_loss(stream, all, 5);
  ASSERT_EQ(lossy.frames.size(), 2u);
  EXPECT_EQ(lossy.frames[0].timestamp, stream.frames.front().timestamp);
  EXPECT_EQ(lossy.frames[1].timestamp, stream.frames.back().timestamp);
  EXPECT_FALSE(mask.front());
  EXPECT_FALSE(mask.back());
}

TEST(InjectLoss, BinomialConcentrationAtFifteenPercent) {
  Scenario sc = small_scenario();
  sc.duration = 100.0;  // 10 000 frames at 100 Hz
  auto stream = synth_csi(sc, 4);
  ASSERT_EQ(stream.frames.size(), 10000u);
  LossModel m;
  m.iid_rate = 0.15;
  auto [lossy, mask] = inject_loss(stream, m, 99);
  std::size_t dropped = 0;
  for (bool b : mask)
    if (b) ++dropped;
  const double fraction = static_cast<double>(dropped) / 10000.0;
  EXPECT_GE(fraction, 0.13);
  EXPECT_LE(fraction, 0.17);
  EXPECT_EQ(stream.frames.size() - lossy.frames.size(), dropped);
}

TEST(InjectLoss, BurstsDropConsecutiveRuns) {
  Scenario sc = small_scenario();
  sc.duration = 20.0;
  auto stream = synth_csi(sc, 4);
  LossModel m;
  m.iid_rate = 0.0;
  m.burst_rate = 0.01;
  m.burst_len_min = 20;
  m.burst_len_max = 30;
  auto [lossy, mask] = inject_loss(stream, m, 17);
  // every maximal dropped run is at least the burst minimum (runs can merge);
  // a burst truncated by the protected final frame is exempt
  std::size_t run = 0, runs = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      ++run;
    } else if (run > 0) {
      if (i + 1 < mask.size()) EXPECT_GE(run, 20u);
      ++runs;
      run = 0;
    }
  }
  EXPECT_GT(runs, 0u);
}

TEST(MakeLabeledDataset, BalancedAndDeterministic) {
  auto tpls = default_templates(3, 0.5, 100.0, 8);
  auto a = make_labeled_dataset(tpls, 4, 77);
  auto b = make_labeled_dataset(tpls, 4, 77);
  ASSERT_EQ(a.size(), 12u);
  int counts[3] = {0, 0, 0};
  for (const auto& s : a) counts[*s.label]++;
  for (int c : counts) EXPECT_EQ(c, 4);
  for (std::size_t s = 0; s < a.size(); ++s) {
    ASSERT_EQ(a[s].frames.size(), b[s].frames.size());
    for (std::size_t i = 0; i < a[s].frames.size(); ++i) {
      EXPECT_EQ(a[s].frames[i].timestamp, b[s].frames[i].timestamp);
      for (std::size_t j = 0; j < a[s].frames[i].values.size(); ++j)
        EXPECT_EQ(a[s].frames[i].values[j], b[s].frames[i].values[j]);
    }
  }
}

TEST(MakeLabeledDataset, StaticClassHasLowerVarianceThanPeriodic) {
  auto tpls = default_templates(3, 1.0, 100.0, 16);
  auto streams = make_labeled_dataset(tpls, 6, 123);
  auto mean_variance = [](const data::CsiStream& s) {
    const std::size_t m = s.dim();
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      double mean = 0.0;
      for (const auto& f : s.frames) mean += f.values[j];
      mean /= static_cast<double>(s.frames.size());
      double var = 0.0;
      for (const auto& f : s.frames) {
        const double d = f.values[j] - mean;
        var += d * d;
      }
      total += var / static_cast<double>(s.frames.size());
    }
    return total / static_cast<double>(m);
  };
  double static_var = 0.0, periodic_var = 0.0;
  int n_static = 0, n_periodic = 0;
  for (const auto& s : streams) {
    if (*s.label == 0) {
      static_var += mean_variance(s);
      ++n_static;
    } else if (*s.label == 2) {
      periodic_var += mean_variance(s);
      ++n_periodic;
    }
  }
  static_var /= n_static;
  periodic_var /= n_periodic;
  EXPECT_LT(static_var, periodic_var);
}

TEST(ScenarioFile, ParsesSectionsAndValidates) {
  const auto path =
      (std::filesystem::temp_directory_path() / "csikit_scenarios.cfg").string();
  {
    std::ofstream os(path);
    os << "# two motion classes\n";
    os << "[class still]\n";
    os << "motion = static\n";
    os << "paths = 2\n";
    os << "duration = 0.5\n";
    os << "rate = 50\n";
    os << "subcarriers = 8\n";
    os << "\n[class walk]\n";
    os << "motion = linear\n";
    os << "velocity_min = 5\n";
    os << "velocity_max = 20\n";
  }
  auto tpls = load_templates(path);
  ASSERT_EQ(tpls.size(), 2u);
  EXPECT_EQ(tpls[0].name, "still");
  EXPECT_EQ(tpls[0].motion, Motion::Static);
  EXPECT_EQ(tpls[0].num_paths, 2u);
  EXPECT_DOUBLE_EQ(tpls[0].rate, 50.0);
  EXPECT_EQ(tpls[1].motion, Motion::Linear);
  EXPECT_EQ(tpls[1].class_index, 1);

  const auto bad =
      (std::filesystem::temp_directory_path() / "csikit_bad.cfg").string();
  {
    std::ofstream os(bad);
    os << "motion = static\n";  // key before any section
  }
  EXPECT_THROW(load_templates(bad), Error);
}

TEST(Scenario, ValidationCatchesBadGeometry) {
  Scenario sc = small_scenario();
  sc.paths[0].base_delay = 0.0;
  EXPECT_THROW(synth_csi(sc, 1), Error);
  sc = small_scenario();
  sc.subcarrier_freqs = {2.4e9, 2.4e9};
  EXPECT_THROW(synth_csi(sc, 1), Error);
  sc = small_scenario();
  sc.paths.clear();
  EXPECT_THROW(synth_csi(sc, 1), Error);
}
