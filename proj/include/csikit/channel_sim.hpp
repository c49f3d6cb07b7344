#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csikit/csi_data.hpp"
#include "csikit/rng.hpp"

// Synthetic multipath channel generator. Amplitudes come from the magnitude
// of a sum of delayed complex path gains; motion classes differ in how the
// path delays evolve over time (static, linear drift, periodic oscillation).

namespace csikit::sim {

constexpr double kSpeedOfLight = 299792458.0;

enum class Motion { Static, Linear, Periodic };

inline const char* motion_name(Motion m) {
  switch (m) {
    case Motion::Static: return "static";
    case Motion::Linear: return "linear";
    case Motion::Periodic: return "periodic";
  }
  return "?";
}

inline Motion motion_from_name(const std::string& s) {
  if (s == "static") return Motion::Static;
  if (s == "linear") return Motion::Linear;
  if (s == "periodic") return Motion::Periodic;
  fail("unknown motion kind: " + s);
}

// One propagation path: attenuation and delay as continuous functions of
// time, parameterized by scatterer motion.
struct PathSpec {
  Motion motion = Motion::Static;
  double base_amplitude = 1.0;  // a(0), dimensionless, >= 0
  double base_delay = 1e-7;     // tau(0), seconds, > 0
  double velocity = 0.0;        // scatterer speed, m/s
  double osc_hz = 1.0;          // oscillation rate for periodic motion
  double phase = 0.0;
  double amp_mod = 0.0;         // relative amplitude modulation depth, < 1

  double amplitude(double t) const {
    if (motion == Motion::Periodic && amp_mod > 0.0)
      return base_amplitude *
             (1.0 + amp_mod * std::sin(2.0 * M_PI * osc_hz * t + phase));
    return base_amplitude;
  }

  // Path-length change divided by the speed of light.
  double delay(double t) const {
    switch (motion) {
      case Motion::Static:
        return base_delay;
      case Motion::Linear:
        return base_delay + velocity * t / kSpeedOfLight;
      case Motion::Periodic: {
        const double w = 2.0 * M_PI * osc_hz;
        const double displacement = (velocity / w) * std::sin(w * t + phase);
        return base_delay + displacement / kSpeedOfLight;
      }
    }
    return base_delay;
  }
};

struct Scenario {
  std::vector<PathSpec> paths;
  std::vector<double> subcarrier_freqs;  // Hz, strictly increasing
  int motion_class = 0;
  double duration = 1.0;  // seconds
  double rate = 100.0;    // Hz
  double timestamp_jitter = 0.0;  // absolute jitter on nominal stamps, seconds
};

// Wi-Fi OFDM convention: 312.5 kHz spacing around a 2.4 GHz center.
inline std::vector<double> default_subcarriers(std::size_t m,
                                               double center_hz = 2.4e9,
                                               double spacing_hz = 312.5e3) {
  std::vector<double> f(m);
  const double half = (static_cast<double>(m) - 1.0) / 2.0;
  for (std::size_t i = 0; i < m; ++i)
    f[i] = center_hz + (static_cast<double>(i) - half) * spacing_hz;
  return f;
}

inline void validate_scenario(const Scenario& sc) {
  require(!sc.paths.empty(), "scenario: at least one path required");
  require(sc.rate > 0.0 && sc.duration > 0.0, "scenario: bad rate/duration");
  require(sc.subcarrier_freqs.size() >= 1, "scenario: no subcarriers");
  for (std::size_t i = 0; i + 1 < sc.subcarrier_freqs.size(); ++i)
    require(sc.subcarrier_freqs[i] < sc.subcarrier_freqs[i + 1],
            "scenario: subcarrier frequencies must be strictly increasing");
  for (const auto& p : sc.paths) {
    require(p.base_amplitude >= 0.0, "scenario: negative path amplitude");
    require(p.base_delay > 0.0, "scenario: non-positive path delay");
    require(p.amp_mod >= 0.0 && p.amp_mod < 1.0, "scenario: bad amp_mod");
    if (p.motion == Motion::Periodic)
      require(p.osc_hz > 0.0, "scenario: periodic path needs osc_hz > 0");
  }
}

// Complex channel response at one time and frequency.
inline std::complex<double> channel_response(const Scenario& sc, double t,
                                             double freq) {
  std::complex<double> h(0.0, 0.0);
  for (const auto& p : sc.paths) {
    const double theta = -2.0 * M_PI * freq * p.delay(t);
    h += p.amplitude(t) * std::complex<double>(std::cos(theta), std::sin(theta));
  }
  return h;
}

// Generates an amplitude stream on the nominal grid, with small timestamp
// jitter. Deterministic per seed.
inline data::CsiStream synth_csi(const Scenario& sc, std::uint64_t seed) {
  validate_scenario(sc);
  const double dt = 1.0 / sc.rate;
  const auto count = static_cast<std::size_t>(std::floor(sc.duration * sc.rate));
  require(count >= 1, "synth_csi: duration too short for one frame");
  Rng rng(seed);
  data::CsiStream stream;
  stream.sample_rate = sc.rate;
  stream.label = sc.motion_class;
  const std::size_t m = sc.subcarrier_freqs.size();
  stream.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    data::CsiFrame frame;
    const double nominal = static_cast<double>(i + 1) * dt;
    const double jitter = sc.timestamp_jitter > 0.0
                              ? rng.uniform(-sc.timestamp_jitter, sc.timestamp_jitter)
                              : 0.0;
    frame.timestamp = nominal + jitter;
    frame.values.resize(m);
    for (std::size_t j = 0; j < m; ++j)
      frame.values[j] = std::abs(channel_response(sc, nominal, sc.subcarrier_freqs[j]));
    stream.frames.push_back(std::move(frame));
  }
  return stream;
}

// ---------------------------------------------------------------------------
// packet loss
// ---------------------------------------------------------------------------

struct LossModel {
  double iid_rate = 0.145;   // per-packet independent drop probability
  double burst_rate = 0.0;   // probability a burst starts at a packet
  int burst_len_min = 1;
  int burst_len_max = 1;

  void validate() const {
    require(iid_rate >= 0.0 && iid_rate <= 1.0, "loss model: bad iid_rate");
    require(burst_rate >= 0.0 && burst_rate <= 1.0, "loss model: bad burst_rate");
    require(burst_len_min >= 1 && burst_len_max >= burst_len_min,
            "loss model: bad burst length range");
  }

  // Long-run expected drop fraction (interior packets).
  double expected_fraction() const {
    const double mean_len = 0.5 * (burst_len_min + burst_len_max);
    const double burst_part = std::min(1.0, burst_rate * mean_len);
    return 1.0 - (1.0 - iid_rate) * (1.0 - burst_part);
  }
};

// Removes dropped frames (survivor timestamps untouched) and reports which
// nominal slots were dropped. The first and last frames are always kept so
// the receive window stays anchored and trailing losses remain detectable.
inline std::pair<data::CsiStream, std::vector<bool>> inject_loss(
    const data::CsiStream& stream, const LossModel& model, std::uint64_t seed) {
  model.validate();
  const std::size_t n = stream.frames.size();
  std::vector<bool> dropped(n, false);
  Rng rng(seed);
  long long burst_left = 0;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    bool drop = false;
    if (burst_left > 0) {
      drop = true;
      --burst_left;
    } else if (model.burst_rate > 0.0 && rng.bernoulli(model.burst_rate)) {
      burst_left =
          model.burst_len_min +
          static_cast<long long>(rng.below(
              static_cast<std::uint64_t>(model.burst_len_max - model.burst_len_min + 1)));
      drop = true;
      --burst_left;
    } else if (model.iid_rate > 0.0 && rng.bernoulli(model.iid_rate)) {
      drop = true;
    }
    dropped[i] = drop;
  }
  data::CsiStream out;
  out.sample_rate = stream.sample_rate;
  out.meta = stream.meta;
  out.label = stream.label;
  for (std::size_t i = 0; i < n; ++i)
    if (!dropped[i]) out.frames.push_back(stream.frames[i]);
  return {std::move(out), std::move(dropped)};
}

// ---------------------------------------------------------------------------
// labeled dataset generation
// ---------------------------------------------------------------------------

// Randomization ranges around a motion family; one template per class.
struct ScenarioTemplate {
  std::string name;
  Motion motion = Motion::Static;
  int class_index = 0;
  std::size_t num_paths = 3;
  std::size_t subcarriers = 52;
  double duration = 1.0;
  double rate = 100.0;
  double amp_min = 0.4, amp_max = 1.2;
  double delay_min_ns = 30.0, delay_max_ns = 200.0;
  double velocity_min = 5.0, velocity_max = 20.0;
  double osc_min_hz = 2.0, osc_max_hz = 8.0;
  double timestamp_jitter_frac = 0.02;  // fraction of the nominal spacing
};

inline Scenario sample_scenario(const ScenarioTemplate& tpl, Rng& rng) {
  Scenario sc;
  sc.motion_class = tpl.class_index;
  sc.duration = tpl.duration;
  sc.rate = tpl.rate;
  sc.timestamp_jitter = tpl.timestamp_jitter_frac / tpl.rate;
  sc.subcarrier_freqs = default_subcarriers(tpl.subcarriers);
  sc.paths.resize(tpl.num_paths);
  for (std::size_t p = 0; p < tpl.num_paths; ++p) {
    auto& path = sc.paths[p];
    path.base_amplitude = rng.uniform(tpl.amp_min, tpl.amp_max);
    path.base_delay = rng.uniform(tpl.delay_min_ns, tpl.delay_max_ns) * 1e-9;
    path.phase = rng.uniform(0.0, 2.0 * M_PI);
    if (p == 0) {
      // strongest arrival stays put; motion lives on the scattered paths
      path.motion = Motion::Static;
      continue;
    }
    path.motion = tpl.motion;
    path.velocity = rng.uniform(tpl.velocity_min, tpl.velocity_max);
    path.osc_hz = rng.uniform(tpl.osc_min_hz, tpl.osc_max_hz);
    if (tpl.motion == Motion::Periodic) path.amp_mod = rng.uniform(0.1, 0.4);
  }
  return sc;
}

// Built-in class templates: static scene / linear drift / periodic motion.
inline std::vector<ScenarioTemplate> default_templates(std::size_t classes,
                                                       double duration,
                                                       double rate,
                                                       std::size_t subcarriers = 52) {
  require(classes >= 1 && classes <= 3, "default templates cover 1..3 classes");
  std::vector<ScenarioTemplate> tpls;
  const Motion kinds[3] = {Motion::Static, Motion::Linear, Motion::Periodic};
  for (std::size_t c = 0; c < classes; ++c) {
    ScenarioTemplate t;
    t.motion = kinds[c];
    t.name = motion_name(t.motion);
    t.class_index = static_cast<int>(c);
    t.duration = duration;
    t.rate = rate;
    t.subcarriers = subcarriers;
    tpls.push_back(t);
  }
  return tpls;
}

// Balanced labeled streams; per-sample parameters are randomized around the
// class template. Same seed, same bytes.
inline std::vector<data::CsiStream> make_labeled_dataset(
    const std::vector<ScenarioTemplate>& templates, std::size_t samples_per_class,
    std::uint64_t seed) {
  require(!templates.empty(), "make_labeled_dataset: no templates");
  std::vector<data::CsiStream> streams;
  streams.reserve(templates.size() * samples_per_class);
  for (std::size_t c = 0; c < templates.size(); ++c) {
    for (std::size_t s = 0; s < samples_per_class; ++s) {
      Rng rng(derive_seed(derive_seed(seed, "scenario", c), std::to_string(s)));
      Scenario sc = sample_scenario(templates[c], rng);
      auto stream = synth_csi(sc, derive_seed(rng.seed(), "frames"));
      std::ostringstream meta;
      meta << templates[c].name << "-" << s;
      stream.meta = meta.str();
      streams.push_back(std::move(stream));
    }
  }
  return streams;
}

// ---------------------------------------------------------------------------
// scenario template files: key=value lines grouped into [class <name>] sections
// ---------------------------------------------------------------------------

inline std::vector<ScenarioTemplate> load_templates(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open scenario file " + path);
  std::vector<ScenarioTemplate> tpls;
  std::string line;
  std::size_t line_no = 0;
  auto parse_fail = [&](const std::string& why) {
    fail(path + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(is, line)) {
    ++line_no;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') parse_fail("unterminated section header");
      std::istringstream ss(line.substr(1, line.size() - 2));
      std::string kind, name;
      ss >> kind >> name;
      if (kind != "class" || name.empty())
        parse_fail("expected [class <name>] section");
      ScenarioTemplate t;
      t.name = name;
      t.class_index = static_cast<int>(tpls.size());
      tpls.push_back(t);
      continue;
    }
    if (tpls.empty()) parse_fail("key before any [class] section");
    auto eq = line.find('=');
    if (eq == std::string::npos) parse_fail("expected key=value");
    auto trim = [](std::string s) {
      auto b = s.find_first_not_of(" \t");
      auto e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    auto& t = tpls.back();
    try {
      if (key == "motion") t.motion = motion_from_name(val);
      else if (key == "paths") t.num_paths = std::stoul(val);
      else if (key == "subcarriers") t.subcarriers = std::stoul(val);
      else if (key == "duration") t.duration = std::stod(val);
      else if (key == "rate") t.rate = std::stod(val);
      else if (key == "amp_min") t.amp_min = std::stod(val);
      else if (key == "amp_max") t.amp_max = std::stod(val);
      else if (key == "delay_min_ns") t.delay_min_ns = std::stod(val);
      else if (key == "delay_max_ns") t.delay_max_ns = std::stod(val);
      else if (key == "velocity_min") t.velocity_min = std::stod(val);
      else if (key == "velocity_max") t.velocity_max = std::stod(val);
      else if (key == "osc_min_hz") t.osc_min_hz = std::stod(val);
      else if (key == "osc_max_hz") t.osc_max_hz = std::stod(val);
      else if (key == "timestamp_jitter_frac") t.timestamp_jitter_frac = std::stod(val);
      else parse_fail("unknown key: " + key);
    } catch (const Error&) {
      throw;
    } catch (...) {
      parse_fail("bad value for " + key);
    }
  }
  require(!tpls.empty(), path + ": no [class] sections found");
  return tpls;
}

}  // namespace csikit::sim
