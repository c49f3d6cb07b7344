#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "csikit/common.hpp"
#include "csikit/rng.hpp"

// CSI data model and packet-loss-aware preprocessing: gap detection from
// timestamps, placeholder insertion, fixed-length windowing, per-subcarrier
// time statistics, and the plain-text dataset format.

namespace csikit::data {

enum class TokenFlag : std::uint8_t { Observed = 0, Pad = 1, Mask = 2 };

struct CsiFrame {
  double timestamp = 0.0;              // seconds
  std::vector<double> values;          // subcarrier amplitudes
  TokenFlag flag = TokenFlag::Observed;
};

// A timestamped amplitude stream as received (or after gap padding).
struct CsiStream {
  std::vector<CsiFrame> frames;
  double sample_rate = 0.0;  // Hz
  std::string meta;
  std::optional<int> label;

  std::size_t dim() const { return frames.empty() ? 0 : frames[0].values.size(); }
  double duration() const {
    return frames.size() < 2 ? 0.0
                             : frames.back().timestamp - frames.front().timestamp;
  }
};

// Fixed-length windowed sample. Values are row-major length x dim.
struct CsiSequence {
  std::size_t length = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<double> timestamps;
  std::vector<TokenFlag> flags;
  std::optional<int> label;

  double& at(std::size_t i, std::size_t j) { return values[i * dim + j]; }
  double at(std::size_t i, std::size_t j) const { return values[i * dim + j]; }
  std::size_t observed_count() const {
    std::size_t n = 0;
    for (auto f : flags)
      if (f == TokenFlag::Observed) ++n;
    return n;
  }
  std::size_t pad_count() const {
    std::size_t n = 0;
    for (auto f : flags)
      if (f == TokenFlag::Pad) ++n;
    return n;
  }
};

// Per-subcarrier mean and population standard deviation over the time
// dimension of one sequence. Divisions use max(sigma, kSigmaEps).
struct NormStats {
  static constexpr double kSigmaEps = 1e-6;
  std::vector<double> mu;
  std::vector<double> sigma;
};

// round() with halves away from zero, identical on every platform.
inline long long round_half_away(double x) {
  return x >= 0.0 ? static_cast<long long>(std::floor(x + 0.5))
                  : -static_cast<long long>(std::floor(-x + 0.5));
}

// Lost-packet count between two timestamps at the nominal rate.
inline long long missing_between(double t_lo, double t_hi, double dt) {
  return std::max(round_half_away((t_hi - t_lo) / dt - 1.0), 0ll);
}

// Evenly spaced timestamps strictly inside (t_lo, t_hi), one per lost packet,
// with optional uniform jitter. The spacing divisor is k+1 so that the last
// stamp does not collide with the next received packet.
inline std::vector<double> interpolate_timestamps(double t_lo, double t_hi,
                                                  std::size_t k,
                                                  double jitter_scale,
                                                  Rng& rng) {
  require(t_hi > t_lo, "interpolate_timestamps: t_hi must exceed t_lo");
  require(k >= 1, "interpolate_timestamps: k must be at least 1");
  const double spacing = (t_hi - t_lo) / static_cast<double>(k + 1);
  require(jitter_scale >= 0.0 && 2.0 * jitter_scale < spacing,
          "interpolate_timestamps: jitter too large for the gap spacing");
  std::vector<double> out(k);
  for (std::size_t j = 1; j <= k; ++j) {
    double eps = jitter_scale > 0.0 ? rng.uniform(-jitter_scale, jitter_scale) : 0.0;
    out[j - 1] = t_lo + spacing * static_cast<double>(j) + eps;
  }
  return out;
}

inline std::vector<double> interpolate_timestamps(double t_lo, double t_hi,
                                                  std::size_t k,
                                                  double jitter_scale = 0.0,
                                                  std::uint64_t seed = 0) {
  Rng rng(seed);
  return interpolate_timestamps(t_lo, t_hi, k, jitter_scale, rng);
}

inline void validate_stream(const CsiStream& stream) {
  require(stream.sample_rate > 0.0, "stream: sample rate must be positive");
  for (std::size_t i = 0; i + 1 < stream.frames.size(); ++i)
    require(stream.frames[i].timestamp < stream.frames[i + 1].timestamp,
            "stream: timestamps must be strictly increasing");
  const std::size_t m = stream.dim();
  for (const auto& f : stream.frames) {
    require(f.values.size() == m, "stream: inconsistent subcarrier count");
    for (double v : f.values)
      require(std::isfinite(v), "stream: non-finite amplitude");
  }
}

// Detects lost packets from timestamp gaps and inserts placeholder frames
// (flag Pad, zero values, interpolated timestamps). Idempotent: a padded
// stream gains no further frames.
inline CsiStream detect_gaps(const CsiStream& stream, double jitter_scale = 0.0,
                             std::uint64_t seed = 0) {
  validate_stream(stream);
  const double dt = 1.0 / stream.sample_rate;
  const std::size_t m = stream.dim();
  Rng rng(seed);
  CsiStream out;
  out.sample_rate = stream.sample_rate;
  out.meta = stream.meta;
  out.label = stream.label;
  for (std::size_t i = 0; i < stream.frames.size(); ++i) {
    out.frames.push_back(stream.frames[i]);
    if (i + 1 == stream.frames.size()) break;
    const double t_lo = stream.frames[i].timestamp;
    const double t_hi = stream.frames[i + 1].timestamp;
    const long long k = missing_between(t_lo, t_hi, dt);
    if (k <= 0) continue;
    auto stamps = interpolate_timestamps(t_lo, t_hi, static_cast<std::size_t>(k),
                                         jitter_scale, rng);
    for (double ts : stamps) {
      CsiFrame pad;
      pad.timestamp = ts;
      pad.values.assign(m, 0.0);
      pad.flag = TokenFlag::Pad;
      out.frames.push_back(std::move(pad));
    }
  }
  return out;
}

// Non-overlapping (or strided) windows of `length` frames; the trailing
// remainder is dropped. Flags, timestamps, and the stream label carry over.
inline std::vector<CsiSequence> window(const CsiStream& stream,
                                       std::size_t length,
                                       std::size_t stride = 0) {
  require(length > 0, "window: length must be positive");
  if (stride == 0) stride = length;
  std::vector<CsiSequence> out;
  if (stream.frames.size() < length) return out;
  const std::size_t m = stream.dim();
  for (std::size_t start = 0; start + length <= stream.frames.size();
       start += stride) {
    CsiSequence seq;
    seq.length = length;
    seq.dim = m;
    seq.values.resize(length * m);
    seq.timestamps.resize(length);
    seq.flags.resize(length);
    seq.label = stream.label;
    for (std::size_t i = 0; i < length; ++i) {
      const auto& f = stream.frames[start + i];
      seq.timestamps[i] = f.timestamp;
      seq.flags[i] = f.flag;
      for (std::size_t j = 0; j < m; ++j) seq.values[i * m + j] = f.values[j];
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// Builds one sequence from an arbitrary window start (training sampler).
inline CsiSequence slice_sequence(const CsiStream& stream, std::size_t start,
                                  std::size_t length) {
  require(start + length <= stream.frames.size(), "slice_sequence: out of range");
  const std::size_t m = stream.dim();
  CsiSequence seq;
  seq.length = length;
  seq.dim = m;
  seq.values.resize(length * m);
  seq.timestamps.resize(length);
  seq.flags.resize(length);
  seq.label = stream.label;
  for (std::size_t i = 0; i < length; ++i) {
    const auto& f = stream.frames[start + i];
    seq.timestamps[i] = f.timestamp;
    seq.flags[i] = f.flag;
    for (std::size_t j = 0; j < m; ++j) seq.values[i * m + j] = f.values[j];
  }
  return seq;
}

inline NormStats compute_stats(const std::vector<double>& values,
                               std::size_t length, std::size_t dim) {
  NormStats stats;
  stats.mu.assign(dim, 0.0);
  stats.sigma.assign(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < length; ++i) s += values[i * dim + j];
    stats.mu[j] = s / static_cast<double>(length);
    double v = 0.0;
    for (std::size_t i = 0; i < length; ++i) {
      const double d = values[i * dim + j] - stats.mu[j];
      v += d * d;
    }
    stats.sigma[j] = std::sqrt(v / static_cast<double>(length));
  }
  return stats;
}

// Per-subcarrier standardization over the time dimension (population std).
// Placeholder rows are included in the statistics; they are replaced before
// any model consumes the sequence.
inline std::pair<std::vector<double>, NormStats> standardize(
    const CsiSequence& seq) {
  require(seq.length >= 2, "standardize: need at least two positions");
  NormStats stats = compute_stats(seq.values, seq.length, seq.dim);
  std::vector<double> out(seq.values.size());
  for (std::size_t j = 0; j < seq.dim; ++j) {
    const double denom = std::max(stats.sigma[j], NormStats::kSigmaEps);
    for (std::size_t i = 0; i < seq.length; ++i)
      out[i * seq.dim + j] = (seq.values[i * seq.dim + j] - stats.mu[j]) / denom;
  }
  return {std::move(out), std::move(stats)};
}

// Exact inverse of standardize: y * max(sigma, eps) + mu.
inline std::vector<double> destandardize(const std::vector<double>& values,
                                         std::size_t length, std::size_t dim,
                                         const NormStats& stats) {
  require(values.size() == length * dim && stats.mu.size() == dim &&
              stats.sigma.size() == dim,
          "destandardize: shape mismatch with statistics");
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < dim; ++j) {
    const double s = std::max(stats.sigma[j], NormStats::kSigmaEps);
    for (std::size_t i = 0; i < length; ++i)
      out[i * dim + j] = values[i * dim + j] * s + stats.mu[j];
  }
  return out;
}

// Chronological prefix split: floor(n * fraction) to train, rest to test.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_dataset(
    const std::vector<T>& items, double train_fraction) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split_dataset: fraction must be in (0,1)");
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(items.size()) * train_fraction + 1e-12));
  std::vector<T> train(items.begin(), items.begin() + n_train);
  std::vector<T> test(items.begin() + n_train, items.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// dataset files
//
// One stream per file, UTF-8 text:
//   #csi v1 rate=<Hz> subcarriers=<M> label=<name|none>
//   timestamp,v1,...,vM[,label]
// Doubles use shortest round-trip decimal notation with '.' separator.
// ---------------------------------------------------------------------------

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_stream(const CsiStream& stream, const std::string& path) {
  validate_stream(stream);
  for (const auto& f : stream.frames)
    require(f.flag == TokenFlag::Observed,
            "write_stream: only observed frames are serialized");
  std::ofstream os(path);
  require(os.good(), "cannot write " + path);
  os << "#csi v1 rate=" << format_double(stream.sample_rate)
     << " subcarriers=" << stream.dim() << " label="
     << (stream.label ? "class" : "none") << "\n";
  for (const auto& f : stream.frames) {
    os << format_double(f.timestamp);
    for (double v : f.values) os << "," << format_double(v);
    if (stream.label) os << "," << *stream.label;
    os << "\n";
  }
  require(os.good(), "write failed for " + path);
}

inline CsiStream read_stream(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), "cannot open " + path);
  std::string line;
  std::size_t line_no = 1;
  auto parse_fail = [&](const std::string& why) {
    fail(path + ":" + std::to_string(line_no) + ": " + why);
  };

  require(static_cast<bool>(std::getline(is, line)), path + ": empty file");
  CsiStream stream;
  std::size_t subcarriers = 0;
  bool has_label = false;
  {
    std::istringstream hs(line);
    std::string tag, tok;
    hs >> tag;
    std::string version;
    hs >> version;
    if (tag != "#csi" || version != "v1") parse_fail("malformed header");
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) parse_fail("malformed header field: " + tok);
      const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
      if (key == "rate") {
        try {
          stream.sample_rate = std::stod(val);
        } catch (...) {
          parse_fail("bad rate value");
        }
      } else if (key == "subcarriers") {
        subcarriers = std::stoul(val);
      } else if (key == "label") {
        has_label = val != "none";
      } else {
        parse_fail("unknown header field: " + key);
      }
    }
    if (stream.sample_rate <= 0.0) parse_fail("rate must be positive");
    if (subcarriers == 0) parse_fail("subcarriers must be positive");
  }

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const std::size_t expected = 1 + subcarriers + (has_label ? 1 : 0);
    if (fields.size() != expected)
      parse_fail("expected " + std::to_string(expected) + " columns, got " +
                 std::to_string(fields.size()));
    CsiFrame frame;
    try {
      frame.timestamp = std::stod(fields[0]);
      frame.values.resize(subcarriers);
      for (std::size_t j = 0; j < subcarriers; ++j)
        frame.values[j] = std::stod(fields[1 + j]);
    } catch (...) {
      parse_fail("bad numeric value");
    }
    if (has_label) {
      int lbl = 0;
      try {
        lbl = std::stoi(fields.back());
      } catch (...) {
        parse_fail("bad label value");
      }
      if (stream.label && *stream.label != lbl)
        parse_fail("label changes within one stream");
      stream.label = lbl;
    }
    if (!stream.frames.empty() &&
        frame.timestamp <= stream.frames.back().timestamp)
      parse_fail("timestamps must be strictly increasing");
    stream.frames.push_back(std::move(frame));
  }
  stream.meta = std::filesystem::path(path).filename().string();
  return stream;
}

// Writes one file per stream under `dir`; returns the file names in order.
inline std::vector<std::string> write_dataset(
    const std::vector<CsiStream>& streams, const std::string& dir,
    const std::string& prefix = "stream") {
  std::filesystem::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%05zu", i);
    const std::string name = prefix + "_" + idx + ".csi";
    write_stream(streams[i], (std::filesystem::path(dir) / name).string());
    names.push_back(name);
  }
  return names;
}

// Reads every .csi file under `dir`, sorted by file name.
inline std::vector<CsiStream> read_dataset(const std::string& dir) {
  require(std::filesystem::is_directory(dir), "not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csi")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<CsiStream> streams;
  streams.reserve(paths.size());
  for (const auto& p : paths) streams.push_back(read_stream(p));
  return streams;
}

}  // namespace csikit::data
