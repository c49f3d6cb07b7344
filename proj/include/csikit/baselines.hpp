#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "csikit/csi_data.hpp"

// Non-neural recovery baselines, applied independently per subcarrier over
// the time axis: linear interpolation, inverse distance weighting, ordinary
// kriging under a fitted exponential variogram, and a mean-imputation floor.
// Positions whose flag is not Observed count as missing; observed values are
// never altered.

namespace csikit::baseline {

namespace detail {

struct Column {
  std::vector<double> t;  // observed times
  std::vector<double> v;  // observed values
};

inline Column observed_column(const data::CsiSequence& seq, std::size_t j) {
  Column c;
  for (std::size_t i = 0; i < seq.length; ++i) {
    if (seq.flags[i] == data::TokenFlag::Observed) {
      c.t.push_back(seq.timestamps[i]);
      c.v.push_back(seq.at(i, j));
    }
  }
  return c;
}

inline double linear_at(const Column& c, double t) {
  if (t <= c.t.front()) return c.v.front();
  if (t >= c.t.back()) return c.v.back();
  auto it = std::upper_bound(c.t.begin(), c.t.end(), t);
  const std::size_t hi = static_cast<std::size_t>(it - c.t.begin());
  const std::size_t lo = hi - 1;
  const double span = c.t[hi] - c.t[lo];
  const double w = (t - c.t[lo]) / span;
  return c.v[lo] * (1.0 - w) + c.v[hi] * w;
}

}  // namespace detail

// Per-subcarrier 1-D linear interpolation over timestamps; boundary gaps take
// the nearest observed value.
inline std::vector<double> linear_interp(const data::CsiSequence& seq) {
  std::vector<double> out = seq.values;
  for (std::size_t j = 0; j < seq.dim; ++j) {
    auto col = detail::observed_column(seq, j);
    require(!col.t.empty(), "linear_interp: a subcarrier has no observed value");
    for (std::size_t i = 0; i < seq.length; ++i) {
      if (seq.flags[i] != data::TokenFlag::Observed)
        out[i * seq.dim + j] = detail::linear_at(col, seq.timestamps[i]);
    }
  }
  return out;
}

// Inverse distance weighting with |t - t_i|^(-p); an exact timestamp hit
// returns the observed value.
inline std::vector<double> idw(const data::CsiSequence& seq, double power = 2.0) {
  require(power > 0.0, "idw: power must be positive");
  std::vector<double> out = seq.values;
  for (std::size_t j = 0; j < seq.dim; ++j) {
    auto col = detail::observed_column(seq, j);
    require(!col.t.empty(), "idw: a subcarrier has no observed value");
    for (std::size_t i = 0; i < seq.length; ++i) {
      if (seq.flags[i] == data::TokenFlag::Observed) continue;
      const double t = seq.timestamps[i];
      double num = 0.0, den = 0.0;
      bool exact = false;
      for (std::size_t k = 0; k < col.t.size(); ++k) {
        const double dist = std::abs(t - col.t[k]);
        if (dist == 0.0) {
          out[i * seq.dim + j] = col.v[k];
          exact = true;
          break;
        }
        const double w = std::pow(dist, -power);
        num += w * col.v[k];
        den += w;
      }
      if (!exact) out[i * seq.dim + j] = num / den;
    }
  }
  return out;
}

// Per-subcarrier observed mean at missing positions.
inline std::vector<double> mean_impute(const data::CsiSequence& seq) {
  std::vector<double> out = seq.values;
  for (std::size_t j = 0; j < seq.dim; ++j) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < seq.length; ++i) {
      if (seq.flags[i] == data::TokenFlag::Observed) {
        sum += seq.at(i, j);
        ++n;
      }
    }
    require(n > 0, "mean_impute: a subcarrier has no observed value");
    const double mean = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < seq.length; ++i)
      if (seq.flags[i] != data::TokenFlag::Observed) out[i * seq.dim + j] = mean;
  }
  return out;
}

// Exponential variogram: gamma(h) = nugget + psill * (1 - exp(-h / range)).
struct VariogramModel {
  double nugget = 0.0;
  double sill = 0.0;   // nugget + psill
  double range = 1.0;

  double psill() const { return sill - nugget; }
  double gamma(double h) const {
    if (h <= 0.0) return 0.0;
    return nugget + psill() * (1.0 - std::exp(-h / range));
  }
  // Covariance counterpart used in the kriging system.
  double cov(double h) const {
    return h == 0.0 ? sill : psill() * std::exp(-h / range);
  }
};

// Least-squares fit over binned empirical semivariances; the range is picked
// by grid search, nugget/psill by a 2x2 normal-equation solve with
// non-negativity clamps.
inline VariogramModel fit_exponential_variogram(const std::vector<double>& t,
                                                const std::vector<double>& v,
                                                std::size_t bins = 12) {
  require(t.size() == v.size() && t.size() >= 2, "variogram: need >= 2 points");
  const double span = t.back() - t.front();
  require(span > 0.0, "variogram: zero time span");

  std::vector<double> lag_sum(bins, 0.0), gamma_sum(bins, 0.0);
  std::vector<std::size_t> count(bins, 0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (std::size_t j = i + 1; j < t.size(); ++j) {
      const double h = std::abs(t[j] - t[i]);
      auto b = static_cast<std::size_t>(h / span * static_cast<double>(bins));
      if (b >= bins) b = bins - 1;
      lag_sum[b] += h;
      const double d = v[j] - v[i];
      gamma_sum[b] += 0.5 * d * d;
      ++count[b];
    }
  }
  std::vector<double> lags, gammas;
  for (std::size_t b = 0; b < bins; ++b) {
    if (count[b] == 0) continue;
    lags.push_back(lag_sum[b] / static_cast<double>(count[b]));
    gammas.push_back(gamma_sum[b] / static_cast<double>(count[b]));
  }

  VariogramModel best;
  best.range = span / 3.0;
  if (lags.empty()) return best;

  double total_var = 0.0, mean_g = 0.0;
  for (double g : gammas) mean_g += g;
  mean_g /= static_cast<double>(gammas.size());
  total_var = mean_g;

  double best_sse = -1.0;
  for (int ri = 0; ri < 24; ++ri) {
    const double range =
        span * std::pow(10.0, -2.0 + 2.5 * static_cast<double>(ri) / 23.0);
    // basis: gamma ~ a + b * f(h), f(h) = 1 - exp(-h/range)
    double sff = 0, sf = 0, sgf = 0, sg = 0;
    const auto n = static_cast<double>(lags.size());
    for (std::size_t i = 0; i < lags.size(); ++i) {
      const double f = 1.0 - std::exp(-lags[i] / range);
      sff += f * f;
      sf += f;
      sgf += gammas[i] * f;
      sg += gammas[i];
    }
    const double det = n * sff - sf * sf;
    double a, b;
    if (std::abs(det) < 1e-30) {
      a = 0.0;
      b = total_var;
    } else {
      b = (n * sgf - sf * sg) / det;
      a = (sg - b * sf) / n;
    }
    if (a < 0.0) {
      a = 0.0;
      b = sff > 0.0 ? sgf / sff : total_var;
    }
    if (b < 0.0) {
      b = 0.0;
      a = sg / n;
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < lags.size(); ++i) {
      const double f = 1.0 - std::exp(-lags[i] / range);
      const double r = gammas[i] - (a + b * f);
      sse += r * r;
    }
    if (best_sse < 0.0 || sse < best_sse) {
      best_sse = sse;
      best.nugget = a;
      best.sill = a + b;
      best.range = range;
    }
  }
  return best;
}

struct KrigingResult {
  std::vector<double> values;
  bool fell_back = false;  // linear interpolation was used for some subcarrier
};

// Ordinary kriging per subcarrier: covariance system with a Lagrange
// multiplier enforcing unbiased unit-sum weights. Singular systems get one
// jittered retry, then fall back to linear interpolation with a flag.
inline KrigingResult ordinary_kriging(const data::CsiSequence& seq) {
  KrigingResult result;
  result.values = seq.values;
  for (std::size_t j = 0; j < seq.dim; ++j) {
    auto col = detail::observed_column(seq, j);
    const std::size_t n = col.t.size();
    require(n >= 1, "ordinary_kriging: a subcarrier has no observed value");
    if (n < 3) {
      result.fell_back = true;
      for (std::size_t i = 0; i < seq.length; ++i)
        if (seq.flags[i] != data::TokenFlag::Observed)
          result.values[i * seq.dim + j] = detail::linear_at(col, seq.timestamps[i]);
      continue;
    }

    auto vg = fit_exponential_variogram(col.t, col.v);
    if (vg.psill() <= 1e-30) {
      // flat field: unbiased prediction is the observed mean
      double mean = 0.0;
      for (double x : col.v) mean += x;
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < seq.length; ++i)
        if (seq.flags[i] != data::TokenFlag::Observed)
          result.values[i * seq.dim + j] = mean;
      continue;
    }

    Eigen::MatrixXd a(n + 1, n + 1);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c)
        a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            vg.cov(std::abs(col.t[r] - col.t[c]));
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(n)) = 1.0;
      a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(r)) = 1.0;
    }
    a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)) = 0.0;

    auto solve_weights = [&](const Eigen::MatrixXd& lhs, double t,
                             Eigen::VectorXd& w) -> bool {
      Eigen::VectorXd rhs(n + 1);
      for (std::size_t r = 0; r < n; ++r)
        rhs(static_cast<Eigen::Index>(r)) = vg.cov(std::abs(t - col.t[r]));
      rhs(static_cast<Eigen::Index>(n)) = 1.0;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(lhs);
      w = lu.solve(rhs);
      return w.allFinite() &&
             (lhs * w - rhs).cwiseAbs().maxCoeff() < 1e-6 * (1.0 + vg.sill);
    };

    for (std::size_t i = 0; i < seq.length; ++i) {
      if (seq.flags[i] == data::TokenFlag::Observed) continue;
      const double t = seq.timestamps[i];
      bool exact = false;
      for (std::size_t r = 0; r < n; ++r) {
        if (col.t[r] == t) {  // exact hit reproduces the observation
          result.values[i * seq.dim + j] = col.v[r];
          exact = true;
          break;
        }
      }
      if (exact) continue;
      Eigen::VectorXd w;
      bool ok = solve_weights(a, t, w);
      if (!ok) {
        Eigen::MatrixXd jittered = a;
        for (std::size_t r = 0; r < n; ++r)
          jittered(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) +=
              1e-10;
        ok = solve_weights(jittered, t, w);
      }
      if (!ok) {
        result.fell_back = true;
        result.values[i * seq.dim + j] = detail::linear_at(col, t);
        continue;
      }
      double pred = 0.0;
      for (std::size_t r = 0; r < n; ++r)
        pred += w(static_cast<Eigen::Index>(r)) * col.v[r];
      result.values[i * seq.dim + j] = pred;
    }
  }
  return result;
}

}  // namespace csikit::baseline
