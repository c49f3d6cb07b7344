#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "csikit/tensor.hpp"

// Differentiable operations. Forward values are computed eagerly; each op
// registers a closure that accumulates into its parents' grads. Dense kernels
// go through Eigen maps over the flat row-major storage.

namespace csikit::nn {

template <typename S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<EMat<S>>;
template <typename S>
using CMatMap = Eigen::Map<const EMat<S>>;

template <typename S>
CMatMap<S> as_mat(const NodeT<S>& n) {
  return CMatMap<S>(n.value.data(), static_cast<Eigen::Index>(n.shape[0]),
                    static_cast<Eigen::Index>(n.shape[1]));
}
template <typename S>
CMatMap<S> as_mat(const TensorT<S>& t) {
  return as_mat(*t.node());
}
template <typename S>
MatMap<S> grad_mat(NodeT<S>& n) {
  n.ensure_grad();
  return MatMap<S>(n.grad.data(), static_cast<Eigen::Index>(n.shape[0]),
                   static_cast<Eigen::Index>(n.shape[1]));
}

template <typename S>
void accumulate(const std::shared_ptr<NodeT<S>>& p, const std::vector<S>& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
  auto pa = a.node(), pb = b.node();
  return make_op<S>("add", a.shape(), std::move(out), {a, b},
                    [pa, pb](NodeT<S>& n) {
                      accumulate(pa, n.grad);
                      accumulate(pb, n.grad);
                    });
}

template <typename S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.shape() == b.shape(), "sub: shape mismatch");
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
  auto pa = a.node(), pb = b.node();
  return make_op<S>("sub", a.shape(), std::move(out), {a, b},
                    [pa, pb](NodeT<S>& n) {
                      accumulate(pa, n.grad);
                      if (pb->requires_grad) {
                        pb->ensure_grad();
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          pb->grad[i] -= n.grad[i];
                      }
                    });
}

template <typename S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
  auto pa = a.node(), pb = b.node();
  return make_op<S>("mul", a.shape(), std::move(out), {a, b},
                    [pa, pb](NodeT<S>& n) {
                      if (pa->requires_grad) {
                        pa->ensure_grad();
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          pa->grad[i] += n.grad[i] * pb->value[i];
                      }
                      if (pb->requires_grad) {
                        pb->ensure_grad();
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          pb->grad[i] += n.grad[i] * pa->value[i];
                      }
                    });
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
  auto pa = a.node();
  return make_op<S>("scale", a.shape(), std::move(out), {a},
                    [pa, c](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        pa->grad[i] += n.grad[i] * c;
                    });
}

template <typename S>
TensorT<S> neg(const TensorT<S>& a) {
  return scale(a, S(-1));
}

template <typename S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
  auto pa = a.node();
  return make_op<S>("add_scalar", a.shape(), std::move(out), {a},
                    [pa](NodeT<S>& n) { accumulate(pa, n.grad); });
}

// sqrt with a tiny floor in the derivative so exact zeros stay finite.
template <typename S>
TensorT<S> sqrt_elem(const TensorT<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::sqrt(std::max(a.at(i), S(0)));
  auto pa = a.node();
  auto keep = out;
  return make_op<S>("sqrt", a.shape(), std::move(out), {a},
                    [pa, keep](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i) {
                        const S denom = std::max(S(2) * keep[i], S(1e-30));
                        pa->grad[i] += n.grad[i] / denom;
                      }
                    });
}

template <typename S>
TensorT<S> log_elem(const TensorT<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.at(i));
  auto pa = a.node();
  return make_op<S>("log", a.shape(), std::move(out), {a},
                    [pa](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        pa->grad[i] += n.grad[i] / pa->value[i];
                    });
}

// max(a, lo); gradient passes only where the input is above the floor.
template <typename S>
TensorT<S> clamp_min(const TensorT<S>& a, S lo) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.at(i), lo);
  auto pa = a.node();
  return make_op<S>("clamp_min", a.shape(), std::move(out), {a},
                    [pa, lo](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        if (pa->value[i] > lo) pa->grad[i] += n.grad[i];
                    });
}

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const S x = a.at(i);
    out[i] = x >= 0 ? S(1) / (S(1) + std::exp(-x))
                    : std::exp(x) / (S(1) + std::exp(x));
  }
  auto pa = a.node();
  auto keep = out;
  return make_op<S>("sigmoid", a.shape(), std::move(out), {a},
                    [pa, keep](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        pa->grad[i] += n.grad[i] * keep[i] * (S(1) - keep[i]);
                    });
}

// Exact (erf-based) GELU.
template <typename S>
TensorT<S> gelu(const TensorT<S>& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = static_cast<double>(a.at(i));
    out[i] = static_cast<S>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
  }
  auto pa = a.node();
  return make_op<S>("gelu", a.shape(), std::move(out), {a},
                    [pa](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i) {
                        const double x = static_cast<double>(pa->value[i]);
                        const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                        const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                        pa->grad[i] += n.grad[i] * static_cast<S>(cdf + x * pdf);
                      }
                    });
}

// ---------------------------------------------------------------------------
// broadcasting over rows: v has length cols, applied to every row
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> add_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  require(a.rank() == 2 && v.rank() == 1 && v.size() == a.cols(),
          "add_rowvec: shape mismatch");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = a.at(i, j) + v.at(j);
  auto pa = a.node(), pv = v.node();
  return make_op<S>("add_rowvec", a.shape(), std::move(out), {a, v},
                    [pa, pv, r, c](NodeT<S>& n) {
                      accumulate(pa, n.grad);
                      if (pv->requires_grad) {
                        pv->ensure_grad();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            pv->grad[j] += n.grad[i * c + j];
                      }
                    });
}

template <typename S>
TensorT<S> sub_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  return add_rowvec(a, neg(v));
}

template <typename S>
TensorT<S> mul_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  require(a.rank() == 2 && v.rank() == 1 && v.size() == a.cols(),
          "mul_rowvec: shape mismatch");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = a.at(i, j) * v.at(j);
  auto pa = a.node(), pv = v.node();
  return make_op<S>("mul_rowvec", a.shape(), std::move(out), {a, v},
                    [pa, pv, r, c](NodeT<S>& n) {
                      if (pa->requires_grad) {
                        pa->ensure_grad();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            pa->grad[i * c + j] += n.grad[i * c + j] * pv->value[j];
                      }
                      if (pv->requires_grad) {
                        pv->ensure_grad();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            pv->grad[j] += n.grad[i * c + j] * pa->value[i * c + j];
                      }
                    });
}

template <typename S>
TensorT<S> div_rowvec(const TensorT<S>& a, const TensorT<S>& v) {
  require(a.rank() == 2 && v.rank() == 1 && v.size() == a.cols(),
          "div_rowvec: shape mismatch");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = a.at(i, j) / v.at(j);
  auto pa = a.node(), pv = v.node();
  return make_op<S>("div_rowvec", a.shape(), std::move(out), {a, v},
                    [pa, pv, r, c](NodeT<S>& n) {
                      if (pa->requires_grad) {
                        pa->ensure_grad();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j)
                            pa->grad[i * c + j] += n.grad[i * c + j] / pv->value[j];
                      }
                      if (pv->requires_grad) {
                        pv->ensure_grad();
                        for (std::size_t i = 0; i < r; ++i)
                          for (std::size_t j = 0; j < c; ++j) {
                            const S vj = pv->value[j];
                            pv->grad[j] -= n.grad[i * c + j] *
                                           pa->value[i * c + j] / (vj * vj);
                          }
                      }
                    });
}

// Per-row constant weights (no gradient into the weights).
template <typename S>
TensorT<S> scale_rows(const TensorT<S>& a, std::vector<S> w) {
  require(a.rank() == 2 && w.size() == a.rows(), "scale_rows: shape mismatch");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = a.at(i, j) * w[i];
  auto pa = a.node();
  return make_op<S>("scale_rows", a.shape(), std::move(out), {a},
                    [pa, w = std::move(w), r, c](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          pa->grad[i * c + j] += n.grad[i * c + j] * w[i];
                    });
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> reshape(const TensorT<S>& a, Shape shape) {
  require(shape_size(shape) == a.size(), "reshape: size mismatch");
  auto pa = a.node();
  return make_op<S>("reshape", std::move(shape), a.value(), {a},
                    [pa](NodeT<S>& n) { accumulate(pa, n.grad); });
}

template <typename S>
TensorT<S> transpose(const TensorT<S>& a) {
  require(a.rank() == 2, "transpose: rank-2 required");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.at(i, j);
  auto pa = a.node();
  return make_op<S>("transpose", {c, r}, std::move(out), {a},
                    [pa, r, c](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          pa->grad[i * c + j] += n.grad[j * r + i];
                    });
}

template <typename S>
TensorT<S> slice_cols(const TensorT<S>& a, std::size_t j0, std::size_t w) {
  require(a.rank() == 2 && j0 + w <= a.cols(), "slice_cols: out of range");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.at(i, j0 + j);
  auto pa = a.node();
  return make_op<S>("slice_cols", {r, w}, std::move(out), {a},
                    [pa, j0, w, r, c](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < w; ++j)
                          pa->grad[i * c + j0 + j] += n.grad[i * w + j];
                    });
}

template <typename S>
TensorT<S> concat_cols(const std::vector<TensorT<S>>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require(p.rank() == 2 && p.rows() == r, "concat_cols: row mismatch");
    total += p.cols();
  }
  std::vector<S> out(r * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * total + off + j] = p.at(i, j);
    off += w;
  }
  std::vector<std::shared_ptr<NodeT<S>>> pnodes;
  for (const auto& p : parts) pnodes.push_back(p.node());
  return make_op<S>("concat_cols", {r, total}, std::move(out), parts,
                    [pnodes, r, total](NodeT<S>& n) {
                      std::size_t off = 0;
                      for (const auto& p : pnodes) {
                        const std::size_t w = p->shape[1];
                        if (p->requires_grad) {
                          p->ensure_grad();
                          for (std::size_t i = 0; i < r; ++i)
                            for (std::size_t j = 0; j < w; ++j)
                              p->grad[i * w + j] += n.grad[i * total + off + j];
                        }
                        off += w;
                      }
                    });
}

// ---------------------------------------------------------------------------
// contractions and reductions
// ---------------------------------------------------------------------------

template <typename S>
TensorT<S> matmul(const TensorT<S>& a, const TensorT<S>& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.rows(),
          "matmul: shape mismatch");
  const std::size_t r = a.rows(), k = a.cols(), c = b.cols();
  std::vector<S> out(r * c);
  {
    MatMap<S> o(out.data(), static_cast<Eigen::Index>(r),
                static_cast<Eigen::Index>(c));
    o.noalias() = as_mat(a) * as_mat(b);
  }
  auto pa = a.node(), pb = b.node();
  return make_op<S>("matmul", {r, c}, std::move(out), {a, b},
                    [pa, pb](NodeT<S>& n) {
                      CMatMap<S> go(n.grad.data(),
                                    static_cast<Eigen::Index>(n.shape[0]),
                                    static_cast<Eigen::Index>(n.shape[1]));
                      if (pa->requires_grad) {
                        grad_mat(*pa).noalias() += go * as_mat(*pb).transpose();
                      }
                      if (pb->requires_grad) {
                        grad_mat(*pb).noalias() += as_mat(*pa).transpose() * go;
                      }
                    });
}

template <typename S>
TensorT<S> sum_all(const TensorT<S>& a) {
  S s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.at(i);
  auto pa = a.node();
  return make_op<S>("sum_all", {1}, {s}, {a}, [pa](NodeT<S>& n) {
    if (!pa->requires_grad) return;
    pa->ensure_grad();
    for (auto& g : pa->grad) g += n.grad[0];
  });
}

template <typename S>
TensorT<S> mean_all(const TensorT<S>& a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.size()));
}

template <typename S>
TensorT<S> sum_axis0(const TensorT<S>& a) {
  require(a.rank() == 2, "sum_axis0: rank-2 required");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(c, S(0));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.at(i, j);
  auto pa = a.node();
  return make_op<S>("sum_axis0", {c}, std::move(out), {a},
                    [pa, r, c](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                          pa->grad[i * c + j] += n.grad[j];
                    });
}

template <typename S>
TensorT<S> mean_axis0(const TensorT<S>& a) {
  return scale(sum_axis0(a), S(1) / static_cast<S>(a.rows()));
}

// ---------------------------------------------------------------------------
// softmax / normalization / regularization
// ---------------------------------------------------------------------------

// Row-stochastic softmax (axis=1) or column-stochastic (axis=0).
template <typename S>
TensorT<S> softmax(const TensorT<S>& a, int axis) {
  require(a.rank() == 2 && (axis == 0 || axis == 1), "softmax: bad axis");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<S> out(a.size());
  if (axis == 1) {
    for (std::size_t i = 0; i < r; ++i) {
      S mx = a.at(i, 0);
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, a.at(i, j));
      S z = 0;
      for (std::size_t j = 0; j < c; ++j) {
        out[i * c + j] = std::exp(a.at(i, j) - mx);
        z += out[i * c + j];
      }
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      S mx = a.at(0, j);
      for (std::size_t i = 1; i < r; ++i) mx = std::max(mx, a.at(i, j));
      S z = 0;
      for (std::size_t i = 0; i < r; ++i) {
        out[i * c + j] = std::exp(a.at(i, j) - mx);
        z += out[i * c + j];
      }
      for (std::size_t i = 0; i < r; ++i) out[i * c + j] /= z;
    }
  }
  auto pa = a.node();
  auto y = out;
  return make_op<S>("softmax", a.shape(), std::move(out), {a},
                    [pa, y = std::move(y), r, c, axis](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      if (axis == 1) {
                        for (std::size_t i = 0; i < r; ++i) {
                          S dot = 0;
                          for (std::size_t j = 0; j < c; ++j)
                            dot += n.grad[i * c + j] * y[i * c + j];
                          for (std::size_t j = 0; j < c; ++j)
                            pa->grad[i * c + j] +=
                                (n.grad[i * c + j] - dot) * y[i * c + j];
                        }
                      } else {
                        for (std::size_t j = 0; j < c; ++j) {
                          S dot = 0;
                          for (std::size_t i = 0; i < r; ++i)
                            dot += n.grad[i * c + j] * y[i * c + j];
                          for (std::size_t i = 0; i < r; ++i)
                            pa->grad[i * c + j] +=
                                (n.grad[i * c + j] - dot) * y[i * c + j];
                        }
                      }
                    });
}

template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& a) {
  return softmax(a, 1);
}

// Per-row normalization to zero mean / unit population variance, then an
// affine gain and bias. The variance floor only engages on degenerate rows.
template <typename S>
TensorT<S> layer_norm(const TensorT<S>& x, const TensorT<S>& gain,
                      const TensorT<S>& bias, S var_floor = S(1e-12)) {
  require(x.rank() == 2, "layer_norm: rank-2 required");
  const std::size_t r = x.rows(), c = x.cols();
  require(gain.rank() == 1 && gain.size() == c && bias.size() == c,
          "layer_norm: gain/bias mismatch");
  std::vector<S> out(x.size()), mu(r), inv_s(r);
  std::vector<bool> clamped(r);
  for (std::size_t i = 0; i < r; ++i) {
    S m = 0;
    for (std::size_t j = 0; j < c; ++j) m += x.at(i, j);
    m /= static_cast<S>(c);
    S v = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const S d = x.at(i, j) - m;
      v += d * d;
    }
    v /= static_cast<S>(c);
    clamped[i] = v < var_floor;
    const S s = std::sqrt(std::max(v, var_floor));
    mu[i] = m;
    inv_s[i] = S(1) / s;
    for (std::size_t j = 0; j < c; ++j)
      out[i * c + j] = (x.at(i, j) - m) * inv_s[i] * gain.at(j) + bias.at(j);
  }
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  return make_op<S>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [px, pg, pb, mu = std::move(mu), inv_s = std::move(inv_s),
       clamped = std::move(clamped), r, c](NodeT<S>& n) {
        for (std::size_t i = 0; i < r; ++i) {
          // dy: gradient w.r.t. normalized row
          std::vector<S> yrow(c), dy(c);
          for (std::size_t j = 0; j < c; ++j) {
            yrow[j] = (px->value[i * c + j] - mu[i]) * inv_s[i];
            dy[j] = n.grad[i * c + j] * pg->value[j];
          }
          if (pg->requires_grad) {
            pg->ensure_grad();
            for (std::size_t j = 0; j < c; ++j)
              pg->grad[j] += n.grad[i * c + j] * yrow[j];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t j = 0; j < c; ++j) pb->grad[j] += n.grad[i * c + j];
          }
          if (px->requires_grad) {
            px->ensure_grad();
            S mean_dy = 0, mean_dyy = 0;
            for (std::size_t j = 0; j < c; ++j) {
              mean_dy += dy[j];
              mean_dyy += dy[j] * yrow[j];
            }
            mean_dy /= static_cast<S>(c);
            mean_dyy /= static_cast<S>(c);
            for (std::size_t j = 0; j < c; ++j) {
              S g = dy[j] - mean_dy;
              if (!clamped[i]) g -= yrow[j] * mean_dyy;
              px->grad[i * c + j] += g * inv_s[i];
            }
          }
        }
      });
}

// Inverted dropout; identity when not training. rate must be in [0, 1).
template <typename S>
TensorT<S> dropout(const TensorT<S>& a, double rate, bool train, Rng& rng) {
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  const S keep_scale = S(1.0 / (1.0 - rate));
  std::vector<S> mask(a.size());
  for (auto& m : mask) m = rng.bernoulli(rate) ? S(0) : keep_scale;
  std::vector<S> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * mask[i];
  auto pa = a.node();
  return make_op<S>("dropout", a.shape(), std::move(out), {a},
                    [pa, mask = std::move(mask)](NodeT<S>& n) {
                      if (!pa->requires_grad) return;
                      pa->ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        pa->grad[i] += n.grad[i] * mask[i];
                    });
}

// Cross entropy from unnormalized logits, log-sum-exp stabilized.
template <typename S>
TensorT<S> cross_entropy(const TensorT<S>& logits, std::size_t target) {
  require(logits.rank() == 1, "cross_entropy: logits must be rank-1");
  const std::size_t k = logits.size();
  require(target < k, "cross_entropy: target out of range");
  S mx = logits.at(0);
  for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits.at(i));
  S z = 0;
  for (std::size_t i = 0; i < k; ++i) z += std::exp(logits.at(i) - mx);
  const S loss = std::log(z) + mx - logits.at(target);
  auto pl = logits.node();
  return make_op<S>("cross_entropy", {1}, {loss}, {logits},
                    [pl, target, mx, z, k](NodeT<S>& n) {
                      if (!pl->requires_grad) return;
                      pl->ensure_grad();
                      for (std::size_t i = 0; i < k; ++i) {
                        S p = std::exp(pl->value[i] - mx) / z;
                        if (i == target) p -= S(1);
                        pl->grad[i] += n.grad[0] * p;
                      }
                    });
}

// ---------------------------------------------------------------------------
// composite layers
// ---------------------------------------------------------------------------

enum class Act { Identity, Gelu, Sigmoid };

template <typename S>
TensorT<S> activate(const TensorT<S>& x, Act act) {
  switch (act) {
    case Act::Identity: return x;
    case Act::Gelu: return gelu(x);
    case Act::Sigmoid: return sigmoid(x);
  }
  fail("activate: unknown activation");
}

template <typename S>
struct DenseLayerT {
  TensorT<S> weight;  // in x out
  TensorT<S> bias;    // out
  Act act = Act::Identity;
};

using DenseLayer = DenseLayerT<double>;

// Affine + activation chain over row-major inputs (rows are positions).
template <typename S>
TensorT<S> mlp(const TensorT<S>& x, const std::vector<DenseLayerT<S>>& layers) {
  TensorT<S> h = x;
  for (const auto& l : layers) {
    h = activate(add_rowvec(matmul(h, l.weight), l.bias), l.act);
  }
  return h;
}

template <typename S>
struct AttentionParamsT {
  TensorT<S> wq, bq, wk, bk, wv, bv, wo, bo;
};

using AttentionParams = AttentionParamsT<double>;

template <typename S>
struct AttentionOutT {
  TensorT<S> out;                     // L x d
  std::vector<TensorT<S>> attention;  // one L x L map per head
};

// Bidirectional multi-head self-attention; no attention mask anywhere.
template <typename S>
AttentionOutT<S> multi_head_attention(const TensorT<S>& x, std::size_t heads,
                                      const AttentionParamsT<S>& p) {
  require(x.rank() == 2, "attention: rank-2 input required");
  const std::size_t d = x.cols();
  require(heads > 0 && d % heads == 0,
          "attention: model width must be divisible by head count");
  const std::size_t dk = d / heads;
  const S inv_scale = S(1) / std::sqrt(static_cast<S>(dk));

  TensorT<S> q = add_rowvec(matmul(x, p.wq), p.bq);
  TensorT<S> k = add_rowvec(matmul(x, p.wk), p.bk);
  TensorT<S> v = add_rowvec(matmul(x, p.wv), p.bv);

  std::vector<TensorT<S>> ctx, maps;
  ctx.reserve(heads);
  maps.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    TensorT<S> qh = slice_cols(q, h * dk, dk);
    TensorT<S> kh = slice_cols(k, h * dk, dk);
    TensorT<S> vh = slice_cols(v, h * dk, dk);
    TensorT<S> scores = scale(matmul(qh, transpose(kh)), inv_scale);
    TensorT<S> attn = softmax_rows(scores);
    maps.push_back(attn);
    ctx.push_back(matmul(attn, vh));
  }
  TensorT<S> merged = concat_cols(ctx);
  TensorT<S> out = add_rowvec(matmul(merged, p.wo), p.bo);
  return {out, std::move(maps)};
}

}  // namespace csikit::nn
