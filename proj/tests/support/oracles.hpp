#pragma once

// Independent reference computations used by the unit tests and the
// acceptance runner. Nothing here calls into the autodiff tape.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "higformer/analysis.hpp"
#include "higformer/graph.hpp"
#include "higformer/nn.hpp"
#include "higformer/synthetic.hpp"

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix; eigenvalues ascending.
inline void jacobi_eigen(MatrixXd a, VectorXd& values, MatrixXd& vectors) {
  const auto n = a.rows();
  vectors = MatrixXd::Identity(n, n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a(x, x) < a(y, y); });
  values.resize(n);
  MatrixXd sorted(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    values[i] = a(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(i)]);
    sorted.col(i) = vectors.col(order[static_cast<std::size_t>(i)]);
  }
  vectors = sorted;
}

/// Dense normalized Laplacian of the undirected, binarized edge set.
inline MatrixXd dense_laplacian(std::size_t n, std::span<const higformer::GraphEdge> edges) {
  MatrixXd adj = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& e : edges) {
    if (e.src == e.dst) continue;
    adj(e.src, e.dst) = 1.0;
    adj(e.dst, e.src) = 1.0;
  }
  MatrixXd lap = MatrixXd::Zero(adj.rows(), adj.cols());
  for (Eigen::Index i = 0; i < adj.rows(); ++i) {
    const double di = adj.row(i).sum();
    if (di > 0) lap(i, i) = 1.0;
    for (Eigen::Index j = 0; j < adj.cols(); ++j) {
      if (adj(i, j) != 0.0) lap(i, j) = -1.0 / std::sqrt(di * adj.row(j).sum());
    }
  }
  return lap;
}

struct EigenPair {
  double value;
  VectorXd vector;
};

/// Non-trivial eigenpairs of the Laplacian, one set per connected component,
/// with the first largest-magnitude entry made positive.
inline std::vector<EigenPair> component_eigenpairs(std::size_t n, std::span<const higformer::GraphEdge> edges) {
  const MatrixXd lap = dense_laplacian(n, edges);
  std::vector<int> comp(n, -1);
  int nc = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    std::vector<std::size_t> queue{s};
    comp[s] = nc;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      for (std::size_t u = 0; u < n; ++u) {
        if (lap(static_cast<Eigen::Index>(queue[qi]), static_cast<Eigen::Index>(u)) != 0.0 && comp[u] < 0 &&
            u != queue[qi]) {
          comp[u] = nc;
          queue.push_back(u);
        }
      }
    }
    ++nc;
  }
  std::vector<EigenPair> pairs;
  for (int c = 0; c < nc; ++c) {
    std::vector<Eigen::Index> members;
    for (std::size_t i = 0; i < n; ++i)
      if (comp[i] == c) members.push_back(static_cast<Eigen::Index>(i));
    const auto m = static_cast<Eigen::Index>(members.size());
    if (m < 2) continue;
    MatrixXd sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = lap(members[a], members[b]);
    VectorXd vals;
    MatrixXd vecs;
    jacobi_eigen(sub, vals, vecs);
    for (Eigen::Index k = 1; k < m; ++k) {
      VectorXd full = VectorXd::Zero(static_cast<Eigen::Index>(n));
      for (Eigen::Index a = 0; a < m; ++a) full[members[a]] = vecs(a, k);
      Eigen::Index best = 0;
      for (Eigen::Index i = 0; i < full.size(); ++i)
        if (std::abs(full[i]) > std::abs(full[best]) + 1e-9) best = i;
      if (full[best] < 0) full = -full;
      pairs.push_back({vals[k], full});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
  return pairs;
}

/// Largest deviation between the identifier columns and the oracle. Columns
/// whose eigenvalue is simple are compared directly; columns inside a
/// repeated eigenvalue are compared through the projector onto the eigenspace,
/// which is the only basis-independent quantity there.
inline double identifier_deviation(const higformer::NodeIdentifierSet& ids, std::size_t n,
                                   std::span<const higformer::GraphEdge> edges) {
  const auto pairs = component_eigenpairs(n, edges);
  const auto keep = std::min<std::size_t>(pairs.size(), static_cast<std::size_t>(ids.identifiers.cols()));
  double worst = std::abs(static_cast<double>(ids.num_valid) - static_cast<double>(keep));
  for (std::size_t k = keep; k < static_cast<std::size_t>(ids.identifiers.cols()); ++k) {
    worst = std::max(worst, ids.identifiers.col(static_cast<Eigen::Index>(k)).cwiseAbs().maxCoeff());
  }
  std::size_t k = 0;
  while (k < keep) {
    std::size_t end = k + 1;
    while (end < pairs.size() && std::abs(pairs[end].value - pairs[k].value) < 1e-8) ++end;
    const auto upto = std::min(end, keep);
    for (std::size_t j = k; j < upto; ++j) {
      worst = std::max(worst, std::abs(ids.eigenvalues[j] - pairs[j].value));
    }
    if (end - k == 1) {
      worst = std::max(worst, (ids.identifiers.col(static_cast<Eigen::Index>(k)) - pairs[k].vector).cwiseAbs().maxCoeff());
    } else if (upto == end) {
      MatrixXd p_ref = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      MatrixXd p_got = p_ref;
      for (std::size_t j = k; j < end; ++j) {
        p_ref += pairs[j].vector * pairs[j].vector.transpose();
        const VectorXd g = ids.identifiers.col(static_cast<Eigen::Index>(j));
        p_got += g * g.transpose();
      }
      worst = std::max(worst, (p_ref - p_got).cwiseAbs().maxCoeff());
    }
    // A repeated eigenvalue cut by the width limit has no basis-free check; eigenvalues only.
    k = end;
  }
  return worst;
}

inline double leaky(double x, double slope) { return x > 0 ? x : slope * x; }
inline double elu(double x) { return x > 0 ? x : std::expm1(x); }

/// Dot of row vector x (1 x in) with column `c` of W (in x out).
inline double dot_col(const VectorXd& x, const MatrixXd& w, Eigen::Index c) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x[i] * w(i, c);
  return s;
}

inline VectorXd times(const VectorXd& x, const MatrixXd& w) {
  VectorXd out(w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) out[c] = dot_col(x, w, c);
  return out;
}

/// One layer of the typed-relation GAT on two nodes joined by a single edge
/// src -> dst of the given relation (1 pass, 2 defense) and count.
struct PlayerGatLayer {
  std::array<MatrixXd, 3> w;  // self, pass, defense
  MatrixXd w_attn;
  VectorXd a_dst, a_src;
};

inline std::array<VectorXd, 2> two_node_player_gat(const std::array<VectorXd, 2>& x, const PlayerGatLayer& l,
                                                  int src, int relation, double count, double slope) {
  const int dst = 1 - src;
  std::array<VectorXd, 2> out;
  std::array<VectorXd, 2> proj{times(x[0], l.w_attn), times(x[1], l.w_attn)};
  // source node: self-loop only, weight 1
  out[static_cast<std::size_t>(src)] = times(x[static_cast<std::size_t>(src)], l.w[0]);
  const auto& pd = proj[static_cast<std::size_t>(dst)];
  const auto& ps = proj[static_cast<std::size_t>(src)];
  const double e_self = leaky(pd.dot(l.a_dst) + pd.dot(l.a_src), slope);
  const double e_edge = leaky(pd.dot(l.a_dst) + ps.dot(l.a_src), slope) * std::log1p(count);
  const double mx = std::max(e_self, e_edge);
  const double z = std::exp(e_self - mx) + std::exp(e_edge - mx);
  const double a_self = std::exp(e_self - mx) / z;
  const double a_edge = std::exp(e_edge - mx) / z;
  out[static_cast<std::size_t>(dst)] = a_self * times(x[static_cast<std::size_t>(dst)], l.w[0]) +
                                       a_edge * times(x[static_cast<std::size_t>(src)], l.w[static_cast<std::size_t>(relation)]);
  for (auto& v : out) v = v.unaryExpr([](double t) { return elu(t); });
  return out;
}

struct TeamGatLayer {
  MatrixXd w;
  VectorXd a_dst, a_src;
  double rate_scale = 1.0;
};

/// Team GAT layer on two teams with one winning-rate edge src -> dst.
inline std::array<VectorXd, 2> two_node_team_gat(const std::array<VectorXd, 2>& x, const TeamGatLayer& l, int src,
                                                double rate, bool rate_bias, bool activate, double slope) {
  const int dst = 1 - src;
  std::array<VectorXd, 2> h{times(x[0], l.w), times(x[1], l.w)};
  std::array<VectorXd, 2> out;
  out[static_cast<std::size_t>(src)] = h[static_cast<std::size_t>(src)];
  const auto& hd = h[static_cast<std::size_t>(dst)];
  const auto& hs = h[static_cast<std::size_t>(src)];
  const double e_self = leaky(hd.dot(l.a_dst) + hd.dot(l.a_src), slope);
  const double e_edge = leaky(hd.dot(l.a_dst) + hs.dot(l.a_src), slope) + (rate_bias ? l.rate_scale * rate : 0.0);
  const double mx = std::max(e_self, e_edge);
  const double z = std::exp(e_self - mx) + std::exp(e_edge - mx);
  out[static_cast<std::size_t>(dst)] = (std::exp(e_self - mx) / z) * hd + (std::exp(e_edge - mx) / z) * hs;
  if (activate)
    for (auto& v : out) v = v.unaryExpr([](double t) { return elu(t); });
  return out;
}

/// Brute-force confusion matrix: cell (true, predicted).
inline std::array<std::array<std::size_t, 3>, 3> confusion(std::span<const higformer::Outcome> pred,
                                                           std::span<const higformer::Outcome> truth) {
  std::array<std::array<std::size_t, 3>, 3> m{};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ++m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  }
  return m;
}

/// Central finite-difference check of every sampled entry of every listed slot.
/// Returns the worst per-slot relative error ||g_a - g_n|| / max(||g_a||, ||g_n||, floor).
inline double gradient_check(higformer::nn::ParameterStore& store, const std::vector<int>& slots,
                             const std::function<double()>& loss,
                             const std::function<higformer::nn::Gradients()>& analytic, std::size_t max_entries,
                             std::uint64_t seed, double step = 1e-5, double floor = 1e-7) {
  const auto grads = analytic();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int slot : slots) {
    auto& value = store.at(slot).value;
    const auto n = static_cast<std::size_t>(value.size());
    std::vector<std::size_t> entries(n);
    for (std::size_t i = 0; i < n; ++i) entries[i] = i;
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(std::min(n, max_entries));
    VectorXd ga(static_cast<Eigen::Index>(entries.size())), gn(ga.size());
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto idx = static_cast<Eigen::Index>(entries[k]);
      const double orig = value.data()[idx];
      value.data()[idx] = orig + step;
      const double up = loss();
      value.data()[idx] = orig - step;
      const double down = loss();
      value.data()[idx] = orig;
      gn[static_cast<Eigen::Index>(k)] = (up - down) / (2.0 * step);
      ga[static_cast<Eigen::Index>(k)] = grads.touched(slot) ? grads[slot].data()[idx] : 0.0;
    }
    const double denom = std::max({ga.norm(), gn.norm(), floor});
    worst = std::max(worst, (ga - gn).norm() / denom);
  }
  return worst;
}

}  // namespace oracle
