#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "hyperctr/errors.hpp"
#include "hyperctr/numerics/matrix.hpp"

namespace hyperctr {

enum class NodeKind : std::uint8_t { user, item };

// Hyperedges are stored as sorted node lists; the incidence matrix H is the
// dense view of the same information.
struct Hypergraph {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::size_t>> edges;
  std::vector<double> weights;
  NodeKind kind = NodeKind::item;

  std::size_t num_edges() const { return edges.size(); }

  // Appends an edge after sorting and deduplicating its members.
  void add_edge(std::vector<std::size_t> nodes, double weight = 1.0) {
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    edges.push_back(std::move(nodes));
    weights.push_back(weight);
  }

  void validate() const {
    if (weights.size() != edges.size()) throw StructuralError("edge weight count differs from edge count");
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (edges[e].empty()) throw StructuralError("hyperedge " + std::to_string(e) + " is empty");
      if (!(weights[e] > 0.0) || !std::isfinite(weights[e])) {
        throw StructuralError("hyperedge " + std::to_string(e) + " has non-positive weight");
      }
      for (std::size_t k = 0; k < edges[e].size(); ++k) {
        if (edges[e][k] >= num_nodes) {
          throw StructuralError("hyperedge " + std::to_string(e) + " references node " + std::to_string(edges[e][k]) +
                                " of " + std::to_string(num_nodes));
        }
        if (k > 0 && edges[e][k] <= edges[e][k - 1]) {
          throw StructuralError("hyperedge " + std::to_string(e) + " members not sorted and unique");
        }
      }
    }
  }

  Matrix incidence() const {
    Matrix h = Matrix::Zero(static_cast<Index>(num_nodes), static_cast<Index>(edges.size()));
    for (std::size_t e = 0; e < edges.size(); ++e) {
      for (std::size_t v : edges[e]) h(static_cast<Index>(v), static_cast<Index>(e)) = 1.0;
    }
    return h;
  }

  // Builds a graph from a dense 0/1 incidence matrix.
  static Hypergraph from_incidence(const Matrix& h, std::vector<double> w = {}) {
    Hypergraph g;
    g.num_nodes = static_cast<std::size_t>(h.rows());
    for (Index e = 0; e < h.cols(); ++e) {
      std::vector<std::size_t> nodes;
      for (Index v = 0; v < h.rows(); ++v) {
        if (h(v, e) != 0.0 && h(v, e) != 1.0) throw StructuralError("incidence entries must be 0 or 1");
        if (h(v, e) == 1.0) nodes.push_back(static_cast<std::size_t>(v));
      }
      g.edges.push_back(std::move(nodes));
    }
    g.weights = w.empty() ? std::vector<double>(g.edges.size(), 1.0) : std::move(w);
    g.validate();
    return g;
  }
};

struct Degrees {
  std::vector<double> node;  // sum of weights of incident edges
  std::vector<double> edge;  // member count
};

inline Degrees degrees(const Hypergraph& g) {
  g.validate();
  Degrees d{std::vector<double>(g.num_nodes, 0.0), std::vector<double>(g.num_edges(), 0.0)};
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    d.edge[e] = static_cast<double>(g.edges[e].size());
    for (std::size_t v : g.edges[e]) d.node[v] += g.weights[e];
  }
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    if (d.node[v] <= 0.0) throw StructuralError("node " + std::to_string(v) + " has zero degree");
  }
  return d;
}

// Dense normalized propagation matrix Dv^-1/2 H W De^-1 H^T Dv^-1/2.
inline Matrix propagation_matrix(const Hypergraph& g) {
  const Degrees d = degrees(g);
  const auto n = static_cast<Index>(g.num_nodes);
  Matrix a = Matrix::Zero(n, n);
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    const double c = g.weights[e] / d.edge[e];
    for (std::size_t u : g.edges[e]) {
      for (std::size_t v : g.edges[e]) {
        a(static_cast<Index>(u), static_cast<Index>(v)) += c / std::sqrt(d.node[u] * d.node[v]);
      }
    }
  }
  return a;
}

// Graph restricted to nodes touched by at least one edge, with the mapping
// between local and original node ids.
struct CompactGraph {
  Hypergraph graph;
  std::vector<std::size_t> nodes;  // local -> original
  std::vector<long> local;         // original -> local, -1 when dropped
};

inline CompactGraph compact(const Hypergraph& g) {
  g.validate();
  CompactGraph c;
  c.local.assign(g.num_nodes, -1);
  for (const auto& edge : g.edges) {
    for (std::size_t v : edge) c.local[v] = 0;
  }
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    if (c.local[v] == 0) {
      c.local[v] = static_cast<long>(c.nodes.size());
      c.nodes.push_back(v);
    }
  }
  c.graph.num_nodes = c.nodes.size();
  c.graph.kind = g.kind;
  c.graph.weights = g.weights;
  c.graph.edges.reserve(g.num_edges());
  for (const auto& edge : g.edges) {
    std::vector<std::size_t> mapped;
    mapped.reserve(edge.size());
    for (std::size_t v : edge) mapped.push_back(static_cast<std::size_t>(c.local[v]));
    c.graph.edges.push_back(std::move(mapped));
  }
  return c;
}

// Uniformly subsamples members of hyperedges larger than `cap`.
inline Hypergraph sample_neighbors(const Hypergraph& g, std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw ContractError("neighbor sample size must be >= 1");
  Hypergraph out = g;
  std::mt19937_64 rng(seed);
  for (auto& edge : out.edges) {
    if (edge.size() <= cap) continue;
    std::vector<std::size_t> pick;
    std::sample(edge.begin(), edge.end(), std::back_inserter(pick), cap, rng);
    edge = std::move(pick);
  }
  return out;
}

// Sparse form of the propagation matrix, applied as two incidence sweeps.
class PropagationOperator {
 public:
  explicit PropagationOperator(const Hypergraph& g) : edges_(g.edges) {
    const Degrees d = degrees(g);
    node_scale_.resize(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) node_scale_[v] = 1.0 / std::sqrt(d.node[v]);
    edge_scale_.resize(g.num_edges());
    for (std::size_t e = 0; e < g.num_edges(); ++e) edge_scale_[e] = g.weights[e] / d.edge[e];
  }

  std::size_t num_nodes() const { return node_scale_.size(); }

  Matrix apply(const Matrix& x) const {
    if (static_cast<std::size_t>(x.rows()) != num_nodes()) {
      throw ShapeError("propagation over " + std::to_string(num_nodes()) + " nodes applied to " + shape_of(x));
    }
    Matrix scaled = x;
    for (Index v = 0; v < scaled.rows(); ++v) scaled.row(v) *= node_scale_[static_cast<std::size_t>(v)];
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    Matrix pooled(1, x.cols());
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      pooled.setZero();
      for (std::size_t v : edges_[e]) pooled += scaled.row(static_cast<Index>(v));
      pooled *= edge_scale_[e];
      for (std::size_t v : edges_[e]) out.row(static_cast<Index>(v)) += pooled;
    }
    for (Index v = 0; v < out.rows(); ++v) out.row(v) *= node_scale_[static_cast<std::size_t>(v)];
    return out;
  }

 private:
  std::vector<std::vector<std::size_t>> edges_;
  std::vector<double> node_scale_;
  std::vector<double> edge_scale_;
};

// Debug dump, one `edge_id: node,node,...` line per hyperedge.
inline void write_edge_list(std::ostream& out, const Hypergraph& g) {
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    out << e << ':';
    for (std::size_t k = 0; k < g.edges[e].size(); ++k) out << (k == 0 ? " " : ",") << g.edges[e][k];
    out << '\n';
  }
}

}  // namespace hyperctr
