#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "invfrac/mesh.hpp"

namespace invfrac {

// Sorted set of node indices whose slope constraint u' = -1 is enforced.
// Each active node is a fully opened (zero inverse stretch) point of the
// layer.
struct ActiveSet {
  std::vector<int> nodes;  // ascending, unique

  bool contains(int k) const {
    return std::binary_search(nodes.begin(), nodes.end(), k);
  }
  void insert(int k) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), k);
    if (it == nodes.end() || *it != k) nodes.insert(it, k);
  }
  void erase(int k) {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), k);
    if (it != nodes.end() && *it == k) nodes.erase(it);
  }
  int size() const { return static_cast<int>(nodes.size()); }
  // Position of node k within the set, -1 if absent.
  int index_of(int k) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), k);
    if (it == nodes.end() || *it != k) return -1;
    return static_cast<int>(it - nodes.begin());
  }
  bool operator==(const ActiveSet&) const = default;
};

// Primal-dual state at one stretch value: nodal displacements and slopes of
// the rescaled inverse deformation, plus one multiplier per active node.
struct NodalState {
  double lambda = 1.0;
  Eigen::VectorXd u;   // nodal values, size n_nodes, u[0] = u[N] = 0
  Eigen::VectorXd up;  // nodal slopes, size n_nodes
  Eigen::VectorXd mu;  // multipliers, aligned with active.nodes
  ActiveSet active;

  static NodalState trivial(const Mesh& mesh, double lambda) {
    NodalState s;
    s.lambda = lambda;
    s.u = Eigen::VectorXd::Zero(mesh.n_nodes());
    s.up = Eigen::VectorXd::Zero(mesh.n_nodes());
    s.mu = Eigen::VectorXd();
    return s;
  }
};

// Gather the reduced solution vector from a nodal state.
inline Eigen::VectorXd pack(const Mesh& mesh, const NodalState& s) {
  Eigen::VectorXd d(mesh.dofs.n_dofs);
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    if (mesh.dofs.value_dof[k] >= 0) d[mesh.dofs.value_dof[k]] = s.u[k];
    d[mesh.dofs.slope_dof[k]] = s.up[k];
  }
  return d;
}

// Scatter a reduced solution vector back into nodal arrays; pinned boundary
// values are restored to exact zeros.
inline void unpack(const Mesh& mesh, const Eigen::VectorXd& d, NodalState& s) {
  if (d.size() != mesh.dofs.n_dofs)
    throw std::invalid_argument("unpack: vector size " + std::to_string(d.size()) +
                                " does not match dof count " +
                                std::to_string(mesh.dofs.n_dofs));
  s.u.resize(mesh.n_nodes());
  s.up.resize(mesh.n_nodes());
  for (int k = 0; k < mesh.n_nodes(); ++k) {
    s.u[k] = mesh.dofs.value_dof[k] >= 0 ? d[mesh.dofs.value_dof[k]] : 0.0;
    s.up[k] = d[mesh.dofs.slope_dof[k]];
  }
}

// Image of a state under the reflection s -> 1 - s, which leaves the energy
// invariant: values flip sign, slopes and multipliers transfer to the
// mirrored node.
inline NodalState reflect(const Mesh& mesh, const NodalState& s) {
  const int N = mesh.n_elements;
  NodalState r;
  r.lambda = s.lambda;
  r.u.resize(s.u.size());
  r.up.resize(s.up.size());
  for (int k = 0; k <= N; ++k) {
    r.u[k] = -s.u[N - k];
    r.up[k] = s.up[N - k];
  }
  for (int k : s.active.nodes) r.active.insert(N - k);
  r.mu.resize(s.mu.size());
  for (int i = 0; i < s.active.size(); ++i) {
    const int mirrored = N - s.active.nodes[i];
    r.mu[r.active.index_of(mirrored)] = s.mu[i];
  }
  return r;
}

}  // namespace invfrac
