#pragma once

#include <Eigen/Sparse>

#include "xbarsim/core.hpp"

namespace xbarsim {

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LinearSolverKind {
  automatic,  // direct below the node threshold, iterative above
  direct,     // sparse LDLT, symbolic factorization reused
  iterative,  // conjugate gradient with incomplete-Cholesky preconditioner
};

struct IterationSettings {
  double rel_tol = 1e-4;        // per-node relative voltage change
  int max_iterations = 200;
  double damping = 1.0;         // (0,1]; geometric blend of conductances
  double residual_tol_scale = 1e-10;  // linear residual bound, x max|source|
  LinearSolverKind linear_solver = LinearSolverKind::automatic;
  // Nodes at or above this count switch the automatic choice to the
  // iterative backend (factor fill of the direct solver grows past the
  // point where CG + IC(0) wins on memory).
  int iterative_threshold_nodes = 500000;

  bool operator==(const IterationSettings&) const = default;
};

/// The 2mn-node conductance system from per-junction current balance.
/// Node ordering: WL nodes first (flat index i*n + j), then BL nodes
/// (m*n + i*n + j). The matrix is symmetric positive definite and is
/// stored compressed; cell conductances can be re-stamped in place so
/// the sparsity pattern survives across fixed-point iterations.
class NodalSystem {
 public:
  NodalSystem(const ArrayConfig& cfg, const TerminalConfig& term,
              const Grid& cell_conductance);

  int rows_m() const { return m_; }
  int cols_n() const { return n_; }
  int dimension() const { return 2 * m_ * n_; }
  int wl_index(int i, int j) const { return i * n_ + j; }
  int bl_index(int i, int j) const { return m_ * n_ + i * n_ + j; }

  const Eigen::SparseMatrix<double>& conductance() const { return mat_; }
  const Eigen::VectorXd& source() const { return rhs_; }

  /// Replace every cell stamp with new conductances; line, sense and
  /// source entries are untouched. Shape must match construction.
  void update_cell_conductances(const Grid& cell_conductance);

 private:
  int m_, n_;
  Eigen::SparseMatrix<double> mat_;
  Eigen::VectorXd rhs_;
  std::vector<double> base_values_;        // matrix values without cells
  std::vector<Eigen::Index> diag_wl_pos_, diag_bl_pos_;
  std::vector<Eigen::Index> off_wb_pos_, off_bw_pos_;
};

/// Conductance used for a zero-resistance line segment.
inline constexpr double g_short_circuit = 1e12;

NodalSystem assemble(const ArrayConfig& cfg, const TerminalConfig& term,
                     const Grid& cell_conductance);

/// Solve conductance * v = source to an infinity-norm residual of
/// residual_tol_scale * max|source| (or the attainable floor set by the
/// matrix scale, whichever is larger). Memory stays O(nnz + factor fill);
/// no dense matrix is ever formed. Throws SolverError if the residual
/// bound cannot be met.
Eigen::VectorXd solve_linear(const NodalSystem& sys,
                             const IterationSettings& settings = {});

/// Full nonlinear read solve: chord-linearize every cell, solve the
/// nodal system, update cell voltages, repeat until the largest relative
/// node-voltage change falls below rel_tol. An oscillation guard halves
/// the damping once if the change fails to shrink for 10 consecutive
/// iterations. Without a selector this reduces to a single linear solve.
/// Never throws for convergence failure: inspect SolveResult.converged.
SolveResult solve_nonlinear(const ArrayConfig& cfg, const TerminalConfig& term,
                            const IterationSettings& settings = {});

/// Segment currents recovered from a converged solve.
/// i_wl is m x (n+1): entry j is the current flowing left-to-right into
/// WL node j (j = 0 is the WL1 sense branch, j = n the WL2 one).
/// i_bl is (m+1) x n: entry i is the current flowing top-to-bottom into
/// BL node i (i = 0 the BL1 sense branch, i = m the BL2 one).
struct LineCurrents {
  Grid i_wl;  // m x (n+1)
  Grid i_bl;  // (m+1) x n
};

LineCurrents line_currents(const SolveResult& result, const ArrayConfig& cfg,
                           const TerminalConfig& term);

}  // namespace xbarsim
