#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "gridshed/network.hpp"

namespace gridshed {

using ComplexMatrix = Eigen::MatrixXcd;
using RealMatrix = Eigen::MatrixXd;

/// Bus admittance matrix over in-service lines (pi model, charging split
/// evenly). Throws InvalidInput on a zero-impedance branch.
ComplexMatrix build_admittance(const Network& net);

/// Schur-complement elimination of every node not listed in `keep`. The result
/// is ordered as `keep`. Throws DegenerateCase if the eliminated block is
/// singular.
ComplexMatrix kron_reduce(const ComplexMatrix& y, std::span<const int> keep);

enum class ShiftKind { Adjacency, AdmittanceWeighted };

/// Symmetric graph shift operator with the sparsity of the in-service line
/// set. The admittance-weighted form uses |Y_ij| divided by the spectral
/// radius of that weight matrix.
RealMatrix graph_shift_operator(const Network& net,
                                ShiftKind kind = ShiftKind::AdmittanceWeighted);

}  // namespace gridshed
