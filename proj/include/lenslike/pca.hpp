#pragma once

#include <Eigen/Core>

namespace lenslike {

// Principal components of row-vector samples.
struct PcaModel {
  Eigen::VectorXd mean;              // D
  Eigen::MatrixXd components;        // k x D, orthonormal rows
  Eigen::VectorXd singular_values;   // k, descending
  bool rank_deficient = false;       // fewer than k nonzero singular values

  Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;          // N x k
  Eigen::MatrixXd inverse_transform(const Eigen::MatrixXd& z) const;  // N x D
};

struct PcaResult {
  PcaModel model;
  Eigen::MatrixXd scores;  // N x k
};

// Centres by column means and projects on the top-k right singular vectors.
// Each component is signed so that its largest-magnitude entry is positive.
// Components beyond the numerical rank are zero rows.
PcaResult pca_fit_transform(const Eigen::MatrixXd& x, int k);

}  // namespace lenslike
