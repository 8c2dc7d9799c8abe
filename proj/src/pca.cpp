#include "lenslike/pca.hpp"

#include <algorithm>

#include <Eigen/SVD>

#include "lenslike/errors.hpp"

namespace lenslike {

Eigen::MatrixXd PcaModel::transform(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw Error(ErrorCode::ShapeMismatch, "PCA input width differs");
  return (x.rowwise() - mean.transpose()) * components.transpose();
}

Eigen::MatrixXd PcaModel::inverse_transform(const Eigen::MatrixXd& z) const {
  if (z.cols() != components.rows())
    throw Error(ErrorCode::ShapeMismatch, "PCA score width differs");
  return (z * components).rowwise() + mean.transpose();
}

PcaResult pca_fit_transform(const Eigen::MatrixXd& x, int k) {
  const auto n = x.rows();
  const auto d = x.cols();
  if (n < 2) throw Error(ErrorCode::InvalidArgument, "PCA needs at least two samples");
  if (k < 1 || k > std::min(n, d))
    throw Error(ErrorCode::InvalidArgument, "PCA rank k must lie in [1, min(N, D)]");

  PcaModel model;
  model.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centred = x.rowwise() - model.mean.transpose();
  const Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = sv.size() > 0 ? sv(0) * static_cast<double>(std::max(n, d)) *
                                         Eigen::NumTraits<double>::epsilon()
                                   : 0.0;

  model.components = Eigen::MatrixXd::Zero(k, d);
  model.singular_values = Eigen::VectorXd::Zero(k);
  for (int i = 0; i < k; ++i) {
    if (i >= sv.size() || !(sv(i) > tol)) {
      model.rank_deficient = true;
      continue;
    }
    Eigen::VectorXd v = svd.matrixV().col(i);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    model.components.row(i) = v.transpose();
    model.singular_values(i) = sv(i);
  }
  PcaResult out;
  out.scores = model.transform(x);
  out.model = std::move(model);
  return out;
}

}  // namespace lenslike
