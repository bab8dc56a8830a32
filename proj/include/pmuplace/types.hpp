#pragma once

#include <complex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace pmuplace {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;
using SparseCMatrix = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

}  // namespace pmuplace
