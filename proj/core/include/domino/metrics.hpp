#pragma once

#include <Eigen/Core>

namespace domino::evalx {

// Median absolute error, median(|y - yhat|). Even lengths average the two
// central order statistics. InvalidArgument on empty or mismatched input.
double mae(const Eigen::VectorXd& y, const Eigen::VectorXd& yhat);

// Median of a vector by selection; same even-length convention as mae().
double median(Eigen::VectorXd values);

}  // namespace domino::evalx
