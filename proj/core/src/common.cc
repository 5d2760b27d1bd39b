#include "ctcam/common.h"

namespace ctcam {

void ThrowUsage(const std::string& what) { throw Error(ErrorKind::kUsage, what); }
void ThrowData(const std::string& what) { throw Error(ErrorKind::kData, what); }
void ThrowNumerical(const std::string& what) {
  throw Error(ErrorKind::kNumerical, what);
}

Matrix LogSoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double max = logits.row(t).maxCoeff();
    const double lse =
        max + std::log((logits.row(t).array() - max).exp().sum());
    out.row(t) = logits.row(t).array() - lse;
  }
  return out;
}

Matrix SoftmaxRows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index t = 0; t < logits.rows(); ++t) {
    const double max = logits.row(t).maxCoeff();
    out.row(t) = (logits.row(t).array() - max).exp();
    out.row(t) /= out.row(t).sum();
  }
  return out;
}

}  // namespace ctcam
