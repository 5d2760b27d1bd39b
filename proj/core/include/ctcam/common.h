#ifndef CTCAM_COMMON_H_
#define CTCAM_COMMON_H_

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ctcam {

// Row-major so that a row is one frame, matching the on-disk layouts.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

// Failure classes; the CLI maps them onto process exit codes.
enum class ErrorKind {
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void ThrowUsage(const std::string& what);
[[noreturn]] void ThrowData(const std::string& what);
[[noreturn]] void ThrowNumerical(const std::string& what);

/// log(exp(a) + exp(b)) without overflow; either argument may be kLogZero.
inline double LogAdd(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

/// Row-wise log-softmax of a T×L logit matrix.
Matrix LogSoftmaxRows(const Matrix& logits);

/// Row-wise softmax of a T×L logit matrix.
Matrix SoftmaxRows(const Matrix& logits);

// A per-frame label sequence, e.g. the output of a forced alignment.
using ForcedAlignment = std::vector<int>;

}  // namespace ctcam

#endif  // CTCAM_COMMON_H_
