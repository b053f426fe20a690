#pragma once

#include <stdexcept>
#include <string>

namespace charfactor {

// Problems with the input data itself: missing columns, unbalanced rows,
// collinear characteristics. The CLI maps these to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical degeneracy discovered while fitting or testing (exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingColumn : public DataError {
 public:
  explicit MissingColumn(const std::string& column)
      : DataError("missing column '" + column + "'"), column_(column) {}
  const std::string& column() const { return column_; }

 private:
  std::string column_;
};

class UnbalancedPanel : public DataError {
 public:
  using DataError::DataError;
};

class MalformedInput : public DataError {
 public:
  using DataError::DataError;
};

class RankDeficientCharacteristics : public DataError {
 public:
  RankDeficientCharacteristics(int period, const std::string& label)
      : DataError("characteristics are rank deficient in period " + std::to_string(period) +
                  " ('" + label + "')"),
        period_(period) {}
  int period() const { return period_; }

 private:
  int period_;
};

class NonPositiveWeight : public DataError {
 public:
  using DataError::DataError;
};

class InvalidArgument : public NumericError {
 public:
  using NumericError::NumericError;
};

class IncompatibleDimensions : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateSpectrum : public NumericError {
 public:
  using NumericError::NumericError;
};

class RankDeficientLoadings : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularFactorGram : public NumericError {
 public:
  using NumericError::NumericError;
};

class DegenerateOrthoComplement : public NumericError {
 public:
  using NumericError::NumericError;
};

class ZeroVariance : public NumericError {
 public:
  ZeroVariance(long row, long col)
      : NumericError("zero variance in tested cell (" + std::to_string(row) + ", " +
                     std::to_string(col) + ")"),
        row_(row), col_(col) {}
  long row() const { return row_; }
  long col() const { return col_; }

 private:
  long row_;
  long col_;
};

class SingularVariance : public NumericError {
 public:
  explicit SingularVariance(int l)
      : NumericError("gamma row covariance is singular for characteristic " + std::to_string(l)),
        row_(l) {}
  int row() const { return row_; }

 private:
  int row_;
};

}  // namespace charfactor
