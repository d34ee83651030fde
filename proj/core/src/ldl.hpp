#pragma once

// Sparse LDL^T for quasi-definite matrices (up-looking, elimination-tree based).

#include <vector>

namespace flexmarket::detail {

/// Upper triangle of a symmetric matrix in compressed-column form.
struct UpperCsc {
  int n = 0;
  std::vector<int> col_ptr;
  std::vector<int> row_idx;
  std::vector<double> values;
};

class LdlFactor {
 public:
  /// Symbolic analysis; the pattern must stay fixed across `factor` calls.
  void analyze(const UpperCsc& a);
  /// Numeric factorization. Pivots whose sign disagrees with `signs` (or that are
  /// tiny) are replaced by signs[k] * reg. Returns the number of such pivots.
  int factor(const UpperCsc& a, const std::vector<int>& signs, double eps, double reg);
  /// In-place solve of L D L^T x = b.
  void solve(std::vector<double>& x) const;
  int size() const { return n_; }

 private:
  int n_ = 0;
  std::vector<int> etree_;
  std::vector<int> lnz_;
  std::vector<int> lp_;
  std::vector<int> li_;
  std::vector<double> lx_;
  std::vector<double> d_;
  std::vector<double> dinv_;
  // workspace
  std::vector<int> iwork_;
  std::vector<char> marker_;
  std::vector<double> y_;
  std::vector<int> yidx_;
  std::vector<int> elim_;
  std::vector<int> next_;
};

}  // namespace flexmarket::detail
