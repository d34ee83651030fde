#include "ldl.hpp"

#include <cmath>

#include "flexmarket/error.hpp"

namespace flexmarket::detail {

void LdlFactor::analyze(const UpperCsc& a) {
  n_ = a.n;
  etree_.assign(n_, -1);
  lnz_.assign(n_, 0);
  iwork_.assign(n_, 0);
  for (int j = 0; j < n_; ++j) {
    iwork_[j] = j;
    for (int p = a.col_ptr[j]; p < a.col_ptr[j + 1]; ++p) {
      int i = a.row_idx[p];
      if (i > j) throw Error("LDL input is not upper triangular");
      while (iwork_[i] != j) {
        if (etree_[i] == -1) etree_[i] = j;
        ++lnz_[i];
        iwork_[i] = j;
        i = etree_[i];
      }
    }
  }
  lp_.assign(n_ + 1, 0);
  for (int i = 0; i < n_; ++i) lp_[i + 1] = lp_[i] + lnz_[i];
  li_.assign(lp_[n_], 0);
  lx_.assign(lp_[n_], 0.0);
  d_.assign(n_, 0.0);
  dinv_.assign(n_, 0.0);
  marker_.assign(n_, 0);
  y_.assign(n_, 0.0);
  yidx_.assign(n_, 0);
  elim_.assign(n_, 0);
  next_.assign(n_, 0);
}

int LdlFactor::factor(const UpperCsc& a, const std::vector<int>& signs, double eps, double reg) {
  int bumped = 0;
  for (int i = 0; i < n_; ++i) {
    marker_[i] = 0;
    y_[i] = 0.0;
    next_[i] = lp_[i];
  }
  for (int k = 0; k < n_; ++k) {
    int nnz_y = 0;
    d_[k] = 0.0;
    for (int p = a.col_ptr[k]; p < a.col_ptr[k + 1]; ++p) {
      const int b = a.row_idx[p];
      if (b == k) {
        d_[k] = a.values[p];
        continue;
      }
      y_[b] = a.values[p];
      if (marker_[b]) continue;
      marker_[b] = 1;
      elim_[0] = b;
      int ne = 1;
      int nxt = etree_[b];
      while (nxt != -1 && nxt < k) {
        if (marker_[nxt]) break;
        marker_[nxt] = 1;
        elim_[ne++] = nxt;
        nxt = etree_[nxt];
      }
      while (ne > 0) yidx_[nnz_y++] = elim_[--ne];
    }
    for (int i = nnz_y - 1; i >= 0; --i) {
      const int c = yidx_[i];
      const int tmp = next_[c];
      const double yc = y_[c];
      for (int j = lp_[c]; j < tmp; ++j) y_[li_[j]] -= lx_[j] * yc;
      li_[tmp] = k;
      lx_[tmp] = yc * dinv_[c];
      d_[k] -= yc * lx_[tmp];
      ++next_[c];
      y_[c] = 0.0;
      marker_[c] = 0;
    }
    if (d_[k] * signs[k] <= eps) {
      d_[k] = signs[k] * reg;
      ++bumped;
    }
    dinv_[k] = 1.0 / d_[k];
  }
  return bumped;
}

void LdlFactor::solve(std::vector<double>& x) const {
  for (int i = 0; i < n_; ++i) {
    const double xi = x[i];
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) x[li_[j]] -= lx_[j] * xi;
  }
  for (int i = 0; i < n_; ++i) x[i] *= dinv_[i];
  for (int i = n_ - 1; i >= 0; --i) {
    double s = x[i];
    for (int j = lp_[i]; j < lp_[i + 1]; ++j) s -= lx_[j] * x[li_[j]];
    x[i] = s;
  }
}

}  // namespace flexmarket::detail
