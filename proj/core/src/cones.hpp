#pragma once

// Cone arithmetic for the product of a nonnegative orthant and second-order cones.

#include <vector>

#include <Eigen/Core>

namespace flexmarket::detail {

using Vec = Eigen::VectorXd;

struct ConeLayout {
  int linear = 0;                 // leading orthant rows
  std::vector<int> soc_sizes;     // following second-order cones
  std::vector<int> soc_start;

  int dim() const;
  int degree() const { return linear + static_cast<int>(soc_sizes.size()); }
  void finalize();
};

/// Nesterov-Todd scaling W with W z = W^{-1} s = lambda. W is symmetric.
class NtScaling {
 public:
  explicit NtScaling(const ConeLayout& k) : k_(&k) {}
  /// Returns false when s or z left the interior.
  bool update(const Vec& s, const Vec& z);
  Vec apply_w(const Vec& v) const;
  Vec apply_winv(const Vec& v) const;
  Vec apply_w2(const Vec& v) const;
  const Vec& lambda() const { return lambda_; }
  /// Diagonal of W^2 on the orthant part.
  const Vec& orthant_w2() const { return w2_; }
  /// W^{-1} restricted to orthant row i and to SOC block c (in and out hold q entries).
  double orthant_winv(int i) const { return 1.0 / w_[i]; }
  void soc_winv(std::size_t c, const double* in, double* out) const;
  /// Dense W^2 block of SOC number `c` (row-major, size q*q).
  std::vector<double> soc_w2(int c) const;

 private:
  const ConeLayout* k_;
  Vec w2_;  // s/z on the orthant
  Vec w_;   // sqrt(s/z)
  std::vector<double> eta_;
  std::vector<Vec> wbar_;
  Vec lambda_;
};

Vec jordan_product(const ConeLayout& k, const Vec& u, const Vec& v);
/// Solves lambda o x = v for x.
Vec jordan_divide(const ConeLayout& k, const Vec& lambda, const Vec& v);
Vec identity_element(const ConeLayout& k);
/// Smallest "eigenvalue" over all cones: s_i for the orthant, s0 - ||s1|| for SOCs.
double min_eigenvalue(const ConeLayout& k, const Vec& s);
/// Largest alpha in [0, cap] with x + alpha * dx in the cone.
double max_step(const ConeLayout& k, const Vec& x, const Vec& dx, double cap);

}  // namespace flexmarket::detail
