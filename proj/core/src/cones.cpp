#include "cones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexmarket::detail {

int ConeLayout::dim() const {
  int d = linear;
  for (int q : soc_sizes) d += q;
  return d;
}

void ConeLayout::finalize() {
  soc_start.clear();
  int off = linear;
  for (int q : soc_sizes) {
    soc_start.push_back(off);
    off += q;
  }
}

namespace {

double soc_det(const double* x, int q) {
  double t = 0.0;
  for (int i = 1; i < q; ++i) t += x[i] * x[i];
  return x[0] * x[0] - t;
}

}  // namespace

bool NtScaling::update(const Vec& s, const Vec& z) {
  const ConeLayout& k = *k_;
  lambda_.resize(k.dim());
  w2_.resize(k.linear);
  w_.resize(k.linear);
  for (int i = 0; i < k.linear; ++i) {
    if (!(s[i] > 0) || !(z[i] > 0)) return false;
    w2_[i] = s[i] / z[i];
    w_[i] = std::sqrt(w2_[i]);
    lambda_[i] = std::sqrt(s[i] * z[i]);
  }
  const std::size_t nc = k.soc_sizes.size();
  eta_.resize(nc);
  wbar_.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const int q = k.soc_sizes[c];
    const int o = k.soc_start[c];
    const double sres = soc_det(s.data() + o, q);
    const double zres = soc_det(z.data() + o, q);
    if (!(sres > 0) || !(zres > 0) || s[o] <= 0 || z[o] <= 0) return false;
    const double sn = std::sqrt(sres), zn = std::sqrt(zres);
    Vec sb = s.segment(o, q) / sn;
    Vec zb = z.segment(o, q) / zn;
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    Vec wb(q);
    wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    for (int i = 1; i < q; ++i) wb[i] = (sb[i] - zb[i]) / (2.0 * gamma);
    eta_[c] = std::sqrt(sn / zn);
    wbar_[c] = std::move(wb);
  }
  // lambda = W z
  Vec wz = apply_w(z);
  lambda_ = wz;
  return true;
}

Vec NtScaling::apply_w(const Vec& v) const {
  const ConeLayout& k = *k_;
  Vec out(v.size());
  for (int i = 0; i < k.linear; ++i) out[i] = w_[i] * v[i];
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    const Vec& w = wbar_[c];
    double w1v1 = 0.0;
    for (int i = 1; i < q; ++i) w1v1 += w[i] * v[o + i];
    const double f = v[o] + w1v1 / (1.0 + w[0]);
    out[o] = eta_[c] * (w[0] * v[o] + w1v1);
    for (int i = 1; i < q; ++i) out[o + i] = eta_[c] * (v[o + i] + f * w[i]);
  }
  return out;
}

void NtScaling::soc_winv(std::size_t c, const double* v, double* out) const {
  const int q = k_->soc_sizes[c];
  const Vec& w = wbar_[c];
  double w1v1 = 0.0;
  for (int i = 1; i < q; ++i) w1v1 += w[i] * v[i];
  const double f = -v[0] + w1v1 / (1.0 + w[0]);
  out[0] = (w[0] * v[0] - w1v1) / eta_[c];
  for (int i = 1; i < q; ++i) out[i] = (v[i] + f * w[i]) / eta_[c];
}

Vec NtScaling::apply_winv(const Vec& v) const {
  const ConeLayout& k = *k_;
  Vec out(v.size());
  for (int i = 0; i < k.linear; ++i) out[i] = v[i] / w_[i];
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int o = k.soc_start[c];
    soc_winv(c, v.data() + o, out.data() + o);
  }
  return out;
}

Vec NtScaling::apply_w2(const Vec& v) const {
  const ConeLayout& k = *k_;
  Vec out(v.size());
  for (int i = 0; i < k.linear; ++i) out[i] = w2_[i] * v[i];
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    const Vec& w = wbar_[c];
    const double e2 = eta_[c] * eta_[c];
    const double wv = w.dot(v.segment(o, q));
    out[o] = e2 * (2.0 * w[0] * wv - v[o]);
    for (int i = 1; i < q; ++i) out[o + i] = e2 * (2.0 * w[i] * wv + v[o + i]);
  }
  return out;
}

std::vector<double> NtScaling::soc_w2(int c) const {
  const int q = k_->soc_sizes[static_cast<std::size_t>(c)];
  const Vec& w = wbar_[static_cast<std::size_t>(c)];
  const double e2 = eta_[static_cast<std::size_t>(c)] * eta_[static_cast<std::size_t>(c)];
  std::vector<double> m(static_cast<std::size_t>(q * q));
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < q; ++j) {
      double v = 2.0 * w[i] * w[j];
      if (i == j) v += (i == 0) ? -1.0 : 1.0;
      m[static_cast<std::size_t>(i * q + j)] = e2 * v;
    }
  }
  return m;
}

Vec jordan_product(const ConeLayout& k, const Vec& u, const Vec& v) {
  Vec out(u.size());
  for (int i = 0; i < k.linear; ++i) out[i] = u[i] * v[i];
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    out[o] = u.segment(o, q).dot(v.segment(o, q));
    for (int i = 1; i < q; ++i) out[o + i] = u[o] * v[o + i] + v[o] * u[o + i];
  }
  return out;
}

Vec jordan_divide(const ConeLayout& k, const Vec& lambda, const Vec& v) {
  Vec out(v.size());
  for (int i = 0; i < k.linear; ++i) out[i] = v[i] / lambda[i];
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    const double det = soc_det(lambda.data() + o, q);
    double l1v1 = 0.0;
    for (int i = 1; i < q; ++i) l1v1 += lambda[o + i] * v[o + i];
    const double x0 = (lambda[o] * v[o] - l1v1) / det;
    out[o] = x0;
    for (int i = 1; i < q; ++i) out[o + i] = (v[o + i] - x0 * lambda[o + i]) / lambda[o];
  }
  return out;
}

Vec identity_element(const ConeLayout& k) {
  Vec e = Vec::Zero(k.dim());
  for (int i = 0; i < k.linear; ++i) e[i] = 1.0;
  for (int o : k.soc_start) e[o] = 1.0;
  return e;
}

double min_eigenvalue(const ConeLayout& k, const Vec& s) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k.linear; ++i) m = std::min(m, s[i]);
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    m = std::min(m, s[o] - s.segment(o + 1, q - 1).norm());
  }
  return m;
}

double max_step(const ConeLayout& k, const Vec& x, const Vec& dx, double cap) {
  double alpha = cap;
  for (int i = 0; i < k.linear; ++i) {
    if (dx[i] < 0) alpha = std::min(alpha, -x[i] / dx[i]);
  }
  for (std::size_t c = 0; c < k.soc_sizes.size(); ++c) {
    const int q = k.soc_sizes[c], o = k.soc_start[c];
    const double x0 = x[o], d0 = dx[o];
    double xx = 0.0, xd = 0.0, dd = 0.0;
    for (int i = 1; i < q; ++i) {
      xx += x[o + i] * x[o + i];
      xd += x[o + i] * dx[o + i];
      dd += dx[o + i] * dx[o + i];
    }
    // f(a) = (x0 + a d0)^2 - ||x1 + a d1||^2 = qa a^2 + 2 qb a + qc
    const double qa = d0 * d0 - dd;
    const double qb = x0 * d0 - xd;
    const double qc = std::max(x0 * x0 - xx, 0.0);
    if (d0 < 0) alpha = std::min(alpha, -x0 / d0);
    const double scale = std::max({std::abs(qa), std::abs(qb), qc, 1e-300});
    if (std::abs(qa) <= 1e-15 * scale) {
      if (qb < 0) alpha = std::min(alpha, -qc / (2.0 * qb));
      continue;
    }
    const double disc = qb * qb - qa * qc;
    if (disc < 0) continue;
    const double sq = std::sqrt(disc);
    const double t = -(qb + (qb >= 0 ? sq : -sq));
    double r1 = t / qa;
    double r2 = (t != 0.0) ? qc / t : std::numeric_limits<double>::infinity();
    for (double r : {r1, r2}) {
      if (r >= 0 && std::isfinite(r)) alpha = std::min(alpha, r);
    }
  }
  return std::max(alpha, 0.0);
}

}  // namespace flexmarket::detail
