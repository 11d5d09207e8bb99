#include "calibr8/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace calibr8::optim {

Result nelder_mead(const std::function<double(const Vector&)>& f, const Vector& x0, const Vector& step,
                   const Vector& lo, const Vector& hi, int max_evals, double ftol) {
  const Eigen::Index d = x0.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  Result res;
  auto eval = [&](const Vector& x) {
    ++res.evaluations;
    double v = f(x);
    return std::isnan(v) ? inf : v;
  };
  auto clamp = [&](const Vector& x) -> Vector { return x.cwiseMax(lo).cwiseMin(hi); };

  std::vector<Vector> pts;
  std::vector<double> vals;
  pts.push_back(clamp(x0));
  vals.push_back(eval(pts[0]));
  for (Eigen::Index k = 0; k < d && res.evaluations < max_evals; ++k) {
    Vector p = pts[0];
    p[k] += step[k];
    if (p[k] > hi[k]) p[k] = pts[0][k] - step[k];
    p = clamp(p);
    pts.push_back(p);
    vals.push_back(eval(p));
  }
  if (static_cast<Eigen::Index>(pts.size()) < d + 1) {
    auto best = std::min_element(vals.begin(), vals.end()) - vals.begin();
    res.x = pts[static_cast<std::size_t>(best)];
    res.value = vals[static_cast<std::size_t>(best)];
    return res;
  }

  std::vector<std::size_t> order(pts.size());
  while (res.evaluations < max_evals) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    const std::size_t best = order.front(), worst = order.back(), second = order[order.size() - 2];
    if (std::isfinite(vals[worst]) && std::abs(vals[worst] - vals[best]) <= ftol * (1.0 + std::abs(vals[best]))) {
      double span = 0.0;
      for (const auto& p : pts) span = std::max(span, (p - pts[best]).cwiseAbs().maxCoeff());
      if (span < 1e-9 * (1.0 + pts[best].cwiseAbs().maxCoeff()) || vals[worst] == vals[best]) {
        res.converged = true;
        break;
      }
    }
    Vector centroid = Vector::Zero(d);
    for (std::size_t i : order)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    Vector xr = clamp(centroid + (centroid - pts[worst]));
    double fr = eval(xr);
    if (fr < vals[best]) {
      Vector xe = clamp(centroid + 2.0 * (centroid - pts[worst]));
      double fe = res.evaluations < max_evals ? eval(xe) : inf;
      if (fe < fr) {
        pts[worst] = xe;
        vals[worst] = fe;
      } else {
        pts[worst] = xr;
        vals[worst] = fr;
      }
      continue;
    }
    if (fr < vals[second]) {
      pts[worst] = xr;
      vals[worst] = fr;
      continue;
    }
    if (res.evaluations >= max_evals) break;
    bool outside = fr < vals[worst];
    Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid)) : Vector(centroid + 0.5 * (pts[worst] - centroid));
    double fc = eval(xc);
    if (fc < (outside ? fr : vals[worst])) {
      pts[worst] = xc;
      vals[worst] = fc;
      continue;
    }
    for (std::size_t i : order) {
      if (i == best || res.evaluations >= max_evals) continue;
      pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
      vals[i] = eval(pts[i]);
    }
  }
  auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.value = vals[best];
  return res;
}

Result bfgs_box(const GradObjective& f, const Vector& x0, const Vector& lo, const Vector& hi, int max_iter,
                double gtol) {
  const Eigen::Index d = x0.size();
  Result res;
  Vector x = x0.cwiseMax(lo).cwiseMin(hi);
  Vector g(d);
  double fx = f(x, &g);
  ++res.evaluations;
  Matrix H = Matrix::Identity(d, d);

  auto active = [&](const Vector& pt, const Vector& grad, Eigen::Index k) {
    return (pt[k] <= lo[k] && grad[k] > 0) || (pt[k] >= hi[k] && grad[k] < 0);
  };

  int stalls = 0;
  for (int it = 0; it < max_iter; ++it) {
    Vector pg = g;
    for (Eigen::Index k = 0; k < d; ++k)
      if (active(x, g, k)) pg[k] = 0.0;
    if (pg.lpNorm<Eigen::Infinity>() < gtol) {
      res.converged = true;
      break;
    }
    Vector p = -(H * pg);
    for (Eigen::Index k = 0; k < d; ++k)
      if (active(x, g, k)) p[k] = 0.0;
    if (p.dot(pg) >= 0) {
      H.setIdentity();
      p = -pg;
    }
    double t = 1.0;
    Vector xn(d), gn(d);
    double fn = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      xn = (x + t * p).cwiseMax(lo).cwiseMin(hi);
      fn = f(xn, &gn);
      ++res.evaluations;
      if (std::isfinite(fn) && fn <= fx + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (H.isIdentity()) break;
      H.setIdentity();
      continue;
    }
    Vector s = xn - x, y = gn - g;
    double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (it == 0) H *= sy / y.squaredNorm();
      double rho = 1.0 / sy;
      Matrix I = Matrix::Identity(d, d);
      H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) + rho * s * s.transpose();
    }
    stalls = (std::abs(fx - fn) <= 1e-12 * (1.0 + std::abs(fx))) ? stalls + 1 : 0;
    x = xn;
    g = gn;
    fx = fn;
    if (stalls >= 3) {
      res.converged = true;
      break;
    }
  }
  res.x = x;
  res.value = fx;
  return res;
}

}  // namespace calibr8::optim
