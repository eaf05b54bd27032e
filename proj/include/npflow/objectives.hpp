#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "npflow/types.hpp"

namespace npflow {

/// A twice-differentiable cost with its first and second-order oracles.
///
/// Optional fields hold ground truth when it is known in closed form. The
/// convexity flags are declared by the constructor of the objective, not detected.
struct Objective {
  std::string name;
  int dimension = 0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;
  std::function<Vec(const Vec&, const Vec&)> hessian_vector;  // (x, v) -> H(x) v

  bool convex = false;
  bool strictly_convex = false;
  bool supercoercive = false;
  std::optional<double> strong_convexity;  // global modulus, when known
  std::optional<double> smoothness;        // global Lipschitz constant of the gradient

  std::optional<double> f_star;
  std::optional<Vec> minimizer;
  std::function<Vec(const Vec&)> grad_conjugate_closed;  // inverse of the gradient map

  Mat hessian(const Vec& x) const {
    Mat h(dimension, dimension);
    Vec e = Vec::Zero(dimension);
    for (int j = 0; j < dimension; ++j) {
      e[j] = 1.0;
      h.col(j) = hessian_vector(x, e);
      e[j] = 0.0;
    }
    return 0.5 * (h + h.transpose());
  }
};

/// f(x) = 1/2 x^T A x - b^T x for symmetric positive-definite A.
inline Objective make_quadratic(const Mat& a, const Vec& b) {
  if (a.rows() != a.cols() || a.rows() == 0)
    throw std::invalid_argument("quadratic objective: A must be square and non-empty");
  if (b.size() != a.rows())
    throw std::invalid_argument("quadratic objective: b has the wrong dimension");
  if ((a - a.transpose()).norm() > 1e-12 * (1.0 + a.norm()))
    throw std::invalid_argument("quadratic objective: A is not symmetric");
  Eigen::SelfAdjointEigenSolver<Mat> eig(a, Eigen::EigenvaluesOnly);
  const double lmin = eig.eigenvalues().minCoeff();
  const double lmax = eig.eigenvalues().maxCoeff();
  if (!(lmin >= 1e-12)) throw std::invalid_argument("quadratic objective: A is not positive definite");

  Eigen::LDLT<Mat> ldlt(a);
  const Vec xstar = ldlt.solve(b);

  Objective o;
  o.name = "quadratic";
  o.dimension = static_cast<int>(a.rows());
  o.value = [a, b](const Vec& x) { return 0.5 * x.dot(a * x) - b.dot(x); };
  o.gradient = [a, b](const Vec& x) -> Vec { return a * x - b; };
  o.hessian_vector = [a](const Vec&, const Vec& v) -> Vec { return a * v; };
  o.convex = o.strictly_convex = o.supercoercive = true;
  o.strong_convexity = lmin;
  o.smoothness = lmax;
  o.minimizer = xstar;
  o.f_star = -0.5 * b.dot(xstar);
  o.grad_conjugate_closed = [ldlt, b](const Vec& z) -> Vec { return ldlt.solve(z + b); };
  return o;
}

/// f(x) = |x|^4: strictly convex and supercoercive, not strongly convex.
inline Objective make_quartic(int dimension = 2) {
  if (dimension < 1) throw std::invalid_argument("quartic objective: dimension must be >= 1");
  Objective o;
  o.name = "quartic";
  o.dimension = dimension;
  o.value = [](const Vec& x) {
    const double s = x.squaredNorm();
    return s * s;
  };
  o.gradient = [](const Vec& x) -> Vec { return 4.0 * x.squaredNorm() * x; };
  // H = 4|x|^2 I + 8 x x^T
  o.hessian_vector = [](const Vec& x, const Vec& v) -> Vec {
    return 4.0 * x.squaredNorm() * v + 8.0 * x.dot(v) * x;
  };
  o.convex = o.strictly_convex = o.supercoercive = true;
  o.minimizer = Vec::Zero(dimension);
  o.f_star = 0.0;
  return o;
}

/// Chained Rosenbrock, sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2. Nonconvex.
inline Objective make_rosenbrock(int dimension = 2) {
  if (dimension < 2) throw std::invalid_argument("rosenbrock objective: dimension must be >= 2");
  Objective o;
  o.name = "rosenbrock";
  o.dimension = dimension;
  o.value = [](const Vec& x) {
    double f = 0.0;
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double c = 1.0 - x[i];
      f += 100.0 * a * a + c * c;
    }
    return f;
  };
  o.gradient = [](const Vec& x) -> Vec {
    Vec g = Vec::Zero(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      g[i] += -400.0 * x[i] * a - 2.0 * (1.0 - x[i]);
      g[i + 1] += 200.0 * a;
    }
    return g;
  };
  o.hessian_vector = [](const Vec& x, const Vec& v) -> Vec {
    Vec hv = Vec::Zero(x.size());
    for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
      const double hii = 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
      const double hij = -400.0 * x[i];
      hv[i] += hii * v[i] + hij * v[i + 1];
      hv[i + 1] += hij * v[i] + 200.0 * v[i + 1];
    }
    return hv;
  };
  o.minimizer = Vec::Ones(dimension);
  o.f_star = 0.0;
  return o;
}

struct NewtonOptions {
  double tol = 1e-12;
  int max_iterations = 100;
  std::optional<Vec> start;
};

/// grad f*(z): the x with grad f(x) = z. Closed form when the objective has one,
/// otherwise damped Newton on x -> grad f(x) - z, halving the step until the
/// residual norm decreases.
inline Vec grad_fstar(const Objective& o, const Vec& z, const NewtonOptions& opt = {}) {
  if (!o.strictly_convex)
    throw std::invalid_argument("grad_fstar: objective '" + o.name + "' is not strictly convex");
  if (!(opt.tol > 0.0)) throw std::invalid_argument("grad_fstar: tol must be > 0");
  if (z.size() != o.dimension) throw std::invalid_argument("grad_fstar: dimension mismatch");
  if (o.grad_conjugate_closed) return o.grad_conjugate_closed(z);

  Vec x = opt.start ? *opt.start : z;
  Vec r = o.gradient(x) - z;
  double rn = r.norm();
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (rn <= opt.tol) return x;
    const Mat h = o.hessian(x);
    Vec d = h.ldlt().solve(-r);
    if (!d.allFinite()) {
      const Mat reg = h + 1e-10 * (1.0 + h.norm()) * Mat::Identity(o.dimension, o.dimension);
      d = reg.ldlt().solve(-r);
      if (!d.allFinite()) d = -r;
    }
    double step = 1.0;
    bool accepted = false;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      const Vec xn = x + step * d;
      const Vec rn_vec = o.gradient(xn) - z;
      const double rnn = rn_vec.norm();
      if (rnn < rn) {
        x = xn;
        r = rn_vec;
        rn = rnn;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  if (rn <= opt.tol) return x;
  throw NumericalError("grad_fstar: Newton did not reach tolerance (residual " +
                       std::to_string(rn) + ")");
}

}  // namespace npflow
