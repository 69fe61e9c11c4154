#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

namespace oracle {

Mat to_mat(std::size_t rows, std::size_t cols, const std::vector<double>& row_major) {
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = row_major[i * cols + j];
  return m;
}

Vec to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Vec ou_mean(const Mat& A, const Vec& z0, double t) { return (A * t).exp() * z0; }

Mat ou_covariance(const Mat& A, const Mat& S, double t) {
  const Eigen::Index k = A.rows();
  Mat block = Mat::Zero(2 * k, 2 * k);
  block.topLeftCorner(k, k) = -A * t;
  block.topRightCorner(k, k) = S * S.transpose() * t;
  block.bottomRightCorner(k, k) = A.transpose() * t;
  const Mat F = block.exp();
  const Mat C = F.bottomRightCorner(k, k).transpose() * F.topRightCorner(k, k);
  return 0.5 * (C + C.transpose());
}

Mat ou_noise_cross(const Mat& A, const Mat& S, double h) {
  const Eigen::Index k = A.rows();
  Mat block = Mat::Zero(2 * k, 2 * k);
  block.topLeftCorner(k, k) = A * h;
  block.topRightCorner(k, k) = Mat::Identity(k, k) * h;
  return Mat(block.exp().topRightCorner(k, k)) * S;
}

Mat discrete_lyapunov(const Mat& M, const Mat& Q) {
  Mat P = Q, Mk = M;
  for (int it = 0; it < 200 && Mk.norm() > 1e-18; ++it) {
    P += Mk * P * Mk.transpose();
    Mk = Mk * Mk;
  }
  return P;
}

Mat continuous_lyapunov(const Mat& A, const Mat& Q) {
  const Eigen::Index k = A.rows();
  const Mat I = Mat::Identity(k, k);
  const Mat K = Eigen::kroneckerProduct(I, A) + Eigen::kroneckerProduct(A, I);
  const Vec q = Eigen::Map<const Vec>(Q.data(), k * k);
  const Vec p = K.fullPivLu().solve(-q);
  return Eigen::Map<const Mat>(p.data(), k, k);
}

double gaussian_bump_expectation(const Vec& m, const Mat& sigma, const Vec& c, double s, double a) {
  const Eigen::Index k = m.size();
  const Mat I = Mat::Identity(k, k);
  const Vec d = m - c;
  const double q = d.dot((sigma + s * s * I).ldlt().solve(d));
  const double det = (I + sigma / (s * s)).determinant();
  return a * std::exp(-0.5 * q) / std::sqrt(det);
}

HamiltonJacobiSolver::HamiltonJacobiSolver(double gamma, double kappa, double alpha,
                                           double half_width, double h)
    : gamma_(gamma), kappa_(kappa), alpha_(alpha), L_(half_width), h_(h) {
  n_ = static_cast<std::size_t>(std::llround(2.0 * L_ / h_)) + 1;
  u_.assign(n_ * n_, 0.0);
}

void HamiltonJacobiSolver::rhs(const std::vector<double>& u, std::vector<double>& out) const {
  const long n = static_cast<long>(n_);
  auto at = [&](long i, long j) {
    i = std::clamp(i, 0L, n - 1);
    j = std::clamp(j, 0L, n - 1);
    return u[static_cast<std::size_t>(i * n + j)];
  };
  const double ih = 1.0 / h_;
  for (long i = 0; i < n; ++i) {
    const double x = coord(static_cast<std::size_t>(i));
    for (long j = 0; j < n; ++j) {
      const double v = coord(static_cast<std::size_t>(j));
      const double c = at(i, j);
      const double cx = alpha_ * v;
      const double cv = alpha_ * (-kappa_ * x - gamma_ * v);
      const double dx = cx > 0 ? (-3 * c + 4 * at(i + 1, j) - at(i + 2, j)) * 0.5 * ih
                               : (3 * c - 4 * at(i - 1, j) + at(i - 2, j)) * 0.5 * ih;
      const double dv_up = cv > 0 ? (-3 * c + 4 * at(i, j + 1) - at(i, j + 2)) * 0.5 * ih
                                  : (3 * c - 4 * at(i, j - 1) + at(i, j - 2)) * 0.5 * ih;
      const double dv = (at(i, j + 1) - at(i, j - 1)) * 0.5 * ih;
      const double dvv = (at(i, j + 1) - 2 * c + at(i, j - 1)) * ih * ih;
      out[static_cast<std::size_t>(i * n + j)] = cx * dx + cv * dv_up + alpha_ * dvv - dv * dv;
    }
  }
}

void HamiltonJacobiSolver::advance_to(double t) {
  if (t <= time_) return;
  const double cmax = alpha_ * (std::max(1.0, kappa_) * L_ + (1.0 + gamma_) * L_);
  const double dt_max = std::min(0.2 * h_ * h_ / alpha_, 0.3 * h_ / cmax);
  const std::size_t steps = static_cast<std::size_t>(std::ceil((t - time_) / dt_max));
  const double dt = (t - time_) / static_cast<double>(steps);
  std::vector<double> k1(u_.size()), k2(u_.size()), tmp(u_.size());
  for (std::size_t s = 0; s < steps; ++s) {
    rhs(u_, k1);
    for (std::size_t i = 0; i < u_.size(); ++i) tmp[i] = u_[i] + dt * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < u_.size(); ++i) u_[i] += 0.5 * dt * (k1[i] + k2[i]);
  }
  time_ = t;
}

double HamiltonJacobiSolver::value(double x, double v) const {
  const double fx = (x + L_) / h_, fv = (v + L_) / h_;
  const auto i = static_cast<std::size_t>(std::clamp(std::floor(fx), 0.0, double(n_ - 2)));
  const auto j = static_cast<std::size_t>(std::clamp(std::floor(fv), 0.0, double(n_ - 2)));
  const double a = fx - i, b = fv - j;
  const auto U = [&](std::size_t p, std::size_t q) { return u_[p * n_ + q]; };
  return (1 - a) * (1 - b) * U(i, j) + a * (1 - b) * U(i + 1, j) + (1 - a) * b * U(i, j + 1) +
         a * b * U(i + 1, j + 1);
}

double loglog_slope(const std::vector<double>& dts, const std::vector<double>& errs) {
  const std::size_t n = dts.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(dts[i]), y = std::log(errs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

} // namespace oracle
