#ifndef DDL_LOSSES_HPP
#define DDL_LOSSES_HPP

// Classification cost families Omega(z) over the signed margin z = l * (w^T x + b),
// together with the derivative quantities consumed by the Newton-linearized
// sparse coder and by classifier training.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ddl {

enum class LossFamily { Square, Exponential, Logistic, SmoothHinge };

struct LossKind {
  LossFamily family = LossFamily::Square;
  // Only meaningful for SmoothHinge: half-width of the transition band around
  // z = 1 and the curvature floor that keeps Omega strictly convex.
  double rho = 0.05;
  double eps = 1e-4;

  static LossKind square() { return {LossFamily::Square}; }
  static LossKind exponential() { return {LossFamily::Exponential}; }
  static LossKind logistic() { return {LossFamily::Logistic}; }
  static LossKind smooth_hinge(double rho = 0.05, double eps = 1e-4) {
    if (!(rho > 0.0) || !(eps > 0.0)) {
      throw std::invalid_argument("smooth hinge requires rho > 0 and eps > 0");
    }
    return {LossFamily::SmoothHinge, rho, eps};
  }

  friend bool operator==(const LossKind&, const LossKind&) = default;
};

inline std::string_view loss_name(LossFamily f) {
  switch (f) {
    case LossFamily::Square: return "square";
    case LossFamily::Exponential: return "exp";
    case LossFamily::Logistic: return "logistic";
    case LossFamily::SmoothHinge: return "hinge";
  }
  return "unknown";
}

inline std::string_view loss_name(const LossKind& k) { return loss_name(k.family); }

/// Parses the canonical CLI names (square|exp|logistic|hinge). Long forms
/// "exponential" and "smooth_hinge" are accepted as aliases.
inline LossKind parse_loss(std::string_view name) {
  if (name == "square") return LossKind::square();
  if (name == "exp" || name == "exponential") return LossKind::exponential();
  if (name == "logistic") return LossKind::logistic();
  if (name == "hinge" || name == "smooth_hinge") return LossKind::smooth_hinge();
  throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

namespace detail {

inline void require_finite(double z) {
  if (!std::isfinite(z)) throw std::domain_error("loss evaluated at a non-finite margin");
}

inline void require_valid(const LossKind& k) {
  if (k.family == LossFamily::SmoothHinge && (!(k.rho > 0.0) || !(k.eps > 0.0))) {
    throw std::invalid_argument("smooth hinge requires rho > 0 and eps > 0");
  }
}

// e^{-z} with the exponent clamped so the result stays finite.
inline double exp_neg(double z) { return std::exp(std::min(-z, 700.0)); }

// 1 / (1 + e^{z}) without overflow.
inline double logistic_tail(double z) {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

// Smooth hinge in the variable u = 1 - z. The hinge part h(u) has
// h'' = 3 (rho^2 - u^2) / (4 rho^3) on |u| <= rho and zero elsewhere, so it
// equals max(0, u) exactly outside the band. The eps * u^2 term is the
// curvature floor.
inline double hinge_part(double u, double rho) {
  if (u <= -rho) return 0.0;
  if (u >= rho) return u;
  const double u2 = u * u;
  return (1.5 * rho * rho * u2 + 2.0 * rho * rho * rho * u - 0.25 * u2 * u2 +
          0.75 * rho * rho * rho * rho) /
         (4.0 * rho * rho * rho);
}

inline double hinge_part_d1(double u, double rho) {
  if (u <= -rho) return 0.0;
  if (u >= rho) return 1.0;
  return (3.0 * rho * rho * u + 2.0 * rho * rho * rho - u * u * u) / (4.0 * rho * rho * rho);
}

inline double hinge_part_d2(double u, double rho) {
  if (std::abs(u) >= rho) return 0.0;
  return 3.0 * (rho * rho - u * u) / (4.0 * rho * rho * rho);
}

}  // namespace detail

inline double loss_value(const LossKind& kind, double z) {
  detail::require_finite(z);
  detail::require_valid(kind);
  switch (kind.family) {
    case LossFamily::Square: return (1.0 - z) * (1.0 - z);
    case LossFamily::Exponential: return detail::exp_neg(z);
    case LossFamily::Logistic:
      // ln(1 + e^{-z}), split so neither branch overflows.
      if (z > 30.0) return std::exp(-z);
      if (z < -30.0) return -z + std::log1p(std::exp(z));
      return std::log1p(std::exp(-z));
    case LossFamily::SmoothHinge: {
      const double u = 1.0 - z;
      return detail::hinge_part(u, kind.rho) + kind.eps * u * u;
    }
  }
  return 0.0;
}

inline double loss_d1(const LossKind& kind, double z) {
  detail::require_finite(z);
  detail::require_valid(kind);
  switch (kind.family) {
    case LossFamily::Square: return 2.0 * (z - 1.0);
    case LossFamily::Exponential: return -detail::exp_neg(z);
    case LossFamily::Logistic: return -detail::logistic_tail(z);
    case LossFamily::SmoothHinge: {
      const double u = 1.0 - z;
      return -(detail::hinge_part_d1(u, kind.rho) + 2.0 * kind.eps * u);
    }
  }
  return 0.0;
}

inline double loss_d2(const LossKind& kind, double z) {
  detail::require_finite(z);
  detail::require_valid(kind);
  switch (kind.family) {
    case LossFamily::Square: return 2.0;
    case LossFamily::Exponential: return detail::exp_neg(z);
    case LossFamily::Logistic: {
      const double e = std::exp(-std::abs(z));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case LossFamily::SmoothHinge:
      return detail::hinge_part_d2(1.0 - z, kind.rho) + 2.0 * kind.eps;
  }
  return 0.0;
}

/// Omega_1 / Omega_2, computed in closed form where the ratio simplifies.
inline double loss_ratio12(const LossKind& kind, double z) {
  detail::require_finite(z);
  detail::require_valid(kind);
  switch (kind.family) {
    case LossFamily::Square: return z - 1.0;
    case LossFamily::Exponential: return -1.0;
    case LossFamily::Logistic: return -(1.0 + detail::exp_neg(z));
    case LossFamily::SmoothHinge: return loss_d1(kind, z) / loss_d2(kind, z);
  }
  return 0.0;
}

}  // namespace ddl

#endif  // DDL_LOSSES_HPP
