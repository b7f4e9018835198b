#include "flatdt/numerics.hpp"

#include "flatdt/errors.hpp"

namespace flatdt {

int numeric_rank(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(kRankThreshold);
  return static_cast<int>(qr.rank());
}

NewtonResult solve_newton(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residual,
                          const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
                          Eigen::VectorXd start, const NewtonOptions& options) {
  NewtonResult out;
  out.solution = std::move(start);
  Eigen::VectorXd r = residual(out.solution);
  out.residual = r.lpNorm<Eigen::Infinity>();
  for (int it = 0; it < options.max_iterations; ++it) {
    if (out.residual <= options.tolerance) {
      out.converged = true;
      out.iterations = it;
      return out;
    }
    const Eigen::MatrixXd J = jacobian(out.solution);
    const Eigen::VectorXd step = J.completeOrthogonalDecomposition().solve(-r);
    const double merit = r.squaredNorm();

    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= options.min_damping) {
      Eigen::VectorXd trial = out.solution + lambda * step;
      try {
        Eigen::VectorXd rt = residual(trial);
        if (rt.allFinite() && rt.squaredNorm() <= (1.0 - 1e-4 * lambda) * merit) {
          out.solution = std::move(trial);
          r = std::move(rt);
          accepted = true;
          break;
        }
      } catch (const SingularEvaluationError&) {
      }
      lambda *= 0.5;
    }
    out.residual = r.lpNorm<Eigen::Infinity>();
    out.iterations = it + 1;
    if (!accepted) break;
  }
  out.converged = out.residual <= options.tolerance;
  return out;
}

}  // namespace flatdt
