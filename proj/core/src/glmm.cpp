#include <algorithm>
#include <cmath>
#include <map>
#include <functional>
#include <numeric>

#include <Eigen/Dense>

#include "cotscope/errors.hpp"
#include "cotscope/stats.hpp"

namespace cotscope {

namespace {

double log1pexp(double eta) { return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

double logistic(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

struct GroupedData {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> x;
  std::vector<int> y;
};

class LaplaceObjective {
 public:
  LaplaceObjective(const GroupedData& data, int max_inner) : data_(data), max_inner_(max_inner) {}

  // Laplace-approximated marginal log-likelihood.
  double log_likelihood(double b0, double b1, double sigma) {
    const double prec = 1.0 / (sigma * sigma);
    double total = 0.0;
    for (const auto& rows : data_.groups) {
      const double u = mode(rows, b0, b1, prec, sigma);
      const double g = conditional(rows, b0, b1, u, prec);
      double h = prec;
      for (auto i : rows) {
        const double p = logistic(b0 + b1 * data_.x[i] + u);
        h += p * (1.0 - p);
      }
      total += g - 0.5 * std::log(sigma * sigma * h);
    }
    return total;
  }

  std::size_t inner_failures() const { return inner_failures_; }

 private:
  // Root of the score in u. The score is strictly decreasing and its root lies
  // within +-m sigma^2, so Newton steps are kept inside a shrinking bracket.
  double mode(const std::vector<std::size_t>& rows, double b0, double b1, double prec, double sigma) {
    double lo = -static_cast<double>(rows.size()) * sigma * sigma - 1.0;
    double hi = -lo;
    double u = 0.0, cap = 5.0;
    int last_clamped = 0;
    for (int it = 0; it < max_inner_; ++it) {
      double score = -u * prec, hess = prec;
      for (auto i : rows) {
        const double p = logistic(b0 + b1 * data_.x[i] + u);
        score += data_.y[i] - p;
        hess += p * (1.0 - p);
      }
      // Below this the score is rounding noise; the objective is flat in u there.
      if (std::abs(score) <= 1e-12 * static_cast<double>(rows.size() + 1)) return u;
      (score > 0 ? lo : hi) = u;
      const double raw = score / hess;
      if (std::abs(raw) > cap && last_clamped == (raw > 0 ? 1 : -1)) cap *= 2.0;
      last_clamped = std::abs(raw) > cap ? (raw > 0 ? 1 : -1) : 0;
      double next = u + std::clamp(raw, -cap, cap);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - u) <= 1e-12 * std::max(1.0, std::abs(u))) return next;
      u = next;
    }
    inner_failures_++;
    return u;
  }

  double conditional(const std::vector<std::size_t>& rows, double b0, double b1, double u, double prec) const {
    double s = -0.5 * u * u * prec;
    for (auto i : rows) {
      const double eta = b0 + b1 * data_.x[i] + u;
      s += data_.y[i] * eta - log1pexp(eta);
    }
    return s;
  }

  const GroupedData& data_;
  int max_inner_;
  std::size_t inner_failures_ = 0;
};

using Fn = std::function<double(const Eigen::VectorXd&)>;

Eigen::VectorXd fd_gradient(const Fn& f, const Eigen::VectorXd& x) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[i]));
    Eigen::VectorXd a = x, b = x;
    a[i] += h;
    b[i] -= h;
    g[i] = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_hessian(const Fn& f, const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  const double h = 1e-3;
  const double f0 = f(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      double v;
      if (i == j) {
        Eigen::VectorXd a = x, b = x;
        a[i] += h;
        b[i] -= h;
        v = (f(a) - 2.0 * f0 + f(b)) / (h * h);
      } else {
        Eigen::VectorXd pp = x, pm = x, mp = x, mm = x;
        pp[i] += h, pp[j] += h;
        pm[i] += h, pm[j] -= h;
        mp[i] -= h, mp[j] += h;
        mm[i] -= h, mm[j] -= h;
        v = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * h * h);
      }
      H(i, j) = H(j, i) = v;
    }
  }
  return H;
}

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string note;
};

// Minimizes f with BFGS and a backtracking Armijo line search.
BfgsResult bfgs(const Fn& f, Eigen::VectorXd x, int max_iter, double tol) {
  BfgsResult r;
  const Eigen::Index n = x.size();
  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  double fx = f(x);
  Eigen::VectorXd g = fd_gradient(f, x);
  for (int it = 0; it < max_iter; ++it) {
    r.iterations = it + 1;
    if (g.lpNorm<Eigen::Infinity>() < tol) {
      r.converged = true;
      break;
    }
    Eigen::VectorXd d = -Hinv * g;
    if (d.dot(g) >= 0) {
      Hinv.setIdentity();
      d = -g;
    }
    double step = 1.0, fn = 0.0;
    Eigen::VectorXd xn;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      xn = x + step * d;
      fn = f(xn);
      if (std::isfinite(fn) && fn <= fx + 1e-4 * step * g.dot(d)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // Line search stalls only at finite-difference noise level.
      r.converged = g.lpNorm<Eigen::Infinity>() < 1e3 * tol;
      r.note = "line search stalled at gradient norm " + std::to_string(g.lpNorm<Eigen::Infinity>());
      break;
    }
    const Eigen::VectorXd gn = fd_gradient(f, xn);
    const Eigen::VectorXd s = xn - x, yv = gn - g;
    const double sy = s.dot(yv);
    if (sy > 1e-12) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      Hinv = (I - rho * s * yv.transpose()) * Hinv * (I - rho * yv * s.transpose()) + rho * s * s.transpose();
    }
    x = xn;
    fx = fn;
    g = gn;
  }
  if (!r.converged && r.note.empty()) r.note = "iteration cap reached";
  r.x = x;
  r.value = fx;
  return r;
}

}  // namespace

GlmmFit fit_glmm(const std::vector<std::size_t>& group, const std::vector<double>& x, const std::vector<int>& y,
                 const GlmmOptions& options) {
  if (group.size() != x.size() || x.size() != y.size()) throw ValidationError("fit_glmm: input lengths differ");
  GroupedData data;
  std::map<std::size_t, std::size_t> dense;
  for (std::size_t i = 0; i < group.size(); ++i) {
    auto [it, fresh] = dense.try_emplace(group[i], data.groups.size());
    if (fresh) data.groups.emplace_back();
    data.groups[it->second].push_back(i);
  }
  std::size_t informative = 0;
  for (const auto& rows : data.groups) {
    bool any0 = false, any1 = false;
    for (auto i : rows) (y[i] ? any1 : any0) = true;
    if (any0 && any1) ++informative;
  }
  if (informative < 2) throw ValidationError("fit_glmm needs at least two questions with outcome variance");

  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) throw ValidationError("fit_glmm: metric has zero variance");
  data.x = x;
  if (options.standardize)
    for (auto& v : data.x) v = (v - mean) / sd;
  data.y = y;

  GlmmFit fit;
  fit.n = x.size();
  fit.q = data.groups.size();
  LaplaceObjective objective(data, options.max_inner_iterations);

  const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / n;
  const double b0_init = std::log(std::clamp(ybar, 1e-3, 1 - 1e-3) / (1 - std::clamp(ybar, 1e-3, 1 - 1e-3)));
  const double log_floor = std::log(options.sigma_floor);

  auto fit_pinned = [&](double sigma, Eigen::VectorXd start) {
    Fn f = [&, sigma](const Eigen::VectorXd& t) { return -objective.log_likelihood(t[0], t[1], sigma); };
    auto r = bfgs(f, std::move(start), options.max_outer_iterations, options.gradient_tolerance);
    return std::make_pair(r, f);
  };

  BfgsResult best;
  Fn f_final;
  if (options.fixed_sigma) {
    if (!(*options.fixed_sigma > 0.0)) throw ValidationError("fit_glmm: fixed sigma must be positive");
    auto [r, f] = fit_pinned(*options.fixed_sigma, Eigen::Vector2d(b0_init, 0.0));
    best = r;
    f_final = f;
    fit.sigma_u = *options.fixed_sigma;
  } else {
    Fn f3 = [&](const Eigen::VectorXd& t) {
      return -objective.log_likelihood(t[0], t[1], std::exp(std::max(t[2], log_floor)));
    };
    auto r = bfgs(f3, Eigen::Vector3d(b0_init, 0.0, 0.0), options.max_outer_iterations, options.gradient_tolerance);
    if (r.x[2] <= log_floor + 1e-3) {
      auto [r2, f2] = fit_pinned(options.sigma_floor, r.x.head(2));
      r2.iterations += r.iterations;
      best = r2;
      f_final = f2;
      fit.sigma_u = options.sigma_floor;
      fit.sigma_at_floor = true;
    } else {
      best = r;
      f_final = f3;
      fit.sigma_u = std::exp(r.x[2]);
    }
  }

  fit.beta0 = best.x[0];
  fit.beta1 = best.x[1];
  fit.log_likelihood = -best.value;
  fit.iterations = best.iterations;
  fit.converged = best.converged;
  fit.diagnostics = best.note;

  const Eigen::MatrixXd H = fd_hessian(f_final, best.x);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0).any()) {
    fit.converged = false;
    fit.diagnostics += fit.diagnostics.empty() ? "" : "; ";
    fit.diagnostics += "observed information not positive definite";
    return fit;
  }
  const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
  fit.se1 = std::sqrt(cov(1, 1));
  fit.p_wald = std::erfc(std::abs(fit.beta1 / fit.se1) / std::sqrt(2.0));
  if (objective.inner_failures() > 0) {
    fit.diagnostics += fit.diagnostics.empty() ? "" : "; ";
    fit.diagnostics += "inner mode search hit the iteration cap " + std::to_string(objective.inner_failures()) + " times";
  }
  return fit;
}

GlmmFit fit_glmm(const ObservationSet& obs, std::string_view metric, const GlmmOptions& options) {
  const auto m = obs.metric_index(metric);
  std::map<std::string, std::size_t> qid;
  std::vector<std::size_t> group;
  std::vector<double> x;
  std::vector<int> y;
  for (const auto& r : obs.rows) {
    if (!r.values.at(m)) continue;
    group.push_back(qid.try_emplace(r.question_id, qid.size()).first->second);
    x.push_back(*r.values[m]);
    y.push_back(r.correct ? 1 : 0);
  }
  auto fit = fit_glmm(group, x, y, options);
  fit.metric = std::string(metric);
  const auto models = obs.models();
  if (models.size() == 1) fit.model = models.front();
  return fit;
}

}  // namespace cotscope
