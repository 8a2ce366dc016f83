#include "coherence/eigs.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/SparseCholesky>
#ifdef COHERENCE_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include "coherence/errors.hpp"
#include "coherence/io.hpp"

namespace coherence {

namespace {

#ifdef COHERENCE_HAVE_CHOLMOD
using Factor = Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower>;
#else
using Factor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower>;
#endif

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr std::size_t kStallRestarts = 30;

struct Ritz {
  std::vector<double> theta;
  MatrixXd X;
  std::vector<bool> converged;
};

class ShiftInvertSolver {
 public:
  ShiftInvertSolver(const SparseMatrix& D, const SparseMatrix& M, const Factor& factor,
                    double sigma)
      : D_(D), M_(M), factor_(factor), sigma_(sigma) {}

  /// Top `want` eigenpairs of (sigma M - D)^{-1} M on the M-orthogonal
  /// complement of `locked`.
  Ritz run(const MatrixXd& locked, const MatrixXd& mlocked, std::size_t want, std::size_t m,
           double tol, std::size_t max_restarts, std::mt19937_64& rng) {
    const Eigen::Index n = M_.rows();
    m = std::min<std::size_t>(m, static_cast<std::size_t>(n - locked.cols()) - 1);
    want = std::min(want, m - 1);
    MatrixXd V = MatrixXd::Zero(n, m + 1), MV = MatrixXd::Zero(n, m + 1);
    MatrixXd S = MatrixXd::Zero(m + 1, m);

    start_vector(V, MV, 0, locked, mlocked, rng);
    std::size_t k = 0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t last_gain = 0;
    for (std::size_t restart = 0;; ++restart) {
      for (std::size_t j = k; j < m; ++j) {
        VectorXd w = factor_.solve(MV.col(j));
        ++applications;
        VectorXd h = orthogonalize(w, V, MV, j + 1, locked, mlocked);
        S.col(j).head(j + 1) = h;
        VectorXd mw = M_ * w;
        const double beta = std::sqrt(std::max(0.0, w.dot(mw)));
        if (!(beta > 1e-12 * std::max(1.0, h.cwiseAbs().maxCoeff()))) {
          S(j + 1, j) = 0.0;
          start_vector(V, MV, j + 1, locked, mlocked, rng);
        } else {
          S(j + 1, j) = beta;
          V.col(j + 1) = w / beta;
          MV.col(j + 1) = mw / beta;
        }
      }

      MatrixXd square = S.topRows(m);
      square = 0.5 * (square + square.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(square);
      // Descending Ritz values.
      const VectorXd theta = es.eigenvalues().reverse();
      const MatrixXd Y = es.eigenvectors().rowwise().reverse();
      const VectorXd b = S.row(m).transpose();
      const VectorXd next = V.col(m);
      const double g = (sigma_ * (M_ * next) - D_ * next).norm();

      std::size_t nconv = 0;
      std::vector<bool> conv(m);
      for (std::size_t i = 0; i < m; ++i) {
        const double est = std::abs(b.dot(Y.col(i))) * g / std::abs(theta(i));
        conv[i] = est <= tol;
        if (i < want && conv[i]) ++nconv;
      }
      restarts = std::max(restarts, restart);
      double worst = 0.0;
      for (std::size_t i = 0; i < want; ++i)
        worst = std::max(worst, std::abs(b.dot(Y.col(i))) * g / std::abs(theta(i)));
      if (verbose)
        std::fprintf(stderr, "eigs: restart %zu locked %td converged %zu/%zu worst %.3e\n",
                     restart, locked.cols(), nconv, want, worst);
      // Rounding in the solves puts a floor under the estimates; once they
      // stop improving, further restarts only oscillate around it.
      if (worst < 0.5 * best) {
        best = worst;
        last_gain = restart;
      }
      const bool stalled = restart - last_gain >= kStallRestarts;
      if (nconv == want || restart >= max_restarts || stalled) {
        Ritz out;
        out.X = V.leftCols(m) * Y.leftCols(want);
        for (std::size_t i = 0; i < want; ++i) {
          out.theta.push_back(theta(i));
          out.converged.push_back(conv[i]);
        }
        return out;
      }

      const std::size_t p = want + (m - want) / 2;
      const MatrixXd keep = Y.leftCols(p);
      const MatrixXd vnew = V.leftCols(m) * keep;
      const MatrixXd mvnew = MV.leftCols(m) * keep;
      V.leftCols(p) = vnew;
      MV.leftCols(p) = mvnew;
      V.col(p) = next;
      MV.col(p) = MV.col(m);
      S.setZero();
      for (std::size_t i = 0; i < p; ++i) {
        S(i, i) = theta(i);
        S(p, i) = b.dot(Y.col(i));
      }
      k = p;
    }
  }

  std::size_t applications = 0;
  std::size_t restarts = 0;
  bool verbose = false;

 private:
  const SparseMatrix& D_;
  const SparseMatrix& M_;
  const Factor& factor_;
  double sigma_;

  // Two passes of classical Gram-Schmidt in the M inner product, against the
  // locked vectors and the first `cols` basis vectors. Returns the basis
  // coefficients.
  VectorXd orthogonalize(VectorXd& w, const MatrixXd& V, const MatrixXd& MV, std::size_t cols,
                         const MatrixXd& locked, const MatrixXd& mlocked) const {
    VectorXd h = VectorXd::Zero(static_cast<Eigen::Index>(cols));
    for (int pass = 0; pass < 2; ++pass) {
      if (locked.cols() > 0) {
        const VectorXd c = mlocked.transpose() * w;
        w.noalias() -= locked * c;
      }
      const VectorXd c = MV.leftCols(cols).transpose() * w;
      w.noalias() -= V.leftCols(cols) * c;
      h += c;
    }
    return h;
  }

  void start_vector(MatrixXd& V, MatrixXd& MV, std::size_t col, const MatrixXd& locked,
                    const MatrixXd& mlocked, std::mt19937_64& rng) const {
    std::normal_distribution<double> gauss;
    for (int attempt = 0; attempt < 10; ++attempt) {
      VectorXd w(M_.rows());
      for (auto& x : w) x = gauss(rng);
      orthogonalize(w, V, MV, col, locked, mlocked);
      VectorXd mw = M_ * w;
      const double norm = std::sqrt(std::max(0.0, w.dot(mw)));
      if (norm > 1e-8) {
        V.col(col) = w / norm;
        MV.col(col) = mw / norm;
        return;
      }
    }
    throw ConvergenceFailure(0, std::numeric_limits<double>::infinity());
  }
};

void fix_signs(MatrixXd& X) {
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    Eigen::Index imax = 0;
    X.col(c).cwiseAbs().maxCoeff(&imax);
    if (X(imax, c) < 0) X.col(c) *= -1.0;
  }
}

std::size_t max_row_nonzeros(const SparseMatrix& A) {
  std::size_t most = 0;
  for (Eigen::Index c = 0; c < A.outerSize(); ++c)
    most = std::max<std::size_t>(most, static_cast<std::size_t>(A.outerIndexPtr()[c + 1] -
                                                                A.outerIndexPtr()[c]));
  return most;
}

void fill_residuals(const SparseMatrix& D, const SparseMatrix& M, SpectrumResult& r) {
  r.residuals.clear();
  r.residual_floors.clear();
  const SparseMatrix absD = D.cwiseAbs(), absM = M.cwiseAbs();
  const double gamma = static_cast<double>(std::max(max_row_nonzeros(D), max_row_nonzeros(M)) + 2) *
                       std::numeric_limits<double>::epsilon();
  for (std::size_t i = 0; i < r.size(); ++i) {
    const VectorXd w = r.eigenvectors.col(static_cast<Eigen::Index>(i));
    const double mnorm = std::sqrt(w.dot(M * w));
    const double lambda = r.eigenvalues[i];
    r.residuals.push_back((D * w - lambda * (M * w)).norm() / mnorm);
    const VectorXd aw = w.cwiseAbs();
    r.residual_floors.push_back(gamma * (absD * aw + std::abs(lambda) * (absM * aw)).norm() / mnorm);
  }
  r.labels.assign(r.size(), "");
}

// Rayleigh-Ritz of the pencil on span(X); returns the top `count` pairs.
void rayleigh_ritz(const SparseMatrix& D, const SparseMatrix& M, MatrixXd& X,
                   std::vector<double>& values, std::size_t count) {
  MatrixXd A = X.transpose() * (D * X);
  MatrixXd B = X.transpose() * (M * X);
  A = 0.5 * (A + A.transpose()).eval();
  B = 0.5 * (B + B.transpose()).eval();
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(A, B);
  const auto n = static_cast<Eigen::Index>(count);
  const MatrixXd Y = es.eigenvectors().rowwise().reverse().leftCols(n);
  X = X * Y;
  values.clear();
  for (Eigen::Index i = 0; i < n; ++i)
    values.push_back(es.eigenvalues()(es.eigenvalues().size() - 1 - i));
}

double default_shift(const SparseMatrix& D, const SparseMatrix& M) {
  double td = 0.0, tm = 0.0;
  for (Eigen::Index i = 0; i < D.rows(); ++i) {
    td -= D.coeff(i, i);
    tm += M.coeff(i, i);
  }
  const double s = 1e-6 * td / tm;
  return s > 0.0 ? s : 1e-6;
}

void validate(const SparseMatrix& D, const SparseMatrix& M, const EigsOptions& options) {
  if (D.rows() != D.cols() || M.rows() != M.cols() || D.rows() != M.rows())
    throw DomainError("pencil matrices must be square and of equal size");
  if (options.count == 0) throw DomainError("eigenpair count must be at least one");
  if (!(options.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (options.count > static_cast<std::size_t>(D.rows()))
    throw DomainError("more eigenpairs requested than the pencil dimension");
}

}  // namespace

SpectrumResult solve_pencil_dense(const SparseMatrix& D, const SparseMatrix& M,
                                  std::size_t count) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es{MatrixXd(D), MatrixXd(M)};
  if (es.info() != Eigen::Success) throw FactorizationError("dense pencil solve failed");
  const auto n = es.eigenvalues().size();
  count = std::min<std::size_t>(count, static_cast<std::size_t>(n));
  SpectrumResult r;
  r.dense = true;
  r.eigenvectors = es.eigenvectors().rowwise().reverse().leftCols(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    r.eigenvalues.push_back(es.eigenvalues()(n - 1 - static_cast<Eigen::Index>(i)));
  fix_signs(r.eigenvectors);
  fill_residuals(D, M, r);
  return r;
}

SpectrumResult solve_pencil(const SparseMatrix& D, const SparseMatrix& M,
                            const EigsOptions& options) {
  validate(D, M, options);
  const std::size_t n = static_cast<std::size_t>(D.rows());
  const std::size_t K = options.count;
  const std::size_t m =
      options.subspace > 0 ? std::max(options.subspace, K + 2) : std::max(2 * K + 10, K + 20);
  if (n < m + 8) {
    auto r = solve_pencil_dense(D, M, K);
    r.tolerance = options.tol;
    for (double f : r.residual_floors) r.tolerance = std::max(r.tolerance, f);
    return r;
  }

  double sigma = options.shift > 0.0 ? options.shift : default_shift(D, M);
  SparseMatrix Dl = D.triangularView<Eigen::Lower>();
  SparseMatrix Ml = M.triangularView<Eigen::Lower>();
  Factor factor;
#ifdef COHERENCE_HAVE_CHOLMOD
  factor.cholmod().print = 0;  // failures are reported through info()
#endif
  std::size_t attempts = 0;
  for (;; ++attempts) {
    const SparseMatrix A = sigma * Ml - Dl;
    factor.compute(A);
    if (factor.info() == Eigen::Success) break;
    if (attempts >= 3)
      throw FactorizationError("sigma M - D is not positive definite after " +
                               std::to_string(attempts + 1) + " shifts (last sigma " +
                               io::format_double(sigma) + ")");
    sigma *= 1.0 + 0.37 * static_cast<double>(attempts + 1);
  }

  SpectrumResult result;
  result.shift = sigma;
  result.tolerance = options.tol;
  result.factorization_attempts = attempts + 1;

  double internal_tol = 0.1 * options.tol;
  for (int round = 0; round < 3; ++round, internal_tol *= 0.01) {
    std::mt19937_64 rng(options.seed);
    ShiftInvertSolver solver(D, M, factor, sigma);
    solver.verbose = options.verbose;
    const MatrixXd none(static_cast<Eigen::Index>(n), 0);
    Ritz first = solver.run(none, none, K, m, internal_tol, options.max_restarts, rng);
    MatrixXd X = first.X;
    std::vector<double> theta = first.theta;

    std::size_t probes = 0;
    const std::size_t probe_want = std::min<std::size_t>(K, 4);
    while (probes < options.max_probes && static_cast<std::size_t>(X.cols()) + probe_want + 30 < n) {
      ++probes;
      const MatrixXd MX = M * X;
      Ritz probe = solver.run(X, MX, probe_want, std::max(2 * probe_want + 10, probe_want + 20),
                              internal_tol, options.max_restarts, rng);
      const double cutoff = theta.back() * (1.0 + 1e-8);
      std::vector<std::size_t> better;
      for (std::size_t i = 0; i < probe.theta.size(); ++i)
        if (probe.converged[i] && probe.theta[i] > cutoff) better.push_back(i);
      if (better.empty()) break;
      // Merge and keep the K largest.
      std::vector<std::pair<double, Eigen::Index>> all;
      MatrixXd pool(X.rows(), X.cols() + static_cast<Eigen::Index>(better.size()));
      pool.leftCols(X.cols()) = X;
      for (Eigen::Index i = 0; i < X.cols(); ++i) all.push_back({theta[i], i});
      for (std::size_t j = 0; j < better.size(); ++j) {
        const Eigen::Index c = X.cols() + static_cast<Eigen::Index>(j);
        pool.col(c) = probe.X.col(static_cast<Eigen::Index>(better[j]));
        all.push_back({probe.theta[better[j]], c});
      }
      std::stable_sort(all.begin(), all.end(),
                       [](const auto& l, const auto& r) { return l.first > r.first; });
      MatrixXd nx(X.rows(), static_cast<Eigen::Index>(K));
      std::vector<double> nt;
      for (std::size_t i = 0; i < K; ++i) {
        nx.col(static_cast<Eigen::Index>(i)) = pool.col(all[i].second);
        nt.push_back(all[i].first);
      }
      X = std::move(nx);
      theta = std::move(nt);
    }

    std::vector<double> values;
    rayleigh_ritz(D, M, X, values, K);
    result.eigenvalues = values;
    result.eigenvectors = X;
    result.operator_applications += solver.applications;
    result.restarts += solver.restarts;
    result.probes += probes;
    fix_signs(result.eigenvectors);
    fill_residuals(D, M, result);

    // A pair is accepted at tol, or at its rounding floor when that is
    // larger; the reported tolerance is the largest bound actually used.
    std::size_t ok = 0;
    double worst = 0.0;
    result.tolerance = options.tol;
    for (std::size_t i = 0; i < K; ++i) {
      const double bound = std::max(options.tol, result.residual_floors[i]);
      result.tolerance = std::max(result.tolerance, bound);
      worst = std::max(worst, result.residuals[i]);
      if (result.residuals[i] <= bound) ++ok;
    }
    if (ok == K) return result;
    if (round == 2) throw ConvergenceFailure(ok, worst);
  }
  return result;
}

SpectrumResult solve_pencil(const InflatedSystem& system, const EigsOptions& options) {
  return solve_pencil(system.D, system.M(), options);
}

SpectrumResult solve_pencil(const DynamicPencil& pencil, const EigsOptions& options) {
  return solve_pencil(pencil.stiffness, pencil.mass, options);
}

void write_spectrum_csv(const std::filesystem::path& path, const SpectrumResult& result) {
  std::ostringstream out;
  out << "k,lambda,residual,label\n";
  for (std::size_t i = 0; i < result.size(); ++i)
    out << i + 1 << ',' << io::format_double(result.eigenvalues[i]) << ','
        << io::format_double(result.residuals[i]) << ','
        << (i < result.labels.size() ? result.labels[i] : "") << '\n';
  io::write_text(path, out.str());
}

EigBoundsReport verify_eigbounds(const std::vector<double>& a_values,
                                 const std::vector<std::vector<double>>& spatial,
                                 const std::vector<double>& dynamic,
                                 const EigBoundsOptions& options) {
  if (a_values.size() != spatial.size())
    throw DomainError("one spatial spectrum per value of a required");
  for (std::size_t j = 1; j < a_values.size(); ++j)
    if (!(a_values[j] > a_values[j - 1])) throw DomainError("a values must be increasing");

  EigBoundsReport report;
  report.a_values = a_values;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  auto describe = [](const char* what, std::size_t k, double a) {
    std::ostringstream s;
    s << what << " for k=" << k << " at a=" << io::format_double(a);
    return s.str();
  };
  for (std::size_t k = 1; k <= dynamic.size(); ++k) {
    EigBoundsReport::Row row{k, dynamic[k - 1], {}, true, true, true};
    const double slack = options.slack * std::abs(row.dynamic) + options.monotonicity_tol;
    for (std::size_t j = 0; j < a_values.size(); ++j) {
      const double v = k <= spatial[j].size() ? spatial[j][k - 1] : nan;
      row.spatial.push_back(v);
      if (std::isnan(v)) continue;
      if (v < row.dynamic - slack) {
        row.lower_bound_ok = false;
        report.violations.push_back(describe("spatial eigenvalue below dynamic bound", k,
                                             a_values[j]));
      }
      if (j > 0 && !std::isnan(row.spatial[j - 1]) &&
          v > row.spatial[j - 1] + options.monotonicity_tol) {
        row.monotone_ok = false;
        report.violations.push_back(describe("spatial eigenvalue increased", k, a_values[j]));
      }
    }
    const double last = row.spatial.empty() ? nan : row.spatial.back();
    if (std::isnan(last) || std::abs(last - row.dynamic) >
                                options.limit_tol * std::abs(row.dynamic) + options.monotonicity_tol) {
      row.limit_ok = false;
      report.violations.push_back(
          describe("spatial eigenvalue far from dynamic limit", k, a_values.back()));
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace coherence
