#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "stsep/elbo.hpp"
#include "stsep/error.hpp"
#include "stsep/optim.hpp"
#include "stsep/parallel.hpp"
#include "stsep/spatial.hpp"
#include "stsep/temporal.hpp"

namespace stsep {

namespace {

ModelGradient ZeroGradient(const ModelState& st) {
  const Index ns = st.sources();
  const Index nj = st.temporal.features();
  ModelGradient g;
  g.mu = Matrix::Zero(ns, st.spatial.mu.cols());
  g.r = Matrix::Zero(ns, nj);
  g.log_p = Matrix::Zero(ns, nj);
  g.m = Matrix::Zero(ns, nj);
  g.log_s = Matrix::Zero(ns, nj);
  g.log_l = Vector::Zero(ns);
  g.t = Vector::Zero(st.shifts.t.size());
  return g;
}

struct LikelihoodPieces {
  double rss = 0.0;
  Matrix grad_a;  // d rss-term / dA, i.e. S R
  Matrix grad_s;  // A R^T
};

// Residual R = Y - S^T A and its two contractions, reduced over fixed
// subject partitions.
LikelihoodPieces LikelihoodContractions(const Matrix& y, const Matrix& s, const Matrix& a,
                                        int threads) {
  const Index ns = s.rows();
  std::array<double, kReductionChunks> rss{};
  std::array<Matrix, kReductionChunks> ga;
  LikelihoodPieces out;
  out.grad_s = Matrix::Zero(ns, y.rows());
  ForEachChunk(y.rows(), threads, [&](int c, ChunkRange range) {
    const Index rows = range.end - range.begin;
    if (rows == 0) return;
    const auto s_chunk = s.middleCols(range.begin, rows);
    const Matrix resid = y.middleRows(range.begin, rows) - s_chunk.transpose() * a;
    rss[c] = resid.squaredNorm();
    ga[c] = s_chunk * resid;
    out.grad_s.middleCols(range.begin, rows) = a * resid.transpose();
  });
  out.grad_a = Matrix::Zero(ns, a.cols());
  for (int c = 0; c < kReductionChunks; ++c) {
    out.rss += rss[c];
    if (ga[c].size() > 0) out.grad_a += ga[c];
  }
  return out;
}

}  // namespace

ElboGradient GradElbo(const ModelState& state, const DataMatrix& data, const Hyperparams& hp,
                      const std::vector<NoiseDraws>& draws, int threads) {
  if (draws.empty() || static_cast<int>(draws.size()) != hp.n_mc) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(hp.n_mc) + " noise draws, got " +
                    std::to_string(draws.size()));
  }
  const TemporalPosterior& tp = state.temporal;
  const SpatialPosterior& sp = state.spatial;
  const Index ns = tp.sources();
  const Index nj = tp.features();
  const Index np = data.subjects();
  const double n_obs = static_cast<double>(data.values.size());
  const double sigma = state.sigma();
  const double inv_var = 1.0 / (sigma * sigma);
  const double scale = std::sqrt(2.0 / static_cast<double>(nj));
  const Vector& u = hp.control_points;
  const Vector& b = tp.phases;

  const KernelFactor kf = BuildKernel(sp.grid, sp.alpha(), sp.beta(), hp.jitter);
  const Vector tau = state.shifts.Squashed();
  const Matrix p = tp.p();
  const Matrix s_std = tp.s();
  const Vector l = tp.l();

  ElboGradient out;
  ModelGradient& g = out.grad;
  g = ZeroGradient(state);

  for (const NoiseDraws& d : draws) {
    const Matrix omega = ReparamOmega(tp, d.zeta);
    const Matrix w = ReparamWeights(tp, d.epsilon);
    const Matrix s = SourceValues(omega, w, b, tau);
    const Matrix ds_subjects = SourceDerivatives(omega, w, b, tau);
    const Matrix ds_control = SourceDerivatives(omega, w, b, u);
    const Matrix a = SampleMaps(sp, kf, d.kappa);

    const LikelihoodPieces lp = LikelihoodContractions(data.values, s, a, threads);
    out.value.loglik += -0.5 * n_obs * std::log(2.0 * std::numbers::pi * sigma * sigma) -
                        0.5 * lp.rss * inv_var;
    out.value.constraint += MonotonicityLogProb(ds_control, hp.lambda);
    g.log_sigma += -n_obs + lp.rss * inv_var;

    const Matrix grad_a = lp.grad_a * inv_var;  // dL/dA
    const Matrix grad_s = lp.grad_s * inv_var;  // dL/dS, Ns x P

    // dL/dS' at the control points: lambda * sigmoid(-lambda S').
    Matrix grad_ds(ns, u.size());
    for (Index i = 0; i < grad_ds.size(); ++i) {
      grad_ds.data()[i] = hp.lambda / (1.0 + std::exp(hp.lambda * ds_control.data()[i]));
    }

    Matrix grad_w = Matrix::Zero(ns, nj);
    Matrix grad_omega = Matrix::Zero(ns, nj);
    for (Index n = 0; n < ns; ++n) {
      for (Index j = 0; j < nj; ++j) {
        const double om = omega(n, j);
        const double wt = w(n, j);
        double gw = 0.0;
        double go = 0.0;
        for (Index q = 0; q < np; ++q) {
          const double arg = om * tau[q] + b[j];
          gw += grad_s(n, q) * std::cos(arg);
          go -= grad_s(n, q) * wt * tau[q] * std::sin(arg);
        }
        for (Index c = 0; c < u.size(); ++c) {
          const double arg = om * u[c] + b[j];
          const double sn = std::sin(arg);
          gw -= grad_ds(n, c) * om * sn;
          go -= grad_ds(n, c) * wt * (sn + om * u[c] * std::cos(arg));
        }
        grad_w(n, j) = scale * gw;
        grad_omega(n, j) = scale * go;
      }
    }

    for (Index q = 0; q < np; ++q) {
      double acc = 0.0;
      for (Index n = 0; n < ns; ++n) acc += grad_s(n, q) * ds_subjects(n, q);
      g.t[q] += tau[q] * (1.0 - tau[q]) * acc;
    }

    g.mu += grad_a;
    const KernelScalarGrad kg = SqrtCovarianceGrad(kf, grad_a, d.kappa);
    g.log_alpha += kg.log_alpha;
    g.log_beta += kg.log_beta;
    g.m += grad_w;
    g.log_s.array() += grad_w.array() * d.epsilon.array() * s_std.array();
    g.r += grad_omega;
    g.log_p.array() += grad_omega.array() * d.zeta.array() * p.array();
  }

  const double inv = 1.0 / static_cast<double>(draws.size());
  out.value.loglik *= inv;
  out.value.constraint *= inv;
  g.mu *= inv;
  g.log_alpha *= inv;
  g.log_beta *= inv;
  g.r *= inv;
  g.log_p *= inv;
  g.m *= inv;
  g.log_s *= inv;
  g.t *= inv;
  g.log_sigma *= inv;

  // Closed-form KL terms.
  out.value.kl_spatial = KlSpatial(sp, kf);
  out.value.kl_omega = KlOmega(tp);
  out.value.kl_weights = KlWeights(tp);

  g.mu -= sp.mu;
  const KernelScalarGrad klg = KlSpatialGrad(kf, ns);
  g.log_alpha -= klg.log_alpha;
  g.log_beta -= klg.log_beta;

  g.m -= tp.m;
  g.log_s.array() -= s_std.array().square() - 1.0;
  for (Index n = 0; n < ns; ++n) {
    g.r.row(n) -= l[n] * tp.r.row(n);
    g.log_p.row(n).array() -= p.row(n).array().square() * l[n] - 1.0;
    const double sum_sq = p.row(n).squaredNorm() + tp.r.row(n).squaredNorm();
    g.log_l[n] -= 0.5 * (sum_sq * l[n] - static_cast<double>(nj));
  }
  return out;
}

std::vector<ParamBlock> ParamLayout(const ModelState& st) {
  const Index ns = st.sources();
  const Index nj = st.temporal.features();
  std::vector<ParamBlock> blocks = {
      {"mu", 0, ns * st.spatial.mu.cols()},
      {"log_alpha", 0, 1},
      {"log_beta", 0, 1},
      {"r", 0, ns * nj},
      {"log_p", 0, ns * nj},
      {"m", 0, ns * nj},
      {"log_s", 0, ns * nj},
      {"log_l", 0, ns},
      {"t", 0, st.shifts.t.size()},
      {"log_sigma", 0, 1},
  };
  Index offset = 0;
  for (auto& blk : blocks) {
    blk.offset = offset;
    offset += blk.size;
  }
  return blocks;
}

namespace {

template <class Fn>
void VisitBlocks(Fn&& fn, auto& mu, auto& la, auto& lb, auto& r, auto& lp, auto& m, auto& ls,
                 auto& ll, auto& t, auto& lsig) {
  fn(mu.data(), mu.size());
  fn(&la, 1);
  fn(&lb, 1);
  fn(r.data(), r.size());
  fn(lp.data(), lp.size());
  fn(m.data(), m.size());
  fn(ls.data(), ls.size());
  fn(ll.data(), ll.size());
  fn(t.data(), t.size());
  fn(&lsig, 1);
}

}  // namespace

Vector PackParams(const ModelState& st) {
  const auto layout = ParamLayout(st);
  Vector x(layout.back().offset + layout.back().size);
  Index pos = 0;
  auto copy = [&](const double* src, Index n) {
    std::copy(src, src + n, x.data() + pos);
    pos += n;
  };
  const auto& tp = st.temporal;
  VisitBlocks(copy, st.spatial.mu, st.spatial.log_alpha, st.spatial.log_beta, tp.r, tp.log_p,
              tp.m, tp.log_s, tp.log_l, st.shifts.t, st.log_sigma);
  return x;
}

void UnpackParams(const Vector& x, ModelState& st) {
  const auto layout = ParamLayout(st);
  if (x.size() != layout.back().offset + layout.back().size) {
    throw Error(ErrorCode::kShapeMismatch, "parameter vector length does not match state");
  }
  Index pos = 0;
  auto copy = [&](double* dst, Index n) {
    std::copy(x.data() + pos, x.data() + pos + n, dst);
    pos += n;
  };
  auto& tp = st.temporal;
  VisitBlocks(copy, st.spatial.mu, st.spatial.log_alpha, st.spatial.log_beta, tp.r, tp.log_p,
              tp.m, tp.log_s, tp.log_l, st.shifts.t, st.log_sigma);
}

Vector PackGradient(const ModelGradient& g) {
  const Index n = g.mu.size() + 2 + g.r.size() + g.log_p.size() + g.m.size() + g.log_s.size() +
                  g.log_l.size() + g.t.size() + 1;
  Vector x(n);
  Index pos = 0;
  auto copy = [&](const double* src, Index k) {
    std::copy(src, src + k, x.data() + pos);
    pos += k;
  };
  VisitBlocks(copy, g.mu, g.log_alpha, g.log_beta, g.r, g.log_p, g.m, g.log_s, g.log_l, g.t,
              g.log_sigma);
  return x;
}

ModelGradient FiniteDifferenceGradient(const ModelState& state, const DataMatrix& data,
                                       const Hyperparams& hp,
                                       const std::vector<NoiseDraws>& draws, double h) {
  const Vector x0 = PackParams(state);
  Vector fd(x0.size());
  ModelState probe = state;
  Vector x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    x[i] = x0[i] + h;
    UnpackParams(x, probe);
    const double up = Elbo(probe, data, hp, draws).total();
    x[i] = x0[i] - h;
    UnpackParams(x, probe);
    const double down = Elbo(probe, data, hp, draws).total();
    x[i] = x0[i];
    fd[i] = (up - down) / (2.0 * h);
  }
  // Reuse the state-shaped container to carry the gradient back out.
  ModelState shaped = state;
  UnpackParams(fd, shaped);
  ModelGradient g;
  g.mu = shaped.spatial.mu;
  g.log_alpha = shaped.spatial.log_alpha;
  g.log_beta = shaped.spatial.log_beta;
  g.r = shaped.temporal.r;
  g.log_p = shaped.temporal.log_p;
  g.m = shaped.temporal.m;
  g.log_s = shaped.temporal.log_s;
  g.log_l = shaped.temporal.log_l;
  g.t = shaped.shifts.t;
  g.log_sigma = shaped.log_sigma;
  return g;
}

GradCheckReport CompareGradients(const ModelState& state, const ModelGradient& analytic,
                                 const ModelGradient& numeric, double rel_tol,
                                 double abs_floor) {
  const Vector ga = PackGradient(analytic);
  const Vector gn = PackGradient(numeric);
  GradCheckReport rep;
  rep.passed = true;
  for (const ParamBlock& blk : ParamLayout(state)) {
    GradCheckBlock out{blk.name, 0.0, 0.0, 0};
    for (Index i = blk.offset; i < blk.offset + blk.size; ++i) {
      const double diff = std::abs(ga[i] - gn[i]);
      const double denom = std::max(std::abs(ga[i]), std::abs(gn[i]));
      // Reported relative error skips coordinates whose magnitude is itself
      // below the floor; the pass rule is applied to every coordinate.
      const double rel = denom > abs_floor ? diff / denom : 0.0;
      if (diff > out.max_abs_error) out.max_abs_error = diff;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_index = i - blk.offset;
      }
      if (!(diff <= abs_floor || diff / denom < rel_tol)) rep.passed = false;
    }
    rep.max_rel_error = std::max(rep.max_rel_error, out.max_rel_error);
    rep.blocks.push_back(out);
  }
  return rep;
}

CheckInstance MakeCheckInstance(const std::string& name, std::uint64_t seed) {
  CheckInstance ci;
  Index side = 0;
  if (name == "tiny") {
    side = 2;
    ci.hp.n_sources = 1;
    ci.hp.n_features_rff = 2;
  } else if (name == "small") {
    side = 3;
    ci.hp.n_sources = 2;
    ci.hp.n_features_rff = 3;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "unknown check instance '" + name + "'");
  }
  ci.hp.sigma = 0.7;
  ci.hp.lambda = 2.0;
  ci.hp.control_points = Hyperparams::DefaultControlPoints(5);
  ci.hp.n_mc = 2;

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](auto& x, double scale) {
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = scale * normal(rng);
  };
  ci.data.grid = GridGeometry::Lattice(side, side);
  ci.data.values.resize(6, side * side);
  fill(ci.data.values, 1.0);

  ModelState& st = ci.state;
  st = InitModel(ci.data, ci.hp, seed);
  fill(st.spatial.mu, 0.5);
  fill(st.temporal.r, 1.0);
  fill(st.temporal.log_p, 0.3);
  fill(st.temporal.m, 0.7);
  fill(st.temporal.log_s, 0.3);
  fill(st.temporal.log_l, 0.3);
  fill(st.shifts.t, 1.0);
  st.spatial.log_alpha = -0.5;
  st.spatial.log_beta = std::log(0.9);
  ci.draws = SampleDraws(st, ci.hp.n_mc, rng);
  return ci;
}

}  // namespace stsep
