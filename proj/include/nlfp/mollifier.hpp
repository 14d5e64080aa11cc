#pragma once

#include "nlfp/fpe_residual.hpp"

namespace nlfp {

/// rho^t(s) = 140 s^3 (1-s)^3 on [0, 1].
inline double time_bump(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  const double u = s * (1.0 - s);
  return 140.0 * u * u * u;
}

template <int D>
constexpr double space_bump_constant() {
  if constexpr (D == 1) return 35.0 / 32.0;
  if constexpr (D == 2) return 4.0 / kPi;
  return 315.0 / (64.0 * kPi);
}

/// rho^x(x) = c_D (1 - |x|^2)^3 on B_1.
template <int D>
double space_bump(const Vec<D>& x) {
  const double u = 1.0 - x.squaredNorm();
  return u > 0.0 ? space_bump_constant<D>() * u * u * u : 0.0;
}

/// int_{-1}^{u} rho^x for D = 1.
inline double space_bump_cdf(double u) {
  if (u <= -1.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double u2 = u * u;
  return (35.0 / 32.0) * (u * (1.0 - u2 + 0.6 * u2 * u2 - u2 * u2 * u2 / 7.0) + 16.0 / 35.0);
}

/// Standard normal density (2 pi)^{-D/2} exp(-|x|^2/2).
template <int D>
double gaussian_floor(const Vec<D>& x) {
  return std::pow(2.0 * kPi, -0.5 * D) * std::exp(-0.5 * x.squaredNorm());
}

/// The mollified curve mu^eps_t = (1-eps)(rho_eps * mu)(t) + eps phi with
/// rho_eps(t, x) = rho^t(t/eps) rho^x(x/eps) / eps^{D+1}.
///
/// Between grid times the curve is interpolated linearly in t; it is frozen
/// at the first snapshot before the window and at the last one after it.
/// Coefficients and kernels are switched off in the frozen regions.
template <int D>
class MollifiedFamily {
public:
  struct TimeNode {
    double s;
    double weight;
    int snapshot;
    bool active;
  };

  MollifiedFamily(MeasureCurve<D> curve, double eps, double ell = 0.5) : curve_(std::move(curve)), eps_(eps) {
    if (curve_.empty()) throw EmptyCurve("cannot mollify an empty curve");
    curve_.validate(1e-6);
    require(eps > 0.0 && eps < ell, "mollification parameter must lie in (0, ell)");
    if constexpr (D == 1) {
      for (const auto& s : curve_.snapshots) {
        if (const auto* pc = std::get_if<ParticleCloud<1>>(&s)) {
          std::vector<std::size_t> order(pc->size());
          for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
          std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pc->positions[a](0) < pc->positions[b](0); });
          ParticleCloud<1> sorted;
          for (std::size_t i : order) {
            sorted.positions.push_back(pc->positions[i]);
            sorted.weights.push_back(pc->weights[i]);
          }
          sorted_.push_back(std::move(sorted));
        } else {
          sorted_.emplace_back();
        }
      }
    }
  }

  double eps() const { return eps_; }
  const MeasureCurve<D>& curve() const { return curve_; }

  /// Quadrature of s -> rho^t_eps(t - s) over [t - eps, t], with hat-function
  /// weights onto the snapshots. Exact for piecewise-linear-in-time data.
  std::vector<TimeNode> time_nodes(double t) const {
    const double lo = t - eps_, hi = t;
    std::vector<double> cuts{lo, hi};
    for (double tn : curve_.times)
      if (tn > lo && tn < hi) cuts.push_back(tn);
    std::sort(cuts.begin(), cuts.end());
    const GaussRule& g = gauss_legendre(8);
    std::vector<TimeNode> out;
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      const double a = cuts[p], b = cuts[p + 1];
      if (!(b > a)) continue;
      for (std::size_t i = 0; i < g.nodes.size(); ++i) {
        const double s = 0.5 * (a + b) + 0.5 * (b - a) * g.nodes[i];
        const double w = 0.5 * (b - a) * g.weights[i] * time_bump((t - s) / eps_) / eps_;
        if (s <= curve_.start()) {
          out.push_back({s, w, 0, false});
        } else if (s >= curve_.end()) {
          out.push_back({s, w, static_cast<int>(curve_.size()) - 1, false});
        } else {
          const auto it = std::upper_bound(curve_.times.begin(), curve_.times.end(), s);
          const int j = static_cast<int>(it - curve_.times.begin());
          const double u = (s - curve_.times[j - 1]) / (curve_.times[j] - curve_.times[j - 1]);
          out.push_back({s, w * (1.0 - u), j - 1, true});
          out.push_back({s, w * u, j, true});
        }
      }
    }
    return out;
  }

  /// Calls visit(s, y, weight, active) for every atom of
  /// rho_eps(t - s, x - y) mu_s(dy) ds, where `weight` includes the space bump.
  template <class Visit>
  void visit(double t, const Vec<D>& x, Visit&& visit) const {
    for (const TimeNode& tn : time_nodes(t)) {
      if (tn.weight == 0.0) continue;
      const auto& snap = curve_.snapshots[tn.snapshot];
      if (const auto* gd = std::get_if<GridDensity>(&snap)) {
        if constexpr (D == 1) {
          const double half = 0.5 * gd->h;
          const double xl = x(0) - eps_ - half, xr = x(0) + eps_ + half;
          const long n = static_cast<long>(gd->size());
          long lo = static_cast<long>(std::floor((xl - gd->x0) / gd->h));
          long hi = static_cast<long>(std::ceil((xr - gd->x0) / gd->h));
          if (!gd->periodic) {
            lo = std::max<long>(0, lo);
            hi = std::min<long>(n - 1, hi);
          }
          for (long i = lo; i <= hi; ++i) {
            // On a periodic grid, cell i is the image of cell i mod n.
            const long ii = ((i % n) + n) % n;
            const double v = gd->values[ii];
            if (v == 0.0) continue;
            const double y = gd->x0 + static_cast<double>(i) * gd->h;
            const double m = space_bump_cdf((x(0) - y + half) / eps_) - space_bump_cdf((x(0) - y - half) / eps_);
            if (m > 0.0) visit(tn.s, Vec<1>(gd->node(ii)), tn.weight * v * m, tn.active);
          }
        }
      } else if constexpr (D == 1) {
        const auto& pc = sorted_[tn.snapshot];
        auto first = std::lower_bound(pc.positions.begin(), pc.positions.end(), x(0) - eps_,
                                      [](const Vec<1>& p, double v) { return p(0) < v; });
        for (auto it = first; it != pc.positions.end() && (*it)(0) <= x(0) + eps_; ++it) {
          const std::size_t i = static_cast<std::size_t>(it - pc.positions.begin());
          const double r = space_bump<1>(Vec<1>((x(0) - (*it)(0)) / eps_)) / eps_;
          if (r > 0.0) visit(tn.s, *it, tn.weight * pc.weights[i] * r, tn.active);
        }
      } else {
        const auto& pc = std::get<ParticleCloud<D>>(snap);
        const double scale = std::pow(eps_, -D);
        for (std::size_t i = 0; i < pc.size(); ++i) {
          const Vec<D> u = (x - pc.positions[i]) / eps_;
          if (u.squaredNorm() >= 1.0) continue;
          visit(tn.s, pc.positions[i], tn.weight * pc.weights[i] * scale * space_bump<D>(u), tn.active);
        }
      }
    }
  }

  /// (rho_eps * (h mu))(t, x); h is switched off outside the curve window.
  template <class T, class H>
  T convolve(double t, const Vec<D>& x, H&& h) const {
    T sum = detail::zero_value<T>();
    visit(t, x, [&](double s, const Vec<D>& y, double w, bool active) {
      if (active) sum += w * h(s, y);
    });
    return sum;
  }

  /// (rho_eps * mu)(t, x), with the frozen extension.
  double smoothed(double t, const Vec<D>& x) const {
    double sum = 0.0;
    visit(t, x, [&](double, const Vec<D>&, double w, bool) { sum += w; });
    return sum;
  }

  /// mu^eps_t(x).
  double density(double t, const Vec<D>& x) const { return (1.0 - eps_) * smoothed(t, x) + eps_ * gaussian_floor<D>(x); }

  /// Spatial extent [lo, hi] of the snapshots' mass along axis 0.
  std::pair<double, double> extent() const {
    double lo = kInf, hi = -kInf;
    for (const auto& s : curve_.snapshots) {
      if (const auto* gd = std::get_if<GridDensity>(&s)) {
        for (std::size_t i = 0; i < gd->size(); ++i)
          if (gd->values[i] > 0.0) {
            lo = std::min(lo, gd->node(i) - 0.5 * gd->h);
            hi = std::max(hi, gd->node(i) + 0.5 * gd->h);
          }
      } else {
        for (const auto& p : std::get<ParticleCloud<D>>(s).positions) {
          lo = std::min(lo, p(0));
          hi = std::max(hi, p(0));
        }
      }
    }
    return {lo, hi};
  }

  /// int g(x) mu^eps_t(x) dx over [a, b] (D = 1), Gauss panels of width eps/4.
  template <class G>
  double integrate_1d(double t, double a, double b, G&& g) const {
    static_assert(D == 1, "integrate_1d is one-dimensional");
    const int panels = std::max(1, static_cast<int>(std::ceil((b - a) / (0.25 * eps_))));
    const GaussRule& rule = gauss_legendre(16);
    const double h = (b - a) / panels;
    std::vector<double> part(panels);
    parallel_for(panels, [&](std::size_t p) {
      double s = 0.0;
      const double mid = a + (p + 0.5) * h;
      for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const Vec<1> x(mid + 0.5 * h * rule.nodes[i]);
        s += rule.weights[i] * g(x) * density(t, x);
      }
      part[p] = 0.5 * h * s;
    });
    double total = 0.0;
    for (double v : part) total += v;
    return total;
  }

  /// int mu^eps_t dx by quadrature (D = 1).
  double mass(double t) const {
    auto [lo, hi] = extent();
    double a = lo - eps_, b = hi + eps_;
    if (const auto* gd = std::get_if<GridDensity>(&curve_.snapshots.front()); gd && gd->periodic) {
      // One period carries all of the smoothed mass.
      a = gd->x0 - 0.5 * gd->h;
      b = a + gd->h * static_cast<double>(gd->size());
      return integrate_1d(t, a, b, [](const Vec<1>&) { return 1.0; }) +
             eps_ * (integrate_floor(std::min(a, -14.0), a) + integrate_floor(b, std::max(b, 14.0)));
    }
    const double inside = integrate_1d(t, a, b, [](const Vec<1>&) { return 1.0; });
    // Outside [a, b] only the Gaussian floor is left.
    return inside + eps_ * (integrate_floor(std::min(a, -14.0), a) + integrate_floor(b, std::max(b, 14.0)));
  }

private:
  double integrate_floor(double a, double b) const {
    if (!(b > a)) return 0.0;
    return integrate_panels([](double x) { return gaussian_floor<1>(Vec<1>(x)); }, a, b,
                            std::max(1, static_cast<int>(std::ceil((b - a) / 0.25))));
  }

  MeasureCurve<D> curve_;
  double eps_;
  std::vector<ParticleCloud<D>> sorted_;
};

/// mu^eps_t(x).
template <int D>
double mollify_measure(const MollifiedFamily<D>& fam, double t, const Vec<D>& x) {
  return fam.density(t, x);
}

template <int D>
struct MollifiedCoefficients {
  Mat<D> a = Mat<D>::Zero();
  Vec<D> b = Vec<D>::Zero();
};

/// a^eps = [(1-eps) rho*(a mu) + eps phi I] / mu^eps,
/// b^eps = [(1-eps) rho*(b mu) - eps phi x] / mu^eps.
template <int D>
MollifiedCoefficients<D> mollify_coeffs(const MollifiedFamily<D>& fam, const CoefficientField<D>& c, double t,
                                        const Vec<D>& x) {
  const double eps = fam.eps();
  const double phi = gaussian_floor<D>(x);
  const double mu = fam.density(t, x);
  MollifiedCoefficients<D> out;
  Mat<D> na = eps * phi * Mat<D>::Identity();
  Vec<D> nb = -eps * phi * x;
  if (c.has_diffusion()) na += (1.0 - eps) * fam.template convolve<Mat<D>>(t, x, [&](double s, const Vec<D>& y) { return c.diffusion(s, y); });
  if (c.has_drift()) nb += (1.0 - eps) * fam.template convolve<Vec<D>>(t, x, [&](double s, const Vec<D>& y) { return c.drift(s, y); });
  out.a = na / mu;
  out.b = nb / mu;
  return out;
}

template <int D>
struct MollifiedFunctionals {
  double g = 0.0;
  /// y -> H^{nu^eps}_t(x, y)
  std::function<double(const Vec<D>&)> H;
};

/// g^{nu^eps}_t(x) and H^{nu^eps}_t(x, .) by Fubini against the mollification weight.
template <int D>
MollifiedFunctionals<D> mollified_kernel_functionals(const MollifiedFamily<D>& fam, const LevyKernel<D>& k, double t,
                                                     const Vec<D>& x, const QuadratureSpec& q = {}) {
  MollifiedFunctionals<D> out;
  if (k.is_zero()) {
    out.H = [](const Vec<D>&) { return 0.0; };
    return out;
  }
  const double factor = (1.0 - fam.eps()) / fam.density(t, x);
  std::vector<std::pair<double, Vec<D>>> atoms;
  std::vector<double> weights;
  fam.visit(t, x, [&](double s, const Vec<D>& y, double w, bool active) {
    if (!active) return;
    atoms.emplace_back(s, y);
    weights.push_back(w);
  });
  double g = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) g += weights[i] * small_jump_moment(k, atoms[i].first, atoms[i].second, q).value;
  out.g = factor * g;
  out.H = [k, q, x, factor, atoms, weights](const Vec<D>& y) {
    const double scale = 1.0 + (x - y).norm();
    double h = 0.0;
    for (std::size_t i = 0; i < atoms.size(); ++i)
      h += weights[i] * log_tail_integral(k, atoms[i].first, atoms[i].second, scale, k.ell, q).value;
    return factor * h;
  };
  return out;
}

// ---------------------------------------------------------------------------
// Regularization estimates
// ---------------------------------------------------------------------------

struct InequalityCheck {
  std::string name;
  /// max over probes of lhs - rhs.
  double max_excess = -kInf;
  std::size_t probes = 0;
  bool holds(double tol = 1e-12) const { return max_excess <= tol; }
};

template <int D>
struct RegularizationChecks {
  /// The four estimates on rho_eps * (a mu), rho_eps * (b mu), g and H of the unnormalized kernel.
  std::vector<InequalityCheck> lemma;
  /// sup[(|a^eps| + g^eps)/(1+|x|^2) + |b^eps|/(1+|x|)] <= 1 + 2 sup[base].
  InequalityCheck growth;
  /// sup_x H^{nu^eps}(x, y) <= sup_x H^nu(x, y) for each probed y.
  InequalityCheck shifted_tail;
  bool all_hold(double tol = 1e-12) const {
    for (const auto& c : lemma)
      if (!c.holds(tol)) return false;
    return growth.holds(tol) && shifted_tail.holds(tol);
  }
};

/// Evaluates the regularization estimates at probes (t, x) and shift points y.
/// Base suprema are taken over the atoms (s, y) the mollifier integrates,
/// together with the x probes; this is the smallest honest sampled supremum.
template <int D>
RegularizationChecks<D> check_regularization(const MollifiedFamily<D>& fam, const CoefficientField<D>& c,
                                             const LevyKernel<D>& k, const ProbeGrid<D>& probes,
                                             const std::vector<Vec<D>>& shifts, const QuadratureSpec& q = {}) {
  const double eps = fam.eps();
  struct Atom {
    double s;
    Vec<D> y;
    double w;
  };
  struct Eval {
    double smoothed = 0.0, mu = 0.0;
    Mat<D> ra = Mat<D>::Zero();
    Vec<D> rb = Vec<D>::Zero();
    double rg = 0.0;
    std::vector<double> rH;  // unnormalized H at each shift
    double sup_a = 0.0, sup_b = 0.0, sup_g = 0.0, sup_base = 0.0;
    std::vector<double> sup_H;
    double growth_lhs = 0.0;
  };
  // sup-side functionals of an atom do not depend on the probe; memoize them.
  struct AtomValues {
    double g = 0.0;
    std::vector<double> H;
  };
  std::map<std::vector<double>, AtomValues> memo;
  std::mutex memo_mutex;
  auto atom_values = [&](double s, const Vec<D>& y) {
    std::vector<double> key{s};
    for (int i = 0; i < D; ++i) key.push_back(y(i));
    {
      std::lock_guard<std::mutex> lock(memo_mutex);
      const auto it = memo.find(key);
      if (it != memo.end()) return it->second;
    }
    AtomValues v;
    if (!k.is_zero()) {
      v.g = small_jump_moment(k, s, y, q).value;
      for (const auto& sh : shifts) v.H.push_back(shifted_log_tail(k, s, y, sh, q).value);
    } else {
      v.H.assign(shifts.size(), 0.0);
    }
    std::lock_guard<std::mutex> lock(memo_mutex);
    memo.emplace(std::move(key), v);
    return v;
  };
  std::vector<Eval> ev(probes.size());
  parallel_for(probes.size(), [&](std::size_t pi) {
    const auto& p = probes[pi];
    Eval& e = ev[pi];
    std::vector<Atom> atoms;
    fam.visit(p.t, p.x, [&](double s, const Vec<D>& y, double w, bool active) {
      e.smoothed += w;
      if (active) atoms.push_back({s, y, w});
    });
    e.mu = (1.0 - eps) * e.smoothed + eps * gaussian_floor<D>(p.x);
    e.rH.assign(shifts.size(), 0.0);
    e.sup_H.assign(shifts.size(), 0.0);
    for (const Atom& at : atoms) {
      const Mat<D> a = c.diffusion(at.s, at.y);
      const Vec<D> b = c.drift(at.s, at.y);
      const AtomValues av = atom_values(at.s, at.y);
      const double g = av.g;
      const double ny2 = 1.0 + at.y.squaredNorm(), ny = 1.0 + at.y.norm();
      e.ra += at.w * a;
      e.rb += at.w * b;
      e.rg += at.w * g;
      e.sup_a = std::max(e.sup_a, 2.0 * matrix_norm<D>(a) / ny2);
      e.sup_b = std::max(e.sup_b, 2.0 * b.norm() / ny);
      e.sup_g = std::max(e.sup_g, 2.0 * g / ny2);
      e.sup_base = std::max(e.sup_base, (matrix_norm<D>(a) + g) / ny2 + b.norm() / ny);
      if (!k.is_zero()) {
        for (std::size_t j = 0; j < shifts.size(); ++j) {
          e.rH[j] += at.w * log_tail_integral(k, at.s, at.y, 1.0 + (p.x - shifts[j]).norm(), k.ell, q).value;
          e.sup_H[j] = std::max(e.sup_H[j], av.H[j]);
        }
      }
    }
    const Mat<D> ae = ((1.0 - eps) * e.ra + eps * gaussian_floor<D>(p.x) * Mat<D>::Identity()) / e.mu;
    const Vec<D> be = ((1.0 - eps) * e.rb - eps * gaussian_floor<D>(p.x) * p.x) / e.mu;
    const double ge = (1.0 - eps) * e.rg / e.mu;
    e.growth_lhs = (matrix_norm<D>(ae) + ge) / (1.0 + p.x.squaredNorm()) + be.norm() / (1.0 + p.x.norm());
  });

  RegularizationChecks<D> out;
  out.lemma = {{"diffusion", -kInf, probes.size()}, {"drift", -kInf, probes.size()}, {"small_jumps", -kInf, probes.size()},
               {"shifted_tail", -kInf, probes.size() * shifts.size()}};
  double sup_lhs = 0.0, sup_base = 0.0;
  std::vector<double> sup_He(shifts.size(), 0.0), sup_Hb(shifts.size(), 0.0);
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const auto& p = probes[pi];
    const Eval& e = ev[pi];
    const double nx2 = 1.0 + p.x.squaredNorm(), nx = 1.0 + p.x.norm();
    out.lemma[0].max_excess = std::max(out.lemma[0].max_excess, matrix_norm<D>(e.ra) / nx2 - e.sup_a * e.smoothed);
    out.lemma[1].max_excess = std::max(out.lemma[1].max_excess, e.rb.norm() / nx - e.sup_b * e.smoothed);
    out.lemma[2].max_excess = std::max(out.lemma[2].max_excess, e.rg / nx2 - e.sup_g * e.smoothed);
    for (std::size_t j = 0; j < shifts.size(); ++j) {
      out.lemma[3].max_excess = std::max(out.lemma[3].max_excess, e.rH[j] - 2.0 * e.sup_H[j] * e.smoothed);
      sup_He[j] = std::max(sup_He[j], (1.0 - eps) * e.rH[j] / e.mu);
      sup_Hb[j] = std::max(sup_Hb[j], e.sup_H[j]);
    }
    sup_lhs = std::max(sup_lhs, e.growth_lhs);
    sup_base = std::max(sup_base, e.sup_base);
  }
  // Base suprema also include the probes themselves.
  for (const auto& p : probes) {
    const double g = k.is_zero() ? 0.0 : small_jump_moment(k, p.t, p.x, q).value;
    sup_base = std::max(sup_base, (matrix_norm<D>(c.diffusion(p.t, p.x)) + g) / (1.0 + p.x.squaredNorm()) +
                                      c.drift(p.t, p.x).norm() / (1.0 + p.x.norm()));
    if (!k.is_zero())
      for (std::size_t j = 0; j < shifts.size(); ++j) sup_Hb[j] = std::max(sup_Hb[j], shifted_log_tail(k, p.t, p.x, shifts[j], q).value);
  }
  out.growth = {"growth", sup_lhs - (1.0 + 2.0 * sup_base), probes.size()};
  out.shifted_tail = {"shifted_tail_sup", shifts.empty() ? 0.0 : -kInf, shifts.size()};
  for (std::size_t j = 0; j < shifts.size(); ++j) out.shifted_tail.max_excess = std::max(out.shifted_tail.max_excess, sup_He[j] - sup_Hb[j]);
  return out;
}

/// |mu^eps_t(f) - mu_t(f)| at a grid time (D = 1).
inline double weak_gap(const MollifiedFamily<1>& fam, const TestFunction<1>& f, double t) {
  const int j = fam.curve().index_of(t, 1e-9);
  require(j >= 0, "weak_gap time must be on the curve's grid");
  const double a = f.center(0) - f.radius, b = f.center(0) + f.radius;
  const double smooth = fam.integrate_1d(t, a, b, [&](const Vec<1>& x) { return f.value(x); });
  const double exact = integrate<1>(fam.curve().snapshots[j], [&](const Vec<1>& x) { return f.value(x); });
  return std::abs(smooth - exact);
}

// ---------------------------------------------------------------------------
// Mollified FPE
// ---------------------------------------------------------------------------

/// Evaluation grid for the mollified residual. A periodic base grid is
/// reused as is and the grid fields are ignored.
struct MollifiedGrid {
  double x_lo = -10.0;
  double x_hi = 10.0;
  double h = 0.02;
};

/// Residual of (mu^eps_t) against L^eps on a 1-D grid. The base kernel must
/// be separable (intensity(t,x) * unit): nu^eps is then separable too, with
/// intensity (1-eps) rho_eps*(I mu) / mu^eps.
inline ResidualReport verify_mollified_fpe(const MollifiedFamily<1>& fam, const CoefficientField<1>& c, const LevyKernel<1>& k,
                                           const TestBank<1>& bank, const std::vector<double>& times,
                                           const MollifiedGrid& grid_in = {}, const ResidualOptions& opt = {}) {
  require(k.is_zero() || k.separable(), "mollified residual needs a separable kernel");
  const double eps = fam.eps();
  const auto& base = fam.curve();
  MollifiedGrid grid = grid_in;
  bool periodic = false;
  if (const auto* gd = std::get_if<GridDensity>(&base.snapshots.front()); gd && gd->periodic) {
    periodic = true;
    grid.x_lo = gd->x0;
    grid.h = gd->h;
    grid.x_hi = gd->node(gd->size() - 1);
  }
  const int n = static_cast<int>(std::floor((grid.x_hi - grid.x_lo) / grid.h + 1e-9)) + 1;
  const std::size_t nt = base.size();

  struct Fields {
    std::vector<double> mu, na, nb, ni;
  };
  std::vector<Fields> tab(nt);
  for (std::size_t j = 0; j < nt; ++j) {
    const double t = base.times[j];
    Fields& F = tab[j];
    F.mu.resize(n);
    F.na.resize(n);
    F.nb.resize(n);
    F.ni.resize(n);
    parallel_for(n, [&](std::size_t i) {
      const Vec<1> x(grid.x_lo + i * grid.h);
      double sm = 0.0, ra = 0.0, rb = 0.0, ri = 0.0;
      fam.visit(t, x, [&](double s, const Vec<1>& y, double w, bool active) {
        sm += w;
        if (!active) return;
        if (c.has_diffusion()) ra += w * c.diffusion(s, y)(0, 0);
        if (c.has_drift()) rb += w * c.drift(s, y)(0);
        if (!k.is_zero()) ri += w * k.intensity(s, y);
      });
      const double phi = gaussian_floor<1>(x);
      F.mu[i] = (1.0 - eps) * sm + eps * phi;
      F.na[i] = (1.0 - eps) * ra + eps * phi;
      F.nb[i] = (1.0 - eps) * rb - eps * phi * x(0);
      F.ni[i] = (1.0 - eps) * ri;
    });
  }

  MeasureCurve<1> mc;
  for (std::size_t j = 0; j < nt; ++j) {
    GridDensity g;
    g.x0 = grid.x_lo;
    g.h = grid.h;
    g.periodic = periodic;
    g.values = tab[j].mu;
    const double m = g.mass();
    for (double& v : g.values) v /= m;
    mc.push_back(base.times[j], g);
  }
  // Coefficients are read back at the grid nodes and grid times the residual visits.
  auto shared = std::make_shared<std::vector<Fields>>(std::move(tab));
  auto times_ptr = std::make_shared<std::vector<double>>(base.times);
  auto lookup = [shared, times_ptr, grid, n](double t, double x, auto member) {
    const auto& ts = *times_ptr;
    const auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-12);
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(it - ts.begin()), ts.size() - 1);
    const double s = (x - grid.x_lo) / grid.h;
    const long i = std::clamp<long>(std::lround(s), 0, n - 1);
    const Fields& F = (*shared)[j];
    return (F.*member)[i] / F.mu[i];
  };
  CoefficientField<1> ce;
  ce.a = [lookup](double t, const Vec<1>& x) { return Mat<1>(lookup(t, x(0), &Fields::na)); };
  ce.b = [lookup](double t, const Vec<1>& x) { return Vec<1>(lookup(t, x(0), &Fields::nb)); };
  LevyKernel<1> ke = k;
  if (!k.is_zero()) {
    ke.intensity = [lookup](double t, const Vec<1>& x) { return lookup(t, x(0), &Fields::ni); };
    auto unit = k.unit;
    auto inten = ke.intensity;
    ke.density = [unit, inten](double t, const Vec<1>& x, const Vec<1>& z) { return inten(t, x) * unit->density(t, x, z); };
    ke.inner_moment = [unit, inten](double t, const Vec<1>& x, double d) { return Mat<1>(inten(t, x) * unit->inner_moment(t, x, d)); };
  }
  return residual<1>(mc, ce, ke, bank, times, opt);
}

}  // namespace nlfp
