#include "afem/validation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

#include "afem/errors.hpp"

namespace afem {

// ---- rng -------------------------------------------------------------------

unsigned long long Rng::next_u64() {
    // splitmix64
    unsigned long long z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

double Rng::next_symmetric() { return 2.0 * next_double() - 1.0; }

int Rng::next_index(int n) {
    if (n <= 0) throw InputError("next_index needs a positive range");
    return static_cast<int>(next_u64() % static_cast<unsigned long long>(n));
}

// ---- plumbing --------------------------------------------------------------

namespace {

double vdot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void vaxpy(std::vector<double>& y, double c, const std::vector<double>& x) {
    for (size_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

DiscreteFunction random_function(const Mesh& mesh, const DofMap& dofs, Rng& rng,
                                 double scale) {
    std::vector<double> x(dofs.num_free());
    for (double& v : x) v = scale * rng.next_symmetric();
    return from_free_values(mesh, dofs, x);
}

DiscreteFunction shifted(const DiscreteFunction& v, double h, const DiscreteFunction& w) {
    DiscreteFunction out = v;
    for (size_t i = 0; i < out.values.size(); ++i) out.values[i] += h * w.values[i];
    return out;
}

std::string fmt_detail(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// Number of eigenvalues of the symmetric tridiagonal (diag, off) below x,
// by the standard LDL sign count.
int tridiag_count_below(const std::vector<double>& diag, const std::vector<double>& off,
                        double x) {
    int count = 0;
    double d = 1.0;
    for (size_t i = 0; i < diag.size(); ++i) {
        double sub = i ? off[i - 1] * off[i - 1] / d : 0.0;
        d = diag[i] - x - sub;
        if (d == 0.0) d = -1e-300;
        if (d < 0.0) ++count;
    }
    return count;
}

std::pair<double, double> tridiag_extremes(const std::vector<double>& diag,
                                           const std::vector<double>& off) {
    const int m = static_cast<int>(diag.size());
    if (m == 0) return {1.0, 1.0};
    double lo = diag[0], hi = diag[0];
    for (int i = 0; i < m; ++i) {
        double r = (i ? std::abs(off[i - 1]) : 0.0) + (i + 1 < m ? std::abs(off[i]) : 0.0);
        lo = std::min(lo, diag[i] - r);
        hi = std::max(hi, diag[i] + r);
    }
    auto bisect = [&](int want_below) {
        // smallest x with count_below(x) >= want_below
        double a = lo - 1e-12, b = hi + 1e-12;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (a + b);
            if (tridiag_count_below(diag, off, mid) >= want_below)
                b = mid;
            else
                a = mid;
        }
        return 0.5 * (a + b);
    };
    return {bisect(1), bisect(m)};
}

// Extreme eigenvalues of P^{-1} M (self-adjoint in the M inner product) by
// Lanczos with full reorthogonalization.
std::pair<double, double> preconditioned_extremes(const SparseSpdMatrix& M,
                                                  const Preconditioner& P, Rng& rng) {
    const int n = M.n;
    if (n == 0) return {1.0, 1.0};
    const int m_max = std::min(n, 80);

    std::vector<std::vector<double>> Q, MQ;
    std::vector<double> diag, off;
    std::vector<double> q(n);
    for (double& v : q) v = rng.next_symmetric();
    std::vector<double> mq = M.multiply(q);
    double nrm = std::sqrt(std::max(0.0, vdot(q, mq)));
    if (nrm == 0.0) {
        q.assign(n, 0.0);
        q[0] = 1.0;
        mq = M.multiply(q);
        nrm = std::sqrt(vdot(q, mq));
    }
    for (double& v : q) v /= nrm;
    for (double& v : mq) v /= nrm;

    for (int j = 0; j < m_max; ++j) {
        Q.push_back(q);
        MQ.push_back(mq);
        std::vector<double> w = P(mq);  // T q
        diag.push_back(vdot(w, mq));
        for (int pass = 0; pass < 2; ++pass)
            for (size_t i = 0; i < Q.size(); ++i) vaxpy(w, -vdot(w, MQ[i]), Q[i]);
        std::vector<double> mw = M.multiply(w);
        double b = std::sqrt(std::max(0.0, vdot(w, mw)));
        if (!(b > 1e-13 * std::max(1.0, std::abs(diag.back())))) break;
        if (j + 1 < m_max) {
            off.push_back(b);
            for (int i = 0; i < n; ++i) {
                q[i] = w[i] / b;
                mq[i] = mw[i] / b;
            }
        }
    }
    if (off.size() >= diag.size()) off.resize(diag.size() - 1);
    return tridiag_extremes(diag, off);
}

}  // namespace

// ---- reporting -------------------------------------------------------------

std::string format_results(const std::vector<CheckResult>& results) {
    std::ostringstream out;
    for (const CheckResult& r : results)
        out << (r.pass ? "pass" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
    return out.str();
}

bool all_pass(const std::vector<CheckResult>& results) {
    for (const CheckResult& r : results)
        if (!r.pass) return false;
    return true;
}

// ---- mesh refinement audits ------------------------------------------------

bool refinement_counts_ok(const RefinementRelation& rel, std::string* detail) {
    const long coarse = static_cast<long>(rel.children_of.size());
    const long fine = static_cast<long>(rel.parent_of.size());
    const long unchanged = static_cast<long>(rel.unchanged.size());
    const long refined = coarse - unchanged;
    const bool ok = (refined + coarse <= fine) && (fine <= 4 * refined + unchanged);
    if (detail)
        *detail = fmt_detail("coarse=%ld fine=%ld refined=%ld unchanged=%ld", coarse, fine,
                             refined, unchanged);
    return ok;
}

Mesh random_refinement(const Mesh& mesh, Rng& rng, double mark_fraction,
                       RefinementRelation* rel) {
    const int n = mesh.num_elements();
    // Cap the marked count so repeated rounds grow the mesh additively, not
    // geometrically.
    int count = std::max(1, std::min(static_cast<int>(mark_fraction * n), 2000));
    std::vector<int> marked;
    marked.reserve(count);
    for (int i = 0; i < count; ++i) marked.push_back(rng.next_index(n));
    auto [fine, relation] = refine_nvb(mesh, marked);
    if (rel) *rel = std::move(relation);
    return std::move(fine);
}

namespace {

using TriKey = std::array<unsigned long long, 6>;

TriKey canonical_tri_key(const Mesh& m, int e) {
    std::array<std::array<double, 2>, 3> pts;
    for (int k = 0; k < 3; ++k) {
        Vec2 p = m.point(e, k);
        pts[k] = {p.x, p.y};
    }
    std::sort(pts.begin(), pts.end());
    TriKey key{};
    for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 2; ++c) {
            unsigned long long bits;
            static_assert(sizeof(bits) == sizeof(double));
            std::memcpy(&bits, &pts[k][c], sizeof(bits));
            key[2 * k + c] = bits;
        }
    return key;
}

bool triangle_contains(const Mesh& m, int e, Vec2 p, double tol) {
    Vec2 a = m.point(e, 0), b = m.point(e, 1), c = m.point(e, 2);
    double area2 = cross(b - a, c - a);
    double t = tol * area2;
    return cross(b - a, p - a) >= -t && cross(c - b, p - b) >= -t &&
           cross(a - c, p - c) >= -t;
}

// Every element of `part` lies inside one element of `whole`.
bool mesh_nested_in(const Mesh& part, const Mesh& whole) {
    for (int e = 0; e < part.num_elements(); ++e) {
        Vec2 centroid = (1.0 / 3.0) *
                        (part.point(e, 0) + part.point(e, 1) + part.point(e, 2));
        int host = -1;
        for (int f = 0; f < whole.num_elements(); ++f)
            if (triangle_contains(whole, f, centroid, 1e-10)) {
                host = f;
                break;
            }
        if (host < 0) return false;
        for (int k = 0; k < 3; ++k)
            if (!triangle_contains(whole, host, part.point(e, k), 1e-9)) return false;
    }
    return true;
}

std::set<TriKey> element_key_set(const Mesh& m) {
    std::set<TriKey> keys;
    for (int e = 0; e < m.num_elements(); ++e) keys.insert(canonical_tri_key(m, e));
    return keys;
}

}  // namespace

OverlayReport check_overlay(const std::string& geometry, int trials, Rng& rng) {
    OverlayReport rep;
    rep.trials = trials;
    const Mesh initial = make_initial_mesh(geometry);
    for (int t = 0; t < trials; ++t) {
        Mesh ancestor = initial;
        for (int r = rng.next_index(3); r > 0; --r)
            ancestor = random_refinement(ancestor, rng, 0.3);
        Mesh a = ancestor, b = ancestor;
        for (int r = rng.next_index(3); r > 0; --r) a = random_refinement(a, rng, 0.4);
        for (int r = rng.next_index(3); r > 0; --r) b = random_refinement(b, rng, 0.4);

        Mesh o = overlay(a, b, ancestor);
        long excess = o.num_elements() -
                      (a.num_elements() + b.num_elements() - ancestor.num_elements());
        rep.max_excess = std::max(rep.max_excess, excess);
        if (!mesh_nested_in(o, a) || !mesh_nested_in(o, b)) rep.refines_both = false;
        Mesh os = overlay(b, a, ancestor);
        if (os.num_elements() != o.num_elements()) rep.symmetric = false;
        Mesh oa = overlay(a, a, ancestor);
        if (element_key_set(oa) != element_key_set(a)) rep.idempotent = false;
    }
    rep.pass = rep.max_excess <= 0 && rep.refines_both && rep.idempotent && rep.symmetric;
    return rep;
}

ClosureReport check_closure(const std::string& geometry, int steps, double bound, Rng& rng) {
    ClosureReport rep;
    rep.bound = bound;
    Mesh mesh = make_initial_mesh(geometry);
    for (int s = 0; s < steps; ++s) {
        int e = rng.next_index(mesh.num_elements());
        auto [fine, rel] = refine_nvb(mesh, {e});
        rep.marked_total += 1;
        rep.created_total += fine.num_elements() - static_cast<long>(rel.unchanged.size());
        mesh = std::move(fine);
    }
    rep.ratio = double(rep.created_total) / double(std::max(1l, rep.marked_total));
    rep.pass = rep.ratio <= bound;
    return rep;
}

// ---- estimator audits ------------------------------------------------------

namespace {

double random_scale(Rng& rng, double lo_exp, double hi_exp) {
    return std::pow(10.0, lo_exp + (hi_exp - lo_exp) * rng.next_double());
}

struct StabilitySampler {
    Mesh base;
    int since_advance = 0;

    explicit StabilitySampler(const std::string& geometry)
        : base(make_initial_mesh(geometry)) {}

    // One ratio sample: |eta difference on unchanged elements| / distance.
    double sample(const ProblemSpec& spec, Rng& rng) {
        if (++since_advance >= 8 && base.num_elements() < 3000) {
            base = random_refinement(base, rng, 0.3);
            since_advance = 0;
        }
        RefinementRelation rel;
        Mesh fine = random_refinement(base, rng, 0.35, &rel);
        std::vector<int> subset;
        for (auto [coarse_id, fine_id] : rel.unchanged) subset.push_back(fine_id);
        DofMap cd = dof_map(base), fd = dof_map(fine);
        if (fd.num_free() == 0) return 0.0;
        DiscreteFunction v = random_function(fine, fd, rng, random_scale(rng, -2, 2));
        DiscreteFunction w = random_function(base, cd, rng, random_scale(rng, -2, 2));
        auto [lhs, dist] = check_stability(base, fine, rel, spec, v, w, subset);
        if (!(dist > 1e-13)) return 0.0;
        return lhs / dist;
    }
};

}  // namespace

StabilityReport check_stability_bound(const ProblemSpec& spec, const std::string& geometry,
                                      int calibration_trials, int fresh_trials, Rng& rng) {
    StabilityReport rep;
    rep.calibration_trials = calibration_trials;
    rep.fresh_trials = fresh_trials;
    StabilitySampler sampler(geometry);
    for (int t = 0; t < calibration_trials; ++t)
        rep.c_stab = std::max(rep.c_stab, sampler.sample(spec, rng));
    for (int t = 0; t < fresh_trials; ++t)
        rep.fresh_max = std::max(rep.fresh_max, sampler.sample(spec, rng));
    rep.pass = rep.c_stab > 0.0 && rep.fresh_max <= 1.05 * rep.c_stab;
    return rep;
}

ReductionReport check_reduction_bound(const ProblemSpec& spec, const std::string& geometry,
                                      int trials, Rng& rng) {
    ReductionReport rep;
    rep.trials = trials;
    Mesh base = make_initial_mesh(geometry);
    int since_advance = 0;
    for (int t = 0; t < trials; ++t) {
        if (++since_advance >= 6 && base.num_elements() < 3000) {
            base = random_refinement(base, rng, 0.3);
            since_advance = 0;
        }
        RefinementRelation rel;
        Mesh fine = random_refinement(base, rng, 0.3, &rel);
        DofMap cd = dof_map(base);
        DiscreteFunction v = random_function(base, cd, rng, random_scale(rng, -2, 2));
        auto [lhs, rhs] = check_reduction(base, fine, rel, spec, v);
        if (rhs > 1e-13) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
    }
    rep.pass = rep.max_ratio <= 1.0 + 1e-10;
    return rep;
}

// ---- solver audits ---------------------------------------------------------

namespace {

// Adaptive mesh sequence driven by exact discrete solves.
std::vector<Mesh> exact_adaptive_sequence(const ProblemSpec& spec, const Mesh& initial,
                                          double theta, long max_dofs, int max_levels) {
    std::vector<Mesh> seq{initial};
    Mesh mesh = initial;
    for (int level = 0; level < max_levels; ++level) {
        DofMap dofs = dof_map(mesh);
        if (dofs.num_free() >= max_dofs) break;
        DiscreteFunction u = spec.kind == ProblemKind::linear_diffusion
                                 ? solve_linear_direct(mesh, spec)
                                 : solve_nonlinear_picard(mesh, spec, 1e-10);
        IndicatorField eta = indicators(mesh, spec, u);
        if (eta.total() == 0.0) break;
        std::vector<int> marked = doerfler_mark(eta.eta_sq, theta);
        mesh = refine_nvb(mesh, marked).first;
        seq.push_back(mesh);
    }
    return seq;
}

}  // namespace

ContractionReport check_zarantonello_contraction(const ProblemSpec& spec,
                                                 const std::string& geometry, int trials,
                                                 long max_dofs, Rng& rng) {
    if (spec.kind != ProblemKind::scalar_nonlinear)
        throw InputError("contraction audit expects the nonlinear problem");
    ContractionReport rep;
    const double q = std::sqrt(1.0 - (spec.alpha / spec.lipschitz) * (spec.alpha / spec.lipschitz));
    rep.q_bound = q;
    rep.energy_bound = (spec.lipschitz / spec.alpha) * q * q;

    std::vector<Mesh> seq =
        exact_adaptive_sequence(spec, make_initial_mesh(geometry), 0.5, max_dofs, 40);
    // A few meshes along the hierarchy, always including the finest.
    std::vector<const Mesh*> picks;
    for (size_t i = 0; i < seq.size(); ++i)
        if (dof_map(seq[i]).num_free() > 0 &&
            (i + 1 == seq.size() || i % std::max<size_t>(1, seq.size() / 3) == 0))
            picks.push_back(&seq[i]);
    if (picks.empty()) throw InputError("no mesh with free dofs in the hierarchy");

    int per_mesh = (trials + static_cast<int>(picks.size()) - 1) / static_cast<int>(picks.size());
    for (const Mesh* mp : picks) {
        const Mesh& mesh = *mp;
        DofMap dofs = dof_map(mesh);
        DiscreteFunction star = solve_nonlinear_picard(mesh, spec, 1e-13);
        const double e_star = energy(mesh, spec, star);
        ZarantonelloSolver phi(mesh, spec);
        for (int t = 0; t < per_mesh; ++t) {
            DiscreteFunction delta =
                random_function(mesh, dofs, rng, random_scale(rng, -2, 1));
            DiscreteFunction v = shifted(star, 1.0, delta);
            double d0 = energy_dist(mesh, spec, v, star);
            if (!(d0 > 1e-10)) continue;
            DiscreteFunction pv = phi.step(v);
            double d1 = energy_dist(mesh, spec, pv, star);
            rep.max_ratio = std::max(rep.max_ratio, d1 / d0);
            double de0 = energy(mesh, spec, v) - e_star;
            double de1 = energy(mesh, spec, pv) - e_star;
            if (de0 > 1e-13) rep.max_energy_ratio = std::max(rep.max_energy_ratio, de1 / de0);
            ++rep.trials;
        }
    }
    rep.pass = rep.trials > 0 && rep.max_ratio <= rep.q_bound + 1e-8 &&
               rep.max_energy_ratio <= rep.energy_bound + 1e-8;
    return rep;
}

IncrementLemmaReport check_increment_lemma(const ProblemSpec& spec, const Mesh& mesh,
                                           DistanceMode mode, int trials, Rng& rng) {
    IncrementLemmaReport rep;
    DofMap dofs = dof_map(mesh);
    if (dofs.num_free() == 0) throw InputError("lemma audit needs free dofs");

    const bool linear = spec.kind == ProblemKind::linear_diffusion;
    DiscreteFunction star;
    double q = 0.0;
    LinearSystem sys;
    Preconditioner precond = identity_preconditioner();
    std::optional<ZarantonelloSolver> fixpoint;
    if (linear) {
        sys = assemble_linear(mesh, spec);
        star = solve_linear_direct(mesh, spec);
        auto [lmin, lmax] = preconditioned_extremes(sys.matrix, precond, rng);
        q = std::sqrt(std::max(0.0, 1.0 - lmin / lmax));
    } else {
        star = solve_nonlinear_picard(mesh, spec, 1e-13);
        fixpoint.emplace(mesh, spec);
        double qn =
            std::sqrt(1.0 - (spec.alpha / spec.lipschitz) * (spec.alpha / spec.lipschitz));
        q = mode == DistanceMode::norm ? qn
                                       : std::sqrt(spec.lipschitz / spec.alpha) * qn;
    }
    rep.q_used = q;
    if (!(q < 1.0)) throw NumericalError("contraction factor not below one");

    auto phi = [&](const DiscreteFunction& v) {
        if (!linear) return fixpoint->step(v);
        PcgState st = pcg_init(sys.matrix, precond, sys.rhs, free_values(mesh, dofs, v));
        if (!st.converged_exactly) pcg_step(sys.matrix, precond, st);
        return from_free_values(mesh, dofs, st.x);
    };

    rep.worst_slack = std::numeric_limits<double>::infinity();
    for (int t = 0; t < trials; ++t) {
        DiscreteFunction v =
            shifted(star, 1.0, random_function(mesh, dofs, rng, random_scale(rng, -2, 1)));
        DiscreteFunction pv = phi(v);
        double d_sv = solver_distance(mesh, spec, star, v, mode);
        double d_sp = solver_distance(mesh, spec, star, pv, mode);
        double d_vp = solver_distance(mesh, spec, v, pv, mode);
        double scale = std::max(1.0, d_sv);
        double s1 = (q * d_sv - d_sp) / scale;
        double s2 = ((1.0 + q) * d_sv - d_vp) / scale;
        double s3 = (d_vp / (1.0 - q) - d_sv) / scale;
        rep.worst_slack = std::min({rep.worst_slack, s1, s2, s3});
        ++rep.trials;
    }
    rep.pass = rep.worst_slack >= -1e-10;
    return rep;
}

PcgReport check_pcg_optimality(const std::string& geometry, int num_levels,
                               double spread_bound, Rng& rng) {
    PcgReport rep;
    rep.spread_bound = spread_bound;
    const ProblemSpec spec = ProblemSpec::linear_poisson();
    Mesh mesh = make_initial_mesh(geometry);
    MultilevelPreconditioner precond(mesh, spec);

    // The optimality claim concerns the asymptotic regime; levels with a
    // handful of dofs have cond near 1 and would only dilute the spread.
    const int min_dofs = 64;
    int level = 0;
    while (static_cast<int>(rep.levels.size()) < num_levels && level < 60) {
        DofMap dofs = dof_map(mesh);
        DiscreteFunction u = zero_function(mesh);
        if (dofs.num_free() > 0) {
            LinearSystem sys = assemble_linear(mesh, spec);
            SparseFactorization exact(sys.matrix);
            std::vector<double> xstar = exact.solve(sys.rhs);
            u = from_free_values(mesh, dofs, xstar);

            if (dofs.num_free() >= min_dofs) {
                Preconditioner P = precond.as_preconditioner();
                auto [lmin, lmax] = preconditioned_extremes(sys.matrix, P, rng);
                PcgLevelStats st;
                st.level = level;
                st.dofs = dofs.num_free();
                st.cond = lmax / lmin;
                st.q_bound = std::sqrt(std::max(0.0, 1.0 - lmin / lmax));

                auto m_norm = [&](const std::vector<double>& e) {
                    return std::sqrt(std::max(0.0, vdot(e, sys.matrix.multiply(e))));
                };
                for (int trial = 0; trial < 2; ++trial) {
                    std::vector<double> x0(dofs.num_free());
                    for (double& v : x0) v = rng.next_symmetric();
                    PcgState state = pcg_init(sys.matrix, P, sys.rhs, x0);
                    std::vector<double> err(x0.size());
                    for (size_t i = 0; i < err.size(); ++i) err[i] = x0[i] - xstar[i];
                    double prev = m_norm(err);
                    const double floor = 1e-11 * std::max(prev, m_norm(xstar));
                    for (int it = 0; it < 80 && prev > floor && !state.converged_exactly; ++it) {
                        pcg_step(sys.matrix, P, state);
                        for (size_t i = 0; i < err.size(); ++i) err[i] = state.x[i] - xstar[i];
                        double cur = m_norm(err);
                        if (cur > floor)
                            st.max_step_ratio = std::max(st.max_step_ratio, cur / prev);
                        prev = cur;
                    }
                }
                st.contraction_ok = st.max_step_ratio <= st.q_bound + 1e-8;
                rep.levels.push_back(st);
            }
        }

        IndicatorField eta = indicators(mesh, spec, u);
        if (eta.total() == 0.0 && dofs.num_free() > 0) break;
        std::vector<int> marked = doerfler_mark(eta.eta_sq, 0.5);
        auto [fine, rel] = refine_nvb(mesh, marked);
        precond.push_level(mesh, fine, rel);
        mesh = std::move(fine);
        ++level;
    }

    double cmin = std::numeric_limits<double>::infinity(), cmax = 0.0;
    bool all_contract = true;
    for (const PcgLevelStats& st : rep.levels) {
        cmin = std::min(cmin, st.cond);
        cmax = std::max(cmax, st.cond);
        all_contract = all_contract && st.contraction_ok;
    }
    rep.cond_spread = rep.levels.empty() ? 0.0 : cmax / cmin;
    rep.pass = static_cast<int>(rep.levels.size()) == num_levels && all_contract &&
               rep.cond_spread <= spread_bound;
    return rep;
}

GateauxReport check_gateaux_consistency(const ProblemSpec& spec, const Mesh& mesh, int trials,
                                        Rng& rng) {
    GateauxReport rep;
    DofMap dofs = dof_map(mesh);
    if (dofs.num_free() == 0) throw InputError("derivative audit needs free dofs");
    const double h = 1e-5;
    for (int t = 0; t < trials; ++t) {
        // Normalize both directions in the energy norm so the central-difference
        // truncation term stays at the h^2 scale; raw nodal vectors carry 1/h
        // gradients that would swamp it.
        DiscreteFunction v = random_function(mesh, dofs, rng, 1.0);
        DiscreteFunction w = random_function(mesh, dofs, rng, 1.0);
        double nv = energy_norm(mesh, spec, v);
        double nw = energy_norm(mesh, spec, w);
        if (!(nv > 0.0) || !(nw > 0.0)) continue;
        const double scale = random_scale(rng, -1, 1);
        for (double& c : v.values) c *= scale / nv;
        for (double& c : w.values) c /= nw;
        std::vector<double> residual = apply_nonlinear(mesh, spec, v);
        double exact = vdot(residual, free_values(mesh, dofs, w));
        double fd = (energy(mesh, spec, shifted(v, h, w)) -
                     energy(mesh, spec, shifted(v, -h, w))) /
                    (2.0 * h);
        // Error relative to the bilinear-form scale |||v||| * |||w|||, floored so a
        // chance near-orthogonal pair cannot zero the denominator.
        double rel = std::abs(fd - exact) /
                     std::max(std::abs(exact), 1e-3 * std::max(1.0, scale));
        rep.max_rel_err = std::max(rep.max_rel_err, rel);
        ++rep.trials;
    }
    rep.pass = rep.trials > 0 && rep.max_rel_err <= 1e-6;
    return rep;
}

// ---- marking ---------------------------------------------------------------

namespace {

// Smallest cardinality reaching the bulk threshold, by explicit enumeration.
// Sums run over values sorted descending, matching the marking routine.
int exhaustive_min_cardinality(const std::vector<double>& eta_sq, double theta) {
    const int n = static_cast<int>(eta_sq.size());
    std::vector<double> sorted = eta_sq;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double total = 0.0;
    for (double v : sorted) total += v;
    if (total == 0.0) return 0;
    const double threshold = theta * theta * total;
    for (int card = 1; card <= n; ++card) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            if (__builtin_popcount(mask) != card) continue;
            double sum = 0.0;
            for (int i = 0; i < n; ++i)
                if (mask & (1u << i)) sum += sorted[i];
            if (sum >= threshold) return card;
        }
    }
    return n;
}

// The marked sum in the same descending summation order as the marking
// routine, for a bitwise-faithful threshold audit.
double marked_sum_desc(const std::vector<double>& eta_sq, const std::vector<int>& marked) {
    std::vector<int> order = marked;
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (eta_sq[a] != eta_sq[b]) return eta_sq[a] > eta_sq[b];
        return a < b;
    });
    double sum = 0.0;
    for (int id : order) sum += eta_sq[id];
    return sum;
}

double total_desc(const std::vector<double>& eta_sq) {
    std::vector<double> sorted = eta_sq;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double total = 0.0;
    for (double v : sorted) total += v;
    return total;
}

}  // namespace

MarkingReport check_marking_minimality(int trials, int max_n, Rng& rng) {
    MarkingReport rep;
    rep.trials = trials;
    for (int t = 0; t < trials; ++t) {
        int n = 2 + rng.next_index(std::max(1, max_n - 1));
        std::vector<double> eta_sq(n);
        for (double& v : eta_sq) v = rng.next_double();
        if (rng.next_index(10) == 0) eta_sq[rng.next_index(n)] = 0.0;
        if (n >= 2 && rng.next_index(5) == 0)
            eta_sq[rng.next_index(n)] = eta_sq[rng.next_index(n)];
        double theta = 0.05 + 0.95 * rng.next_double();

        std::vector<int> marked = doerfler_mark(eta_sq, theta);
        double total = total_desc(eta_sq);
        if (marked_sum_desc(eta_sq, marked) < theta * theta * total && total > 0.0)
            rep.thresholds_ok = false;
        if (n <= 12) {
            if (exhaustive_min_cardinality(eta_sq, theta) != static_cast<int>(marked.size()))
                rep.minimal_ok = false;
            ++rep.exhaustive_checks;
        }
    }
    rep.pass = rep.thresholds_ok && rep.minimal_ok && rep.exhaustive_checks > 0;
    return rep;
}

// ---- reliability -----------------------------------------------------------

ReliabilityReport check_reliability(const ProblemSpec& spec, const std::string& geometry,
                                    const AdaptiveConfig& config, double bound) {
    ReliabilityReport rep;
    struct Snapshot {
        Mesh mesh;
        DiscreteFunction u;
        double eta;
    };
    std::vector<Snapshot> snaps;
    AdaptiveHooks hooks;
    hooks.on_level = [&](const Mesh& mesh, const DiscreteFunction& u,
                         const IndicatorField& field) {
        snaps.push_back({mesh, u, field.total()});
    };
    run_adaptive(spec, make_initial_mesh(geometry), config, hooks);

    for (const Snapshot& snap : snaps) {
        if (!(snap.eta > 0.0)) continue;
        std::vector<int> all(snap.mesh.num_elements());
        std::iota(all.begin(), all.end(), 0);
        auto [mid, rel1] = refine_nvb(snap.mesh, all);
        std::vector<int> all2(mid.num_elements());
        std::iota(all2.begin(), all2.end(), 0);
        auto [ref, rel2] = refine_nvb(mid, all2);

        DiscreteFunction u_ref = prolongate(rel2, mid, ref,
                                            prolongate(rel1, snap.mesh, mid, snap.u));
        DiscreteFunction star = spec.kind == ProblemKind::linear_diffusion
                                    ? solve_linear_direct(ref, spec)
                                    : solve_nonlinear_picard(ref, spec, 1e-12);
        double err = energy_dist(ref, spec, u_ref, star);
        rep.level_dofs.push_back(dof_map(snap.mesh).num_free());
        rep.ratios.push_back(err / snap.eta);
    }

    for (double r : rep.ratios) rep.max_ratio = std::max(rep.max_ratio, r);
    const int tail = std::min<int>(5, static_cast<int>(rep.ratios.size()));
    if (tail > 0) {
        double mean = 0.0;
        for (int i = 0; i < tail; ++i) mean += rep.ratios[rep.ratios.size() - 1 - i];
        mean /= tail;
        for (int i = 0; i < tail && mean > 0.0; ++i) {
            double r = rep.ratios[rep.ratios.size() - 1 - i];
            rep.tail_spread = std::max(rep.tail_spread, std::abs(r - mean) / mean);
        }
    }
    rep.pass = rep.ratios.size() >= 5 && rep.max_ratio <= bound && rep.tail_spread <= 0.2;
    return rep;
}

// ---- audited runs ----------------------------------------------------------

AuditedRun run_adaptive_audited(const ProblemSpec& spec, const Mesh& initial,
                                const AdaptiveConfig& config) {
    AuditedRun audit;
    AdaptiveHooks hooks;
    hooks.on_mark = [&](const Mesh& mesh, const IndicatorField& field,
                        const std::vector<int>& marked) {
        double total = total_desc(field.eta_sq);
        if (total > 0.0 &&
            marked_sum_desc(field.eta_sq, marked) < config.theta * config.theta * total)
            audit.marking_threshold_ok = false;
        if (mesh.num_elements() <= 12) {
            if (exhaustive_min_cardinality(field.eta_sq, config.theta) !=
                static_cast<int>(marked.size()))
                audit.marking_minimal_ok = false;
            ++audit.minimal_checks;
        }
    };
    hooks.on_refine = [&](const Mesh&, const Mesh& fine, const RefinementRelation& rel,
                          const std::vector<int>& marked) {
        ++audit.refinements;
        if (!refinement_counts_ok(rel)) audit.counts_ok = false;
        audit.marked_total += static_cast<long>(marked.size());
        audit.created_total += fine.num_elements() - static_cast<long>(rel.unchanged.size());
    };
    audit.result = run_adaptive(spec, initial, config, hooks);
    audit.closure_ratio =
        audit.marked_total > 0 ? double(audit.created_total) / double(audit.marked_total) : 0.0;
    return audit;
}

// ---- suite -----------------------------------------------------------------

std::vector<CheckResult> run_axiom_suite(const std::string& geometry,
                                         unsigned long long seed) {
    std::vector<CheckResult> out;
    Rng rng(seed);
    const ProblemSpec lin = ProblemSpec::linear_poisson();
    const ProblemSpec nlin = ProblemSpec::nonlinear_log_diffusion();

    {
        Mesh mesh = make_initial_mesh(geometry);
        bool ok = true;
        std::string last;
        for (int r = 0; r < 40; ++r) {
            RefinementRelation rel;
            mesh = random_refinement(mesh, rng, 0.25, &rel);
            std::string d;
            if (!refinement_counts_ok(rel, &d)) {
                ok = false;
                last = d;
            }
        }
        out.push_back({"refinement child counts", ok,
                       ok ? fmt_detail("40 random refinements, final %d elements",
                                       mesh.num_elements())
                          : last});
    }
    {
        OverlayReport r = check_overlay(geometry, 30, rng);
        out.push_back({"overlay of refinements", r.pass,
                       fmt_detail("trials=%d max_excess=%ld nested=%d idempotent=%d symmetric=%d",
                                  r.trials, r.max_excess, int(r.refines_both), int(r.idempotent),
                                  int(r.symmetric))});
    }
    {
        ClosureReport r = check_closure(geometry, 300, 8.0, rng);
        out.push_back({"closure overhead", r.pass,
                       fmt_detail("created/marked = %ld/%ld = %.3f (bound %.1f)",
                                  r.created_total, r.marked_total, r.ratio, r.bound)});
    }
    for (const auto& [name, spec] :
         {std::pair<const char*, const ProblemSpec*>{"estimator stability (linear)", &lin},
          {"estimator stability (nonlinear)", &nlin}}) {
        StabilityReport r = check_stability_bound(*spec, geometry, 200, 200, rng);
        out.push_back({name, r.pass,
                       fmt_detail("calibrated C = %.4f, fresh max = %.4f (allowed %.4f)",
                                  r.c_stab, r.fresh_max, 1.05 * r.c_stab)});
    }
    for (const auto& [name, spec] :
         {std::pair<const char*, const ProblemSpec*>{"estimator reduction (linear)", &lin},
          {"estimator reduction (nonlinear)", &nlin}}) {
        ReductionReport r = check_reduction_bound(*spec, geometry, 80, rng);
        out.push_back({name, r.pass,
                       fmt_detail("max ratio to the 2^(-1/4) bound = %.12f over %d trials",
                                  r.max_ratio, r.trials)});
    }
    {
        ContractionReport r = check_zarantonello_contraction(nlin, geometry, 100, 2000, rng);
        out.push_back({"fixed-point contraction", r.pass,
                       fmt_detail("norm max %.6f <= %.6f; energy max %.6f <= %.6f (%d trials)",
                                  r.max_ratio, r.q_bound, r.max_energy_ratio, r.energy_bound,
                                  r.trials)});
    }
    {
        PcgReport r = check_pcg_optimality(geometry, 10, 2.0, rng);
        double worst = 0.0;
        std::string conds;
        for (const auto& st : r.levels) {
            worst = std::max(worst, st.max_step_ratio - st.q_bound);
            conds += fmt_detail(" %d:%.2f", st.dofs, st.cond);
        }
        out.push_back({"pcg contraction and level spread", r.pass,
                       fmt_detail("spread=%.3f (bound %.1f), worst ratio excess=%.2e, "
                                  "dofs:cond%s",
                                  r.cond_spread, r.spread_bound, worst, conds.c_str())});
    }
    {
        Mesh mesh = make_initial_mesh(geometry);
        while (dof_map(mesh).num_free() < 300) mesh = random_refinement(mesh, rng, 0.4);
        const struct {
            const char* name;
            const ProblemSpec* spec;
            DistanceMode mode;
        } combos[] = {
            {"stopping inequalities (linear, energy)", &lin, DistanceMode::energy},
            {"stopping inequalities (linear, norm)", &lin, DistanceMode::norm},
            {"stopping inequalities (nonlinear, energy)", &nlin, DistanceMode::energy},
            {"stopping inequalities (nonlinear, norm)", &nlin, DistanceMode::norm},
        };
        for (const auto& c : combos) {
            IncrementLemmaReport r = check_increment_lemma(*c.spec, mesh, c.mode, 50, rng);
            out.push_back({c.name, r.pass,
                           fmt_detail("q=%.6f worst slack=%.3e over %d trials", r.q_used,
                                      r.worst_slack, r.trials)});
        }
    }
    {
        MarkingReport r = check_marking_minimality(300, 12, rng);
        out.push_back({"marking minimality", r.pass,
                       fmt_detail("%d trials, %ld exhaustive checks, thresholds=%d minimal=%d",
                                  r.trials, r.exhaustive_checks, int(r.thresholds_ok),
                                  int(r.minimal_ok))});
    }
    {
        Mesh mesh = make_initial_mesh(geometry);
        while (dof_map(mesh).num_free() < 150) mesh = random_refinement(mesh, rng, 0.4);
        GateauxReport rl = check_gateaux_consistency(lin, mesh, 50, rng);
        GateauxReport rn = check_gateaux_consistency(nlin, mesh, 50, rng);
        out.push_back({"energy derivative consistency", rl.pass && rn.pass,
                       fmt_detail("max relative error: linear %.2e, nonlinear %.2e (tol 1e-6)",
                                  rl.max_rel_err, rn.max_rel_err)});
    }
    return out;
}

}  // namespace afem
