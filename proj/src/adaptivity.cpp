#include "afem/adaptivity.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>

#include "afem/errors.hpp"

namespace afem {

std::vector<int> doerfler_mark(const std::vector<double>& eta_sq, double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("marking parameter must be in (0, 1]");
    const int n = static_cast<int>(eta_sq.size());
    for (double v : eta_sq)
        if (!(v >= 0.0)) throw InputError("indicators must be non-negative");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (eta_sq[a] != eta_sq[b]) return eta_sq[a] > eta_sq[b];
        return a < b;
    });
    // Total in the same summation order as the prefix below, so theta = 1
    // stops exactly after the last positive indicator.
    double total = 0.0;
    for (int id : order) total += eta_sq[id];
    double threshold = theta * theta * total;
    if (total == 0.0) return {};

    std::vector<int> marked;
    double prefix = 0.0;
    for (int m = 0; m < n && prefix < threshold; ++m) {
        prefix += eta_sq[order[m]];
        marked.push_back(order[m]);
    }
    std::sort(marked.begin(), marked.end());
    return marked;
}

AdaptiveResult run_adaptive(const ProblemSpec& spec, const Mesh& initial,
                            const AdaptiveConfig& config, const AdaptiveHooks& hooks) {
    if (!(config.theta > 0.0 && config.theta <= 1.0))
        throw InputError("adaptive theta must be in (0, 1]");
    if (!(config.lambda_ctr > 0.0)) throw InputError("lambda_ctr must be positive");
    if (config.max_dofs < 1 || config.max_total_steps < 1)
        throw InputError("budgets must be positive");

    const bool linear = spec.kind == ProblemKind::linear_diffusion;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed_ms = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    };

    AdaptiveResult out;
    Mesh mesh = initial;
    DiscreteFunction u = zero_function(mesh);
    std::optional<MultilevelPreconditioner> precond;
    if (linear) precond.emplace(mesh, spec);

    long cum_elements = 0;
    int ell = 0;
    auto push_row = [&](int k, double eta, double dl, long dofs) {
        cum_elements += mesh.num_elements();
        out.record.rows.push_back(LoopRow{ell, k, static_cast<long>(out.record.rows.size()),
                                          mesh.num_elements(), dofs, eta, dl, cum_elements,
                                          elapsed_ms()});
    };

    {
        DofMap dofs = dof_map(mesh);
        IndicatorField eta0 = indicators(mesh, spec, u);
        push_row(0, eta0.total(), 0.0, dofs.num_free());
    }

    while (true) {
        DofMap dofs = dof_map(mesh);
        LinearSystem sys;
        std::optional<PcgState> pcg;
        std::optional<ZarantonelloSolver> fixpoint;
        if (linear) {
            sys = assemble_linear(mesh, spec);
            pcg.emplace(pcg_init(sys.matrix, precond->as_preconditioner(), sys.rhs,
                                 free_values(mesh, dofs, u)));
        } else {
            fixpoint.emplace(mesh, spec);
        }

        int k = 0;
        IndicatorField eta_field;
        double eta_value = 0.0;
        while (true) {
            ++k;
            DiscreteFunction prev = u;
            if (linear) {
                pcg_step(sys.matrix, precond->as_preconditioner(), *pcg);
                u = from_free_values(mesh, dofs, pcg->x);
            } else {
                u = fixpoint->step(prev);
            }
            double dl = solver_distance(mesh, spec, u, prev, config.mode);
            eta_field = indicators(mesh, spec, u);
            eta_value = eta_field.total();
            push_row(k, eta_value, dl, dofs.num_free());

            if (dl <= config.lambda_ctr * eta_value) break;
            if (static_cast<long>(out.record.rows.size()) - 1 >= config.max_total_steps) {
                out.record.steps_per_level.push_back(k);
                out.status = RunStatus::step_budget_reached;
                out.mesh = std::move(mesh);
                out.solution = std::move(u);
                return out;
            }
            if (k >= config.max_steps_per_level) {
                out.record.steps_per_level.push_back(k);
                out.status = RunStatus::solver_stalled;
                out.mesh = std::move(mesh);
                out.solution = std::move(u);
                return out;
            }
        }
        out.record.steps_per_level.push_back(k);
        if (hooks.on_level) hooks.on_level(mesh, u, eta_field);

        if (eta_value == 0.0) {
            out.status = RunStatus::exact_solution;
            break;
        }
        if (dofs.num_free() >= config.max_dofs) {
            out.status = RunStatus::dof_budget_reached;
            break;
        }
        if (static_cast<long>(out.record.rows.size()) - 1 >= config.max_total_steps) {
            out.status = RunStatus::step_budget_reached;
            break;
        }

        std::vector<int> marked = doerfler_mark(eta_field.eta_sq, config.theta);
        if (hooks.on_mark) hooks.on_mark(mesh, eta_field, marked);
        auto [fine, relation] = refine_nvb(mesh, marked);
        if (hooks.on_refine) hooks.on_refine(mesh, fine, relation, marked);
        if (precond) precond->push_level(mesh, fine, relation);
        u = prolongate(relation, mesh, fine, u);
        mesh = std::move(fine);
        ++ell;
    }

    out.mesh = std::move(mesh);
    out.solution = std::move(u);
    return out;
}

namespace {

void append_double(std::string& buf, double x) {
    char num[32];
    auto res = std::to_chars(num, num + sizeof(num), x);
    buf.append(num, res.ptr);
}

/// Indices of the rows holding the last solver step of each level.
std::vector<std::size_t> level_last_rows(const LoopRecord& record) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < record.rows.size(); ++i) {
        if (i + 1 == record.rows.size() || record.rows[i + 1].ell != record.rows[i].ell)
            idx.push_back(i);
    }
    return idx;
}

}  // namespace

void write_record_csv(const LoopRecord& record, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot open for writing: " + path);
    std::string buf =
        "ell,k,total_step,num_elements,num_free_dofs,eta,dl_increment,cum_elements,"
        "wall_time_ms\n";
    for (const auto& r : record.rows) {
        buf += std::to_string(r.ell) + ',' + std::to_string(r.k) + ',' +
               std::to_string(r.total_step) + ',' + std::to_string(r.num_elements) + ',' +
               std::to_string(r.num_free_dofs) + ',';
        append_double(buf, r.eta);
        buf += ',';
        append_double(buf, r.dl_increment);
        buf += ',' + std::to_string(r.cum_elements) + ',';
        append_double(buf, r.wall_time_ms);
        buf += '\n';
    }
    f << buf;
    if (!f.good()) throw InputError("write failed: " + path);
}

std::vector<std::pair<double, double>> level_history(const LoopRecord& record, RateAxis axis) {
    std::vector<std::pair<double, double>> out;
    for (std::size_t i : level_last_rows(record)) {
        const LoopRow& r = record.rows[i];
        double x = axis == RateAxis::dofs ? static_cast<double>(r.num_free_dofs)
                                          : static_cast<double>(r.cum_elements);
        out.emplace_back(x, r.eta);
    }
    return out;
}

double estimate_rate(const LoopRecord& record, RateAxis axis, double tail_fraction) {
    if (!(tail_fraction > 0.0 && tail_fraction <= 1.0))
        throw InputError("tail fraction must be in (0, 1]");
    auto history = level_history(record, axis);
    std::vector<std::pair<double, double>> pts;
    for (auto [x, y] : history)
        if (x > 0.0 && y > 0.0) pts.emplace_back(std::log(x), std::log(y));
    if (pts.size() < 4) throw InputError("rate estimation needs at least 4 levels");

    std::size_t m = static_cast<std::size_t>(std::ceil(tail_fraction * pts.size()));
    m = std::max<std::size_t>(m, 2);
    std::size_t begin = pts.size() - m;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = begin; i < pts.size(); ++i) {
        sx += pts[i].first;
        sy += pts[i].second;
        sxx += pts[i].first * pts[i].first;
        sxy += pts[i].first * pts[i].second;
    }
    double n = static_cast<double>(m);
    double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw NumericalError("degenerate abscissae in rate fit");
    return (n * sxy - sx * sy) / denom;
}

std::pair<double, double> check_full_linear_convergence(const LoopRecord& record) {
    std::vector<double> a;  // log of the quasi-error proxy
    for (const auto& r : record.rows) {
        double proxy = r.eta + r.dl_increment;
        if (proxy > 0.0) a.push_back(std::log(proxy));
    }
    if (a.size() < 2) throw InputError("convergence fit needs at least 2 positive steps");

    const double n = static_cast<double>(a.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sx += i;
        sy += a[i];
        sxx += static_cast<double>(i) * i;
        sxy += i * a[i];
    }
    double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    double q = std::exp(slope);

    double worst = 0.0;  // log C
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            double violation = a[j] - a[i] - slope * static_cast<double>(j - i);
            worst = std::max(worst, violation);
        }
    return {std::exp(worst), q};
}

}  // namespace afem
