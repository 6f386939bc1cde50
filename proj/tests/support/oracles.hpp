#pragma once

// Independent reference computations and small fixtures shared by the test
// files. Everything here deliberately avoids the library's own solver paths:
// the Newton oracle builds its Jacobian by finite differences and solves with
// dense LU, so agreement with the library is meaningful evidence.

#include <Eigen/Dense>

#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <afem/fem.hpp>
#include <afem/mesh.hpp>
#include <afem/validation.hpp>

namespace oracles {

/// Random nodal values on the free vertices, zero on the boundary.
inline afem::DiscreteFunction random_function(const afem::Mesh& mesh, const afem::DofMap& dofs,
                                              afem::Rng& rng, double scale) {
    std::vector<double> free(dofs.num_free());
    for (double& v : free) v = scale * rng.next_symmetric();
    return afem::from_free_values(mesh, dofs, free);
}

/// Unit square split into four triangles around the center vertex; the only
/// free vertex is the center, which makes hand computation of the assembled
/// system trivial.
inline afem::Mesh crisscross_square() {
    std::vector<afem::Vec2> vs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}};
    std::vector<std::array<int, 4>> raw = {
        {0, 1, 4, 2}, {1, 2, 4, 2}, {2, 3, 4, 2}, {3, 0, 4, 2}};
    std::vector<std::array<int, 2>> bnd = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    return afem::make_mesh(std::move(vs), raw, std::move(bnd));
}

/// Newton iteration with a finite-difference Jacobian and dense LU. Converges
/// to the residual equation apply_nonlinear(u) = 0 independent of the
/// library's Picard/Zarantonello machinery.
inline afem::DiscreteFunction newton_reference_solution(const afem::Mesh& mesh,
                                                        const afem::ProblemSpec& spec,
                                                        double tol) {
    afem::DofMap dofs = afem::dof_map(mesh);
    const int n = dofs.num_free();
    if (n == 0) return afem::zero_function(mesh);

    std::vector<double> x(n, 0.0);
    auto residual = [&](const std::vector<double>& free) {
        afem::DiscreteFunction v = afem::from_free_values(mesh, dofs, free);
        return afem::apply_nonlinear(mesh, spec, v);
    };

    for (int it = 0; it < 60; ++it) {
        std::vector<double> r = residual(x);
        double rmax = 0.0;
        for (double v : r) rmax = std::max(rmax, std::abs(v));
        if (rmax <= tol) break;

        Eigen::MatrixXd jac(n, n);
        Eigen::VectorXd rhs(n);
        for (int i = 0; i < n; ++i) rhs(i) = -r[i];
        for (int j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            std::vector<double> xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            std::vector<double> rp = residual(xp), rm = residual(xm);
            for (int i = 0; i < n; ++i) jac(i, j) = (rp[i] - rm[i]) / (2.0 * h);
        }
        Eigen::VectorXd delta = jac.fullPivLu().solve(rhs);
        for (int j = 0; j < n; ++j) x[j] += delta(j);
    }
    return afem::from_free_values(mesh, dofs, x);
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline Csv parse_csv(const std::string& path) {
    std::istringstream in(read_file(path));
    Csv out;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                cells.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        cells.push_back(cur);
        return cells;
    };
    if (std::getline(in, line)) out.header = split(line);
    while (std::getline(in, line))
        if (!line.empty()) out.rows.push_back(split(line));
    return out;
}

}  // namespace oracles
