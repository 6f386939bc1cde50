#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <afem/errors.hpp>
#include <afem/mesh.hpp>
#include <afem/validation.hpp>

#include "support/oracles.hpp"

using namespace afem;

namespace {

const double kPi = 3.14159265358979323846;

std::vector<std::array<int, 3>> element_table(const Mesh& m) {
    std::vector<std::array<int, 3>> out;
    for (const auto& e : m.elements) out.push_back(e.v);
    return out;
}

// Geometry-based element identity, independent of vertex numbering.
std::multiset<std::string> element_shapes(const Mesh& m) {
    std::multiset<std::string> out;
    for (int e = 0; e < m.num_elements(); ++e) {
        std::array<std::pair<double, double>, 3> p;
        for (int k = 0; k < 3; ++k) p[k] = {m.point(e, k).x, m.point(e, k).y};
        std::sort(p.begin(), p.end());
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g;%.17g,%.17g;%.17g,%.17g", p[0].first,
                      p[0].second, p[1].first, p[1].second, p[2].first, p[2].second);
        out.insert(buf);
    }
    return out;
}

void check_neighbor_symmetry(const Mesh& m) {
    for (int e = 0; e < m.num_elements(); ++e) {
        for (int k = 0; k < 3; ++k) {
            int n = m.neighbor[e][k];
            if (n < 0) continue;
            bool found = false;
            for (int j = 0; j < 3; ++j) found = found || m.neighbor[n][j] == e;
            CHECK(found);
        }
    }
}

double total_area(const Mesh& m) {
    double s = 0.0;
    for (int e = 0; e < m.num_elements(); ++e) s += m.area(e);
    return s;
}

}  // namespace

TEST_CASE("initial meshes match their frozen tables") {
    Mesh sq = make_initial_mesh("unit_square");
    CHECK(sq.num_vertices() == 4);
    CHECK(element_table(sq) ==
          std::vector<std::array<int, 3>>{{2, 0, 1}, {0, 2, 3}});
    CHECK(sq.boundary_edges.size() == 4);
    CHECK(total_area(sq) == doctest::Approx(1.0).epsilon(1e-14));

    Mesh l = make_initial_mesh("l_shape");
    CHECK(l.num_vertices() == 8);
    CHECK(element_table(l) == std::vector<std::array<int, 3>>{{2, 0, 1},
                                                              {0, 2, 7},
                                                              {2, 6, 7},
                                                              {6, 2, 5},
                                                              {4, 2, 3},
                                                              {2, 4, 5}});
    CHECK(l.boundary_edges.size() == 8);
    CHECK(total_area(l) == doctest::Approx(3.0).epsilon(1e-14));
    // Reentrant corner at the origin.
    CHECK(l.vertices[2].x == 0.0);
    CHECK(l.vertices[2].y == 0.0);
    CHECK(l.vertex_on_boundary[2] == 1);

    Mesh z = make_initial_mesh("z_shape");
    CHECK(z.num_vertices() == 9);
    CHECK(element_table(z) == std::vector<std::array<int, 3>>{{0, 1, 2},
                                                              {3, 0, 2},
                                                              {0, 3, 4},
                                                              {5, 0, 4},
                                                              {0, 5, 6},
                                                              {7, 0, 6},
                                                              {0, 7, 8}});
    CHECK(z.boundary_edges.size() == 9);
    CHECK(total_area(z) == doctest::Approx(3.5).epsilon(1e-14));
    CHECK(z.vertices[0].x == 0.0);
    CHECK(z.vertices[0].y == 0.0);

    for (const Mesh* m : {&sq, &l, &z}) {
        CHECK(m->min_angle() == doctest::Approx(kPi / 4).epsilon(1e-13));
        for (const auto& e : m->elements) CHECK(e.level == 0);
        // The reference edge (local edge 2) is a longest edge of its element.
        for (int i = 0; i < m->num_elements(); ++i) {
            auto [a, b] = edge_vertices(m->elements[i], 2);
            double ref_len = norm(m->vertices[a] - m->vertices[b]);
            CHECK(ref_len == doctest::Approx(m->diameter(i)).epsilon(1e-13));
        }
        check_neighbor_symmetry(*m);
    }

    CHECK_THROWS_AS(make_initial_mesh("pentagon"), InputError);
}

TEST_CASE("make_mesh rejects malformed input") {
    std::vector<Vec2> vs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    std::vector<std::array<int, 2>> bnd = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};

    // Clockwise (inverted) element.
    CHECK_THROWS_AS(make_mesh(vs, {{0, 2, 1, 0}, {0, 2, 3, 2}}, bnd), InputError);
    // Vertex id out of range.
    CHECK_THROWS_AS(make_mesh(vs, {{0, 1, 7, 1}, {0, 2, 3, 2}}, bnd), InputError);
    // Reference edge index out of range.
    CHECK_THROWS_AS(make_mesh(vs, {{0, 1, 2, 3}, {0, 2, 3, 2}}, bnd), InputError);
    // Boundary list missing an exterior edge.
    CHECK_THROWS_AS(
        make_mesh(vs, {{0, 1, 2, 1}, {0, 2, 3, 2}}, {{0, 1}, {1, 2}, {2, 3}}),
        InputError);
    // Boundary list naming an interior edge.
    std::vector<std::array<int, 2>> bad = bnd;
    bad.push_back({0, 2});
    CHECK_THROWS_AS(make_mesh(vs, {{0, 1, 2, 1}, {0, 2, 3, 2}}, bad), InputError);
}

TEST_CASE("bisecting the unit square produces the hand-derived mesh") {
    Mesh sq = make_initial_mesh("unit_square");

    auto [fine, rel] = refine_nvb(sq, {0, 1});
    CHECK(fine.num_vertices() == 5);
    CHECK(fine.vertices[4].x == 0.5);
    CHECK(fine.vertices[4].y == 0.5);
    CHECK(element_table(fine) == std::vector<std::array<int, 3>>{{1, 2, 4},
                                                                 {0, 1, 4},
                                                                 {3, 0, 4},
                                                                 {2, 3, 4}});
    for (const auto& e : fine.elements) CHECK(e.level == 1);
    CHECK(rel.parent_of == std::vector<int>{0, 0, 1, 1});
    CHECK(rel.children_of ==
          std::vector<std::vector<int>>{{0, 1}, {2, 3}});
    CHECK(rel.unchanged.empty());
    CHECK(rel.coarse_vertex_count == 4);
    REQUIRE(rel.new_vertices.size() == 1);
    CHECK(rel.new_vertices[0] == std::array<int, 3>{4, 2, 0});
    CHECK(fine.boundary_edges == sq.boundary_edges);
    CHECK(fine.hierarchy_id == sq.hierarchy_id);
    CHECK(fine.generation_id != sq.generation_id);
    for (int e = 0; e < 4; ++e) CHECK_FALSE(rel.is_unchanged_fine(e));
    check_neighbor_symmetry(fine);

    // Marking only one element forces the diagonal neighbor through closure:
    // the result is the same mesh.
    auto [fine1, rel1] = refine_nvb(sq, {0});
    CHECK(element_table(fine1) == element_table(fine));
    CHECK(rel1.children_of == rel.children_of);

    CHECK_THROWS_AS(refine_nvb(sq, {2}), InputError);
    CHECK_THROWS_AS(refine_nvb(sq, {-1}), InputError);
}

TEST_CASE("closure propagates across shared reference edges") {
    Mesh l = make_initial_mesh("l_shape");
    // Element 3 shares its reference edge (the diagonal 2-6) with element 2,
    // so marking {3} must split both; everything else is copied.
    auto [fine, rel] = refine_nvb(l, {3});
    CHECK(fine.num_elements() == 8);
    std::vector<std::size_t> sizes;
    for (const auto& c : rel.children_of) sizes.push_back(c.size());
    CHECK(sizes == std::vector<std::size_t>{1, 1, 2, 2, 1, 1});
    CHECK(rel.unchanged.size() == 4);
    for (auto [coarse, fine_id] : rel.unchanged) {
        CHECK(fine.elements[fine_id].v == l.elements[coarse].v);
        CHECK(fine.elements[fine_id].level == l.elements[coarse].level);
        CHECK(rel.is_unchanged_fine(fine_id));
    }
    CHECK(total_area(fine) == doctest::Approx(3.0).epsilon(1e-14));
    check_neighbor_symmetry(fine);
}

TEST_CASE("random refinements keep the child-count inequality") {
    Rng rng(2024);
    bool saw_multi = false;
    for (const char* geo : {"unit_square", "l_shape", "z_shape"}) {
        Mesh mesh = make_initial_mesh(geo);
        for (int round = 0; round < 12; ++round) {
            RefinementRelation rel;
            mesh = random_refinement(mesh, rng, 0.3, &rel);
            std::string why;
            CHECK_MESSAGE(refinement_counts_ok(rel, &why), why);
            for (const auto& c : rel.children_of) {
                CHECK(c.size() >= 1);
                CHECK(c.size() <= 4);
                if (c.size() >= 2) saw_multi = true;
            }
            check_neighbor_symmetry(mesh);
        }
    }
    CHECK(saw_multi);
}

TEST_CASE("uniform refinement: doubling, levels, and angle saturation") {
    for (const char* geo : {"unit_square", "l_shape", "z_shape"}) {
        CAPTURE(geo);
        Mesh mesh = make_initial_mesh(geo);
        int count = mesh.num_elements();
        for (int round = 0; round < 10; ++round) {
            std::vector<int> all(mesh.num_elements());
            for (int i = 0; i < mesh.num_elements(); ++i) all[i] = i;
            auto [fine, rel] = refine_nvb(mesh, all);
            // These structured meshes pair up reference edges, so a full
            // marking bisects every element exactly once.
            CHECK(fine.num_elements() == 2 * count);
            for (int e = 0; e < fine.num_elements(); ++e)
                CHECK(fine.elements[e].level ==
                      mesh.elements[rel.parent_of[e]].level + 1);
            mesh = std::move(fine);
            count = mesh.num_elements();
            CHECK(mesh.min_angle() == doctest::Approx(kPi / 4).epsilon(1e-12));
        }
    }
}

TEST_CASE("overlay merges two refinements of a common ancestor") {
    Mesh l = make_initial_mesh("l_shape");
    Mesh a = refine_nvb(l, {0}).first;   // splits elements 0 and 1
    Mesh b = refine_nvb(l, {4}).first;   // splits elements 4 and 5

    Mesh o = overlay(a, b, l);
    CHECK(o.num_elements() == a.num_elements() + b.num_elements() - l.num_elements());
    CHECK(element_shapes(o) == element_shapes(refine_nvb(l, {0, 4}).first));
    CHECK(total_area(o) == doctest::Approx(3.0).epsilon(1e-14));

    Mesh oa = overlay(a, a, l);
    CHECK(element_shapes(oa) == element_shapes(a));

    Rng rng(7);
    OverlayReport rep = check_overlay("l_shape", 10, rng);
    CHECK(rep.pass);
    CHECK(rep.max_excess <= 0);
}

TEST_CASE("mesh file format round-trips and validates") {
    Mesh sq = make_initial_mesh("unit_square");
    std::ostringstream out;
    save_mesh(sq, out);
    CHECK(out.str() ==
          "afem-mesh v1\n"
          "vertices 4\n"
          "0 0\n"
          "1 0\n"
          "1 1\n"
          "0 1\n"
          "elements 2\n"
          "2 0 1 2 0\n"
          "0 2 3 2 0\n"
          "boundary 4\n"
          "0 1\n"
          "1 2\n"
          "2 3\n"
          "3 0\n");

    // Round trip through a refined, irregular mesh: exact equality of all
    // stored fields and byte-identical re-serialization.
    Rng rng(11);
    Mesh m = make_initial_mesh("z_shape");
    for (int i = 0; i < 4; ++i) m = random_refinement(m, rng, 0.4);
    std::ostringstream s1;
    save_mesh(m, s1);
    std::istringstream in(s1.str());
    Mesh back = load_mesh(in);
    CHECK(back.num_vertices() == m.num_vertices());
    CHECK(element_table(back) == element_table(m));
    for (int v = 0; v < m.num_vertices(); ++v) {
        CHECK(back.vertices[v].x == m.vertices[v].x);
        CHECK(back.vertices[v].y == m.vertices[v].y);
    }
    for (int e = 0; e < m.num_elements(); ++e)
        CHECK(back.elements[e].level == m.elements[e].level);
    CHECK(back.boundary_edges == m.boundary_edges);
    CHECK(back.hierarchy_id == 0);
    std::ostringstream s2;
    save_mesh(back, s2);
    CHECK(s1.str() == s2.str());

    auto load_str = [](const std::string& text) {
        std::istringstream ss(text);
        return load_mesh(ss);
    };
    CHECK_THROWS_AS(load_str("afem-mesh v2\nvertices 0\nelements 0\nboundary 0\n"),
                    InputError);
    CHECK_THROWS_AS(load_str("afem-mesh v1\nvertices 1\n0 0\n"), InputError);
    CHECK_THROWS_AS(load_str("afem-mesh v1\n"
                             "vertices 3\n0 0\n1 0\n0 1\n"
                             "elements 1\n0 1 9 2 0\n"
                             "boundary 3\n0 1\n1 2\n2 0\n"),
                    InputError);
}
