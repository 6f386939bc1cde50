#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "afem/geometry.hpp"

namespace afem {

/// Triangle with vertex ids in counterclockwise order. Local edge k is the
/// edge opposite local vertex k. Construction normalizes every element so
/// that the reference edge (the edge bisected next) is edge 2 = (v[0], v[1]);
/// v[2] is then the newest vertex. `level` counts bisections since the
/// initial mesh.
struct Element {
    std::array<int, 3> v{};
    int level = 0;
};

/// Conforming triangulation. Meshes are immutable once built: refinement and
/// overlay return fresh Mesh objects. `generation_id` is unique per mesh,
/// `hierarchy_id` is shared by all meshes refined from one initial mesh
/// (0 when unknown, e.g. after loading from a file).
struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<Element> elements;
    std::vector<std::array<int, 2>> boundary_edges;  // Dirichlet boundary
    long generation_id = 0;
    long hierarchy_id = 0;

    // Derived connectivity, filled at construction.
    std::vector<std::array<int, 3>> neighbor;  // across edge k, -1 on boundary
    std::vector<char> vertex_on_boundary;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_elements() const { return static_cast<int>(elements.size()); }
    Vec2 point(int element, int k) const { return vertices[elements[element].v[k]]; }

    double area(int element) const;
    double diameter(int element) const;
    /// Smallest interior angle over all elements, in radians.
    double min_angle() const;
};

/// Endpoints of local edge k (the edge opposite vertex k).
inline std::array<int, 2> edge_vertices(const Element& e, int k) {
    return {e.v[(k + 1) % 3], e.v[(k + 2) % 3]};
}

/// Parent/child bookkeeping for one refinement step. Element ids refer to
/// positions in the coarse resp. fine element arrays; ids are never reused
/// across mesh generations.
struct RefinementRelation {
    std::vector<int> parent_of;                  // fine id -> coarse id
    std::vector<std::vector<int>> children_of;   // coarse id -> 1..4 fine ids
    std::vector<std::pair<int, int>> unchanged;  // (coarse id, fine id) copies
    std::vector<std::array<int, 3>> new_vertices;  // (vertex id, edge end a, edge end b)
    int coarse_vertex_count = 0;

    bool is_unchanged_fine(int fine_id) const {
        return children_of[parent_of[fine_id]].size() == 1;
    }
};

/// Build a validated mesh from raw data. `elements_raw` rows are
/// {i, j, k, ref_local_idx}; the triple is rotated so the reference edge
/// becomes edge 2. Throws InputError on inverted elements, non-conforming
/// connectivity, or a boundary list that does not match the mesh boundary.
Mesh make_mesh(std::vector<Vec2> vertices,
               const std::vector<std::array<int, 4>>& elements_raw,
               std::vector<std::array<int, 2>> boundary_edges,
               const std::vector<int>* levels = nullptr);

/// Initial meshes: "unit_square" (2 elements), "l_shape" (6 elements,
/// reentrant corner of angle 3*pi/2 at the origin), "z_shape" (7 elements,
/// reentrant angle 7*pi/4). Reference edges are the longest edges, ties
/// broken toward the lowest vertex index.
Mesh make_initial_mesh(const std::string& geometry);

/// Newest-vertex bisection of the marked elements plus the closure needed to
/// keep the mesh conforming. Every marked element is bisected at least once;
/// every element has at most 4 children (two levels of bisection).
std::pair<Mesh, RefinementRelation> refine_nvb(const Mesh& mesh,
                                               const std::vector<int>& marked);

/// Coarsest common refinement of two meshes from the same hierarchy.
Mesh overlay(const Mesh& a, const Mesh& b, const Mesh& common_ancestor);

/// Plain-text mesh format:
///   afem-mesh v1
///   vertices N      followed by N lines "x y"
///   elements M      followed by M lines "i j k ref_local_idx level"
///   boundary B      followed by B lines "i j"
/// 0-based indices, coordinates written with round-trip precision.
void save_mesh(const Mesh& mesh, std::ostream& out);
void save_mesh(const Mesh& mesh, const std::string& path);
Mesh load_mesh(std::istream& in);
Mesh load_mesh(const std::string& path);

}  // namespace afem
