#include "afem/mesh.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "afem/errors.hpp"

namespace afem {

namespace {

std::atomic<long> g_generation_counter{0};
std::atomic<long> g_hierarchy_counter{0};

long next_generation_id() { return ++g_generation_counter; }
long next_hierarchy_id() { return ++g_hierarchy_counter; }

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

double signed_area2(Vec2 p0, Vec2 p1, Vec2 p2) { return cross(p1 - p0, p2 - p0); }

/// Validate and fill derived connectivity. Detects inverted elements,
/// non-manifold edges, hanging nodes (via the boundary match) and boundary
/// lists that disagree with single-sided edges.
void finalize(Mesh& m) {
    const int nv = m.num_vertices();
    for (const auto& e : m.elements) {
        for (int vid : e.v)
            if (vid < 0 || vid >= nv) throw InputError("element vertex id out of range");
        if (signed_area2(m.vertices[e.v[0]], m.vertices[e.v[1]], m.vertices[e.v[2]]) <= 0.0)
            throw InputError("element is degenerate or not counterclockwise");
    }

    m.neighbor.assign(m.elements.size(), {-1, -1, -1});
    std::unordered_map<std::uint64_t, std::pair<int, int>> first_side;
    first_side.reserve(3 * m.elements.size());
    for (int e = 0; e < m.num_elements(); ++e) {
        for (int k = 0; k < 3; ++k) {
            auto [a, b] = edge_vertices(m.elements[e], k);
            auto key = edge_key(a, b);
            auto it = first_side.find(key);
            if (it == first_side.end()) {
                first_side.emplace(key, std::make_pair(e, k));
            } else if (it->second.first < 0) {
                throw InputError("edge shared by more than two elements");
            } else {
                auto [e2, k2] = it->second;
                m.neighbor[e][k] = e2;
                m.neighbor[e2][k2] = e;
                it->second.first = -1;
            }
        }
    }

    std::unordered_set<std::uint64_t> boundary_set;
    boundary_set.reserve(m.boundary_edges.size());
    for (auto [a, b] : m.boundary_edges) {
        if (a < 0 || a >= nv || b < 0 || b >= nv)
            throw InputError("boundary edge vertex id out of range");
        if (!boundary_set.insert(edge_key(a, b)).second)
            throw InputError("duplicate boundary edge");
    }
    std::size_t single_sided = 0;
    for (const auto& [key, side] : first_side) {
        if (side.first < 0) continue;  // interior
        ++single_sided;
        if (!boundary_set.count(key))
            throw InputError("mesh edge with one element is missing from the boundary list");
    }
    if (single_sided != m.boundary_edges.size())
        throw InputError("boundary list does not match the mesh boundary");

    m.vertex_on_boundary.assign(nv, 0);
    for (auto [a, b] : m.boundary_edges) {
        m.vertex_on_boundary[a] = 1;
        m.vertex_on_boundary[b] = 1;
    }
}

void format_double(std::string& out, double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    out.append(buf, res.ptr);
}

}  // namespace

double Mesh::area(int element) const {
    const auto& e = elements[element];
    return 0.5 * signed_area2(vertices[e.v[0]], vertices[e.v[1]], vertices[e.v[2]]);
}

double Mesh::diameter(int element) const {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        auto [a, b] = edge_vertices(elements[element], k);
        d = std::max(d, norm(vertices[a] - vertices[b]));
    }
    return d;
}

double Mesh::min_angle() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : elements) {
        for (int k = 0; k < 3; ++k) {
            Vec2 p = vertices[e.v[k]];
            Vec2 u = vertices[e.v[(k + 1) % 3]] - p;
            Vec2 w = vertices[e.v[(k + 2) % 3]] - p;
            double ang = std::atan2(std::abs(cross(u, w)), dot(u, w));
            best = std::min(best, ang);
        }
    }
    return best;
}

Mesh make_mesh(std::vector<Vec2> vertices,
               const std::vector<std::array<int, 4>>& elements_raw,
               std::vector<std::array<int, 2>> boundary_edges,
               const std::vector<int>* levels) {
    Mesh m;
    m.vertices = std::move(vertices);
    m.boundary_edges = std::move(boundary_edges);
    m.elements.reserve(elements_raw.size());
    for (std::size_t i = 0; i < elements_raw.size(); ++i) {
        const auto& raw = elements_raw[i];
        int ref = raw[3];
        if (ref < 0 || ref > 2) throw InputError("reference edge index out of range");
        // Rotate so the reference edge (opposite local vertex `ref`) becomes
        // edge 2; rotation preserves orientation.
        int shift = (ref + 1) % 3;
        Element e;
        for (int k = 0; k < 3; ++k) e.v[k] = raw[(shift + k) % 3];
        e.level = levels ? (*levels)[i] : 0;
        m.elements.push_back(e);
    }
    finalize(m);
    m.generation_id = next_generation_id();
    return m;
}

namespace {

/// Longest edge, ties broken by the lowest (then second-lowest) vertex id of
/// the edge. Returns the local index of the opposite vertex.
int choose_reference_edge(const std::vector<Vec2>& vs, std::array<int, 3> tri) {
    int best = -1;
    double best_len = -1.0;
    std::array<int, 2> best_edge{};
    for (int k = 0; k < 3; ++k) {
        int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
        double len = dot(vs[a] - vs[b], vs[a] - vs[b]);
        std::array<int, 2> e{std::min(a, b), std::max(a, b)};
        if (len > best_len || (len == best_len && e < best_edge)) {
            best = k;
            best_len = len;
            best_edge = e;
        }
    }
    return best;
}

}  // namespace

Mesh make_initial_mesh(const std::string& geometry) {
    std::vector<Vec2> vs;
    std::vector<std::array<int, 3>> tris;
    std::vector<std::array<int, 2>> bnd;
    if (geometry == "unit_square") {
        vs = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
        tris = {{0, 1, 2}, {0, 2, 3}};
        bnd = {{0, 1}, {1, 2}, {2, 3}, {3, 0}};
    } else if (geometry == "l_shape") {
        vs = {{-1, -1}, {0, -1}, {0, 0}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}};
        tris = {{0, 1, 2}, {0, 2, 7}, {7, 2, 6}, {2, 5, 6}, {2, 3, 4}, {2, 4, 5}};
        bnd = {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 0}};
    } else if (geometry == "z_shape") {
        vs = {{0, 0}, {-1, -1}, {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}};
        tris = {{0, 1, 2}, {0, 2, 3}, {0, 3, 4}, {0, 4, 5}, {0, 5, 6}, {0, 6, 7}, {0, 7, 8}};
        bnd = {{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {6, 7}, {7, 8}, {8, 0}, {0, 1}};
    } else {
        throw InputError("unknown geometry: " + geometry);
    }
    std::vector<std::array<int, 4>> raw;
    raw.reserve(tris.size());
    for (auto t : tris) raw.push_back({t[0], t[1], t[2], choose_reference_edge(vs, t)});
    Mesh m = make_mesh(std::move(vs), raw, std::move(bnd));
    m.hierarchy_id = next_hierarchy_id();
    return m;
}

std::pair<Mesh, RefinementRelation> refine_nvb(const Mesh& mesh,
                                               const std::vector<int>& marked) {
    for (int id : marked)
        if (id < 0 || id >= mesh.num_elements())
            throw InputError("marked element id out of range");

    // Closure: an element with any marked edge must have its reference edge
    // marked too, recursively through neighbors.
    std::unordered_set<std::uint64_t> marked_edges;
    std::vector<int> work;
    auto ref_key = [&](int e) {
        auto [a, b] = edge_vertices(mesh.elements[e], 2);
        return edge_key(a, b);
    };
    auto mark_ref_edge = [&](int e) {
        if (!marked_edges.insert(ref_key(e)).second) return;
        work.push_back(e);
        int n = mesh.neighbor[e][2];
        if (n >= 0) work.push_back(n);
    };
    for (int id : marked) mark_ref_edge(id);
    while (!work.empty()) {
        int e = work.back();
        work.pop_back();
        if (marked_edges.count(ref_key(e))) continue;
        bool touched = false;
        for (int k = 0; k < 3 && !touched; ++k) {
            auto [a, b] = edge_vertices(mesh.elements[e], k);
            touched = marked_edges.count(edge_key(a, b)) != 0;
        }
        if (touched) mark_ref_edge(e);
    }

    Mesh out;
    out.vertices = mesh.vertices;
    out.hierarchy_id = mesh.hierarchy_id;
    RefinementRelation rel;
    rel.coarse_vertex_count = mesh.num_vertices();
    rel.children_of.resize(mesh.elements.size());

    std::unordered_map<std::uint64_t, int> midpoint_id;
    auto midpoint_of = [&](int a, int b) {
        auto key = edge_key(a, b);
        auto it = midpoint_id.find(key);
        if (it != midpoint_id.end()) return it->second;
        int id = out.num_vertices();
        out.vertices.push_back(midpoint(mesh.vertices[a], mesh.vertices[b]));
        midpoint_id.emplace(key, id);
        rel.new_vertices.push_back({id, a, b});
        return id;
    };
    auto emit = [&](int parent, std::array<int, 3> v, int level) {
        rel.children_of[parent].push_back(static_cast<int>(out.elements.size()));
        rel.parent_of.push_back(parent);
        out.elements.push_back(Element{v, level});
    };

    for (int e = 0; e < mesh.num_elements(); ++e) {
        const Element& el = mesh.elements[e];
        auto edge_marked = [&](int k) {
            auto [a, b] = edge_vertices(el, k);
            return marked_edges.count(edge_key(a, b)) != 0;
        };
        if (!edge_marked(2)) {
            emit(e, el.v, el.level);
            rel.unchanged.emplace_back(e, rel.children_of[e][0]);
            continue;
        }
        const int x = el.v[0], y = el.v[1], z = el.v[2];
        const int mxy = midpoint_of(x, y);
        if (edge_marked(1)) {  // edge (z, x) also bisected
            int mzx = midpoint_of(z, x);
            emit(e, {mxy, z, mzx}, el.level + 2);
            emit(e, {x, mxy, mzx}, el.level + 2);
        } else {
            emit(e, {z, x, mxy}, el.level + 1);
        }
        if (edge_marked(0)) {  // edge (y, z) also bisected
            int myz = midpoint_of(y, z);
            emit(e, {mxy, y, myz}, el.level + 2);
            emit(e, {z, mxy, myz}, el.level + 2);
        } else {
            emit(e, {y, z, mxy}, el.level + 1);
        }
    }

    out.boundary_edges.reserve(mesh.boundary_edges.size());
    for (auto [a, b] : mesh.boundary_edges) {
        auto it = midpoint_id.find(edge_key(a, b));
        if (it == midpoint_id.end()) {
            out.boundary_edges.push_back({a, b});
        } else {
            out.boundary_edges.push_back({a, it->second});
            out.boundary_edges.push_back({it->second, b});
        }
    }

    finalize(out);
    out.generation_id = next_generation_id();
    return {std::move(out), std::move(rel)};
}

namespace {

std::uint64_t coord_hash(Vec2 p) {
    std::uint64_t hx, hy;
    static_assert(sizeof(double) == 8);
    std::memcpy(&hx, &p.x, 8);
    std::memcpy(&hy, &p.y, 8);
    std::uint64_t h = hx * 0x9e3779b97f4a7c15ull;
    h ^= hy + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

struct TriKey {
    std::array<Vec2, 3> p;
    bool operator==(const TriKey& o) const {
        for (int i = 0; i < 3; ++i)
            if (p[i].x != o.p[i].x || p[i].y != o.p[i].y) return false;
        return true;
    }
};

struct TriKeyHash {
    std::size_t operator()(const TriKey& k) const {
        std::uint64_t h = 0;
        for (const auto& q : k.p) h = h * 1099511628211ull ^ coord_hash(q);
        return static_cast<std::size_t>(h);
    }
};

/// Cyclic rotation starting at the lexicographically smallest corner, so that
/// congruent triangles compare equal regardless of which vertex is newest.
TriKey canonical_key(std::array<Vec2, 3> p) {
    int s = 0;
    for (int i = 1; i < 3; ++i) {
        if (p[i].x < p[s].x || (p[i].x == p[s].x && p[i].y < p[s].y)) s = i;
    }
    return TriKey{{p[s], p[(s + 1) % 3], p[(s + 2) % 3]}};
}

struct CoordKey {
    Vec2 p;
    bool operator==(const CoordKey& o) const { return p.x == o.p.x && p.y == o.p.y; }
};
struct CoordKeyHash {
    std::size_t operator()(const CoordKey& k) const {
        return static_cast<std::size_t>(coord_hash(k.p));
    }
};

}  // namespace

Mesh overlay(const Mesh& a, const Mesh& b, const Mesh& common_ancestor) {
    if (a.hierarchy_id != 0 && b.hierarchy_id != 0 && a.hierarchy_id != b.hierarchy_id)
        throw InputError("overlay of meshes from different hierarchies");

    double area_a = 0.0, area_b = 0.0, area_c = 0.0;
    for (int e = 0; e < a.num_elements(); ++e) area_a += a.area(e);
    for (int e = 0; e < b.num_elements(); ++e) area_b += b.area(e);
    for (int e = 0; e < common_ancestor.num_elements(); ++e) area_c += common_ancestor.area(e);
    if (std::abs(area_a - area_c) > 1e-12 * area_c || std::abs(area_b - area_c) > 1e-12 * area_c)
        throw InputError("overlay inputs do not cover the same domain");

    std::unordered_set<TriKey, TriKeyHash> leaves_a, leaves_b;
    leaves_a.reserve(a.elements.size());
    leaves_b.reserve(b.elements.size());
    auto tri_of = [](const Mesh& m, int e) {
        return std::array<Vec2, 3>{m.point(e, 0), m.point(e, 1), m.point(e, 2)};
    };
    for (int e = 0; e < a.num_elements(); ++e) leaves_a.insert(canonical_key(tri_of(a, e)));
    for (int e = 0; e < b.num_elements(); ++e) leaves_b.insert(canonical_key(tri_of(b, e)));

    int max_level = 0;
    for (const auto& el : a.elements) max_level = std::max(max_level, el.level);
    for (const auto& el : b.elements) max_level = std::max(max_level, el.level);

    std::vector<Vec2> out_vertices;
    std::unordered_map<CoordKey, int, CoordKeyHash> vertex_id;
    auto vid = [&](Vec2 p) {
        auto it = vertex_id.find(CoordKey{p});
        if (it != vertex_id.end()) return it->second;
        int id = static_cast<int>(out_vertices.size());
        out_vertices.push_back(p);
        vertex_id.emplace(CoordKey{p}, id);
        return id;
    };
    std::vector<std::array<int, 4>> out_elements;
    std::vector<int> out_levels;

    // Triangles are identified across meshes by exact coordinates; bisection
    // is deterministic, so descendants of an ancestor element match bitwise.
    auto descend = [&](auto&& self, std::array<Vec2, 3> tri, int level, bool below_a,
                       bool below_b) -> void {
        bool leaf_a = below_a || leaves_a.count(canonical_key(tri)) != 0;
        bool leaf_b = below_b || leaves_b.count(canonical_key(tri)) != 0;
        if (leaf_a && leaf_b) {
            out_elements.push_back({vid(tri[0]), vid(tri[1]), vid(tri[2]), 2});
            out_levels.push_back(level);
            return;
        }
        if (level > max_level)
            throw InputError("overlay inputs are not refinements of the common ancestor");
        Vec2 m = midpoint(tri[0], tri[1]);
        self(self, {tri[2], tri[0], m}, level + 1, leaf_a, leaf_b);
        self(self, {tri[1], tri[2], m}, level + 1, leaf_a, leaf_b);
    };
    for (int e = 0; e < common_ancestor.num_elements(); ++e) {
        descend(descend, tri_of(common_ancestor, e), common_ancestor.elements[e].level, false,
                false);
    }

    // Boundary edges = edges seen from exactly one element, in scan order.
    std::unordered_map<std::uint64_t, int> edge_count;
    for (const auto& el : out_elements) {
        for (int k = 0; k < 3; ++k)
            ++edge_count[edge_key(el[(k + 1) % 3], el[(k + 2) % 3])];
    }
    std::vector<std::array<int, 2>> out_boundary;
    for (const auto& el : out_elements) {
        for (int k = 0; k < 3; ++k) {
            int va = el[(k + 1) % 3], vb = el[(k + 2) % 3];
            if (edge_count[edge_key(va, vb)] == 1) out_boundary.push_back({va, vb});
        }
    }

    Mesh out = make_mesh(std::move(out_vertices), out_elements, std::move(out_boundary),
                         &out_levels);
    out.hierarchy_id = common_ancestor.hierarchy_id;
    return out;
}

void save_mesh(const Mesh& mesh, std::ostream& out) {
    std::string buf;
    buf.reserve(32 * mesh.vertices.size() + 24 * mesh.elements.size());
    buf += "afem-mesh v1\n";
    buf += "vertices " + std::to_string(mesh.num_vertices()) + "\n";
    for (const auto& p : mesh.vertices) {
        format_double(buf, p.x);
        buf += ' ';
        format_double(buf, p.y);
        buf += '\n';
    }
    buf += "elements " + std::to_string(mesh.num_elements()) + "\n";
    for (const auto& e : mesh.elements) {
        buf += std::to_string(e.v[0]) + " " + std::to_string(e.v[1]) + " " +
               std::to_string(e.v[2]) + " 2 " + std::to_string(e.level) + "\n";
    }
    buf += "boundary " + std::to_string(mesh.boundary_edges.size()) + "\n";
    for (auto [i, j] : mesh.boundary_edges)
        buf += std::to_string(i) + " " + std::to_string(j) + "\n";
    out << buf;
}

void save_mesh(const Mesh& mesh, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError("cannot open for writing: " + path);
    save_mesh(mesh, f);
    if (!f.good()) throw InputError("write failed: " + path);
}

Mesh load_mesh(std::istream& in) {
    std::string word, version;
    in >> word >> version;
    if (!in || word != "afem-mesh" || version != "v1")
        throw InputError("bad mesh file header");
    std::size_t n = 0;
    in >> word >> n;
    if (!in || word != "vertices") throw InputError("expected vertices section");
    std::vector<Vec2> vs(n);
    for (auto& p : vs) in >> p.x >> p.y;
    in >> word >> n;
    if (!in || word != "elements") throw InputError("expected elements section");
    std::vector<std::array<int, 4>> raw(n);
    std::vector<int> levels(n);
    for (std::size_t i = 0; i < n; ++i)
        in >> raw[i][0] >> raw[i][1] >> raw[i][2] >> raw[i][3] >> levels[i];
    in >> word >> n;
    if (!in || word != "boundary") throw InputError("expected boundary section");
    std::vector<std::array<int, 2>> bnd(n);
    for (auto& e : bnd) in >> e[0] >> e[1];
    if (!in) throw InputError("truncated mesh file");
    return make_mesh(std::move(vs), raw, std::move(bnd), &levels);
}

Mesh load_mesh(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open mesh file: " + path);
    return load_mesh(f);
}

}  // namespace afem
