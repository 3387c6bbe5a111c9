#include "sgdm/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace sgdm {

namespace {

double signed_measure(int dim, const std::vector<Point>& v, const std::array<int, 3>& c) {
    if (dim == 1) {
        return v[c[1]][0] - v[c[0]][0];
    }
    const Point& a = v[c[0]];
    const Point& b = v[c[1]];
    const Point& d = v[c[2]];
    return 0.5 * ((b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]));
}

std::array<int, 2> sorted_edge(int a, int b) { return a < b ? std::array<int, 2>{a, b} : std::array<int, 2>{b, a}; }

// Edges (2D) or vertices (1D) that belong to exactly one cell.
std::map<std::array<int, 2>, int> facet_counts(int dim, const std::vector<std::array<int, 3>>& cells) {
    std::map<std::array<int, 2>, int> counts;
    for (const auto& c : cells) {
        if (dim == 1) {
            ++counts[{c[0], c[0]}];
            ++counts[{c[1], c[1]}];
        } else {
            ++counts[sorted_edge(c[0], c[1])];
            ++counts[sorted_edge(c[1], c[2])];
            ++counts[sorted_edge(c[2], c[0])];
        }
    }
    return counts;
}

}  // namespace

Mesh::Mesh(int dim, std::vector<Point> vertices, std::vector<std::array<int, 3>> cells,
           std::vector<int> boundary_vertices, std::vector<std::array<int, 2>> boundary_edges,
           std::vector<int> parent)
    : dim_(dim),
      vertices_(std::move(vertices)),
      cells_(std::move(cells)),
      boundary_vertices_(std::move(boundary_vertices)),
      boundary_edges_(std::move(boundary_edges)),
      parent_(std::move(parent)) {
    validate();
}

void Mesh::validate() {
    if (dim_ != 1 && dim_ != 2) {
        throw MeshValidationError("mesh dimension must be 1 or 2, got " + std::to_string(dim_));
    }
    if (vertices_.empty() || cells_.empty()) {
        throw MeshValidationError("mesh needs at least one vertex and one cell");
    }
    const int nv = n_vertices();
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        for (int k = 0; k < cell_size(); ++k) {
            if (cells_[c][k] < 0 || cells_[c][k] >= nv) {
                throw MeshValidationError("cell " + std::to_string(c) + " references vertex " +
                                          std::to_string(cells_[c][k]) + " out of range [0," +
                                          std::to_string(nv) + ")");
            }
        }
        if (dim_ == 1) cells_[c][2] = -1;
    }

    measure_.resize(cells_.size());
    for (std::size_t c = 0; c < cells_.size(); ++c) {
        double s = signed_measure(dim_, vertices_, cells_[c]);
        if (s < 0.0) {
            std::swap(cells_[c][0], cells_[c][1]);
            s = -s;
        }
        if (!(s > 0.0)) {
            throw MeshValidationError("cell " + std::to_string(c) + " has zero measure");
        }
        measure_[c] = s;
    }

    for (int b : boundary_vertices_) {
        if (b < 0 || b >= nv) {
            throw MeshValidationError("boundary vertex " + std::to_string(b) + " out of range");
        }
    }
    std::sort(boundary_vertices_.begin(), boundary_vertices_.end());
    boundary_vertices_.erase(std::unique(boundary_vertices_.begin(), boundary_vertices_.end()),
                             boundary_vertices_.end());

    // Flagged boundary must coincide with the topological boundary.
    const auto counts = facet_counts(dim_, cells_);
    std::set<int> topo_vertices;
    std::set<std::array<int, 2>> topo_edges;
    for (const auto& [facet, n] : counts) {
        if (n == 1) {
            topo_vertices.insert(facet[0]);
            topo_vertices.insert(facet[1]);
            if (dim_ == 2) topo_edges.insert(facet);
        } else if (n > 2) {
            throw MeshValidationError("facet shared by more than two cells");
        }
    }
    if (!std::equal(topo_vertices.begin(), topo_vertices.end(), boundary_vertices_.begin(),
                    boundary_vertices_.end())) {
        throw MeshValidationError("boundary vertex flags do not match the topological boundary");
    }
    if (dim_ == 2) {
        for (auto& e : boundary_edges_) {
            if (e[0] < 0 || e[0] >= nv || e[1] < 0 || e[1] >= nv) {
                throw MeshValidationError("boundary edge vertex out of range");
            }
            e = sorted_edge(e[0], e[1]);
        }
        std::sort(boundary_edges_.begin(), boundary_edges_.end());
        boundary_edges_.erase(std::unique(boundary_edges_.begin(), boundary_edges_.end()), boundary_edges_.end());
        if (!std::equal(topo_edges.begin(), topo_edges.end(), boundary_edges_.begin(), boundary_edges_.end())) {
            throw MeshValidationError("boundary edges do not match the topological boundary");
        }
    } else if (!boundary_edges_.empty()) {
        throw MeshValidationError("boundary edges are only meaningful in 2D");
    }

    on_boundary_.assign(nv, 0);
    for (int b : boundary_vertices_) on_boundary_[b] = 1;

    if (!parent_.empty() && parent_.size() != cells_.size()) {
        throw MeshValidationError("parent map size does not match cell count");
    }

    bbox_.lo = {std::numeric_limits<double>::infinity(), dim_ == 1 ? 0.0 : std::numeric_limits<double>::infinity()};
    bbox_.hi = {-std::numeric_limits<double>::infinity(), dim_ == 1 ? 0.0 : -std::numeric_limits<double>::infinity()};
    for (const auto& v : vertices_) {
        for (int k = 0; k < dim_; ++k) {
            if (!std::isfinite(v[k])) throw MeshValidationError("non-finite vertex coordinate");
            bbox_.lo[k] = std::min(bbox_.lo[k], v[k]);
            bbox_.hi[k] = std::max(bbox_.hi[k], v[k]);
        }
    }
}

double Mesh::total_measure() const {
    double s = 0.0;
    for (double m : measure_) s += m;
    return s;
}

double Mesh::cell_diameter(int c) const {
    double d = 0.0;
    for (int i = 0; i < cell_size(); ++i) {
        for (int j = i + 1; j < cell_size(); ++j) {
            const Point& a = vertices_[cells_[c][i]];
            const Point& b = vertices_[cells_[c][j]];
            d = std::max(d, std::hypot(a[0] - b[0], a[1] - b[1]));
        }
    }
    return d;
}

double Mesh::max_diameter() const {
    double d = 0.0;
    for (int c = 0; c < n_cells(); ++c) d = std::max(d, cell_diameter(c));
    return d;
}

double Mesh::max_cell_measure() const { return *std::max_element(measure_.begin(), measure_.end()); }

std::array<double, 3> Mesh::barycentric(int c, const Point& x) const {
    const auto& cv = cells_[c];
    if (dim_ == 1) {
        const double a = vertices_[cv[0]][0];
        const double b = vertices_[cv[1]][0];
        const double t = (x[0] - a) / (b - a);
        return {1.0 - t, t, 0.0};
    }
    const Point& a = vertices_[cv[0]];
    const Point& b = vertices_[cv[1]];
    const Point& d = vertices_[cv[2]];
    const double det = (b[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (b[1] - a[1]);
    const double l1 = ((x[0] - a[0]) * (d[1] - a[1]) - (d[0] - a[0]) * (x[1] - a[1])) / det;
    const double l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
    return {1.0 - l1 - l2, l1, l2};
}

int Mesh::locate(const Point& x, double tol) const {
    for (int c = 0; c < n_cells(); ++c) {
        const auto l = barycentric(c, x);
        bool inside = true;
        for (int k = 0; k < cell_size(); ++k) inside = inside && l[k] >= -tol;
        if (inside) return c;
    }
    return -1;
}

bool Mesh::same_structure(const Mesh& other, double tol) const {
    if (dim_ != other.dim_ || vertices_.size() != other.vertices_.size() || cells_ != other.cells_ ||
        boundary_vertices_ != other.boundary_vertices_ || boundary_edges_ != other.boundary_edges_) {
        return false;
    }
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
        for (int k = 0; k < 2; ++k) {
            if (std::abs(vertices_[i][k] - other.vertices_[i][k]) > tol) return false;
        }
    }
    return true;
}

Mesh build_uniform_interval(int n_cells, double a, double b) {
    if (n_cells < 1) throw std::invalid_argument("build_uniform_interval: n_cells must be positive");
    if (!(a < b)) throw std::invalid_argument("build_uniform_interval: need a < b");
    std::vector<Point> v(n_cells + 1);
    for (int i = 0; i <= n_cells; ++i) {
        // Endpoints are set exactly so that the cover sums to b - a.
        v[i] = {i == n_cells ? b : a + (b - a) * static_cast<double>(i) / n_cells, 0.0};
    }
    std::vector<std::array<int, 3>> cells(n_cells);
    for (int i = 0; i < n_cells; ++i) cells[i] = {i, i + 1, -1};
    return Mesh(1, std::move(v), std::move(cells), {0, n_cells});
}

Mesh build_uniform_triangulation(int nx, int ny, const BoundingBox& rect) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("build_uniform_triangulation: nx, ny must be positive");
    if (!(rect.lo[0] < rect.hi[0]) || !(rect.lo[1] < rect.hi[1])) {
        throw std::invalid_argument("build_uniform_triangulation: degenerate rectangle");
    }
    auto coord = [](double lo, double hi, int i, int n) {
        return i == n ? hi : lo + (hi - lo) * static_cast<double>(i) / n;
    };
    std::vector<Point> v;
    v.reserve((nx + 1) * (ny + 1));
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            v.push_back({coord(rect.lo[0], rect.hi[0], i, nx), coord(rect.lo[1], rect.hi[1], j, ny)});
        }
    }
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    std::vector<std::array<int, 3>> cells;
    cells.reserve(2 * nx * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            cells.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            cells.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    }
    std::vector<int> bv;
    std::vector<std::array<int, 2>> be;
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            if (i == 0 || j == 0 || i == nx || j == ny) bv.push_back(id(i, j));
        }
    }
    for (int i = 0; i < nx; ++i) {
        be.push_back({id(i, 0), id(i + 1, 0)});
        be.push_back({id(i, ny), id(i + 1, ny)});
    }
    for (int j = 0; j < ny; ++j) {
        be.push_back({id(0, j), id(0, j + 1)});
        be.push_back({id(nx, j), id(nx, j + 1)});
    }
    return Mesh(2, std::move(v), std::move(cells), std::move(bv), std::move(be));
}

Mesh refine(const Mesh& m) {
    std::vector<Point> v = m.vertices();
    std::vector<std::array<int, 3>> cells;
    std::vector<int> parent;
    std::map<std::array<int, 2>, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = sorted_edge(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const Point& pa = m.vertex(a);
        const Point& pb = m.vertex(b);
        v.push_back({0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])});
        const int id = static_cast<int>(v.size()) - 1;
        midpoint.emplace(key, id);
        return id;
    };

    if (m.dim() == 1) {
        for (int c = 0; c < m.n_cells(); ++c) {
            const auto& cv = m.cell(c);
            const int x = mid(cv[0], cv[1]);
            cells.push_back({cv[0], x, -1});
            cells.push_back({x, cv[1], -1});
            parent.insert(parent.end(), {c, c});
        }
        return Mesh(1, std::move(v), std::move(cells), m.boundary_vertices(), {}, std::move(parent));
    }

    for (int c = 0; c < m.n_cells(); ++c) {
        const auto& cv = m.cell(c);
        const int m01 = mid(cv[0], cv[1]);
        const int m12 = mid(cv[1], cv[2]);
        const int m20 = mid(cv[2], cv[0]);
        cells.push_back({cv[0], m01, m20});
        cells.push_back({m01, cv[1], m12});
        cells.push_back({m20, m12, cv[2]});
        cells.push_back({m01, m12, m20});
        parent.insert(parent.end(), {c, c, c, c});
    }
    std::vector<int> bv = m.boundary_vertices();
    std::vector<std::array<int, 2>> be;
    for (const auto& e : m.boundary_edges()) {
        const int x = midpoint.at(sorted_edge(e[0], e[1]));
        bv.push_back(x);
        be.push_back({e[0], x});
        be.push_back({x, e[1]});
    }
    return Mesh(2, std::move(v), std::move(cells), std::move(bv), std::move(be), std::move(parent));
}

std::string write_mesh_text(const Mesh& m) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "dim " << m.dim() << '\n';
    os << "vertices " << m.n_vertices() << '\n';
    for (const auto& p : m.vertices()) {
        os << p[0];
        if (m.dim() == 2) os << ' ' << p[1];
        os << '\n';
    }
    os << "cells " << m.n_cells() << '\n';
    for (const auto& c : m.cells()) {
        os << c[0] << ' ' << c[1];
        if (m.dim() == 2) os << ' ' << c[2];
        os << '\n';
    }
    os << "boundary_vertices " << m.boundary_vertices().size() << '\n';
    for (int b : m.boundary_vertices()) os << b << '\n';
    if (m.dim() == 2) {
        os << "boundary_edges " << m.boundary_edges().size() << '\n';
        for (const auto& e : m.boundary_edges()) os << e[0] << ' ' << e[1] << '\n';
    }
    os << "end\n";
    return os.str();
}

namespace {

class LineReader {
public:
    explicit LineReader(const std::string& text) : in_(text) {}

    // Next non-empty, non-comment line split into tokens. Throws if the input ends.
    std::vector<std::string> next(const std::string& expecting) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::istringstream ls(line);
            std::vector<std::string> tok;
            for (std::string t; ls >> t;) tok.push_back(t);
            if (!tok.empty()) return tok;
        }
        throw MeshParseError(line_no_ + 1, "unexpected end of file, expected " + expecting);
    }

    int line() const { return line_no_; }

private:
    std::istringstream in_;
    int line_no_ = 0;
};

int parse_int(const std::string& s, int line, const std::string& what) {
    try {
        std::size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return static_cast<int>(v);
    } catch (const std::exception&) {
        throw MeshParseError(line, "expected integer " + what + ", got '" + s + "'");
    }
}

double parse_double(const std::string& s, int line, const std::string& what) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw MeshParseError(line, "expected real " + what + ", got '" + s + "'");
    }
}

int read_header(LineReader& r, const std::string& keyword) {
    const auto tok = r.next("section '" + keyword + "'");
    if (tok.size() != 2 || tok[0] != keyword) {
        throw MeshParseError(r.line(), "expected '" + keyword + " <count>'");
    }
    const int n = parse_int(tok[1], r.line(), keyword + " count");
    if (n < 0) throw MeshParseError(r.line(), "negative count for " + keyword);
    return n;
}

std::vector<std::string> read_row(LineReader& r, const std::string& section, std::size_t width) {
    const auto tok = r.next("entries of section '" + section + "'");
    if (tok.size() != width) {
        throw MeshParseError(r.line(), "expected " + std::to_string(width) + " tokens in section '" + section +
                                           "', got " + std::to_string(tok.size()));
    }
    return tok;
}

}  // namespace

Mesh parse_mesh_text(const std::string& text) {
    LineReader r(text);
    const int dim = read_header(r, "dim");
    if (dim != 1 && dim != 2) throw MeshParseError(r.line(), "dim must be 1 or 2");

    const int nv = read_header(r, "vertices");
    std::vector<Point> v(nv, Point{0.0, 0.0});
    for (int i = 0; i < nv; ++i) {
        const auto tok = read_row(r, "vertices", dim);
        for (int k = 0; k < dim; ++k) v[i][k] = parse_double(tok[k], r.line(), "coordinate");
    }
    const int nc = read_header(r, "cells");
    std::vector<std::array<int, 3>> cells(nc, {-1, -1, -1});
    for (int c = 0; c < nc; ++c) {
        const auto tok = read_row(r, "cells", dim + 1);
        for (int k = 0; k <= dim; ++k) cells[c][k] = parse_int(tok[k], r.line(), "vertex index");
    }
    const int nb = read_header(r, "boundary_vertices");
    std::vector<int> bv(nb);
    for (int i = 0; i < nb; ++i) bv[i] = parse_int(read_row(r, "boundary_vertices", 1)[0], r.line(), "vertex index");
    std::vector<std::array<int, 2>> be;
    if (dim == 2) {
        const int ne = read_header(r, "boundary_edges");
        be.resize(ne);
        for (int i = 0; i < ne; ++i) {
            const auto tok = read_row(r, "boundary_edges", 2);
            be[i] = {parse_int(tok[0], r.line(), "vertex index"), parse_int(tok[1], r.line(), "vertex index")};
        }
    }
    const auto tail = r.next("'end'");
    if (tail.size() != 1 || tail[0] != "end") throw MeshParseError(r.line(), "expected 'end'");
    return Mesh(dim, std::move(v), std::move(cells), std::move(bv), std::move(be));
}

void save_mesh(const Mesh& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << write_mesh_text(m);
}

Mesh load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_mesh_text(ss.str());
}

}  // namespace sgdm
