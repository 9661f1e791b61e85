#include "blendforge/mesh.hpp"

#include <fstream>
#include <iomanip>
#include <limits>
#include <queue>
#include <sstream>

namespace blendforge {

namespace {

bool next_content_line(std::istream& in, std::string& line, int& lineNo) {
  while (std::getline(in, line)) {
    ++lineNo;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
  }
  return false;
}

TriMesh read_off(std::istream& in, const std::string& path) {
  std::string line;
  int lineNo = 0;
  if (!next_content_line(in, line, lineNo))
    throw ParseError(path, lineNo, "empty file");
  std::istringstream header(line);
  std::string magic;
  header >> magic;
  if (magic != "OFF") throw ParseError(path, lineNo, "missing OFF header");
  long n = -1, f = -1, e = 0;
  if (!(header >> n)) {
    if (!next_content_line(in, line, lineNo))
      throw ParseError(path, lineNo, "missing counts line");
    header = std::istringstream(line);
    header >> n;
  }
  if (!(header >> f) || n < 0 || f < 0)
    throw ParseError(path, lineNo, "malformed counts line");
  header >> e;

  TriMesh mesh;
  mesh.V.resize(n, 3);
  mesh.F.resize(f, 3);
  for (long i = 0; i < n; ++i) {
    if (!next_content_line(in, line, lineNo))
      throw ParseError(path, lineNo, "unexpected end of file in vertex list");
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z)) throw ParseError(path, lineNo, "malformed vertex line");
    mesh.V.row(i) << x, y, z;
  }
  for (long k = 0; k < f; ++k) {
    if (!next_content_line(in, line, lineNo))
      throw ParseError(path, lineNo, "unexpected end of file in face list");
    std::istringstream ls(line);
    int count, a, b, c;
    if (!(ls >> count)) throw ParseError(path, lineNo, "malformed face line");
    if (count != 3) throw ParseError(path, lineNo, "only triangle faces are supported");
    if (!(ls >> a >> b >> c)) throw ParseError(path, lineNo, "malformed face line");
    for (int idx : {a, b, c}) {
      if (idx < 0 || idx >= n)
        throw ParseError(path, lineNo, "face index " + std::to_string(idx) + " out of range");
    }
    mesh.F.row(k) << a, b, c;
  }
  return mesh;
}

// Parses the vertex part of an OBJ face token ("7", "7/1", "7//3", "-1").
int obj_index(const std::string& token, long numVertices, const std::string& path,
              int lineNo) {
  const std::string head = token.substr(0, token.find('/'));
  long idx = 0;
  try {
    size_t used = 0;
    idx = std::stol(head, &used);
    if (used != head.size()) throw std::invalid_argument(head);
  } catch (const std::exception&) {
    throw ParseError(path, lineNo, "malformed face index '" + token + "'");
  }
  if (idx == 0) throw ParseError(path, lineNo, "face index 0 is invalid (OBJ is 1-based)");
  const long resolved = idx > 0 ? idx - 1 : numVertices + idx;
  if (resolved < 0 || resolved >= numVertices)
    throw ParseError(path, lineNo, "face index " + std::to_string(idx) + " out of range");
  return static_cast<int>(resolved);
}

TriMesh read_obj(std::istream& in, const std::string& path) {
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3i> faces;
  std::string line;
  int lineNo = 0;
  while (next_content_line(in, line, lineNo)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(path, lineNo, "malformed vertex line");
      verts.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      for (std::string t; ls >> t;) tokens.push_back(t);
      if (tokens.size() != 3)
        throw ParseError(path, lineNo, "only triangle faces are supported");
      const long n = static_cast<long>(verts.size());
      faces.emplace_back(obj_index(tokens[0], n, path, lineNo),
                         obj_index(tokens[1], n, path, lineNo),
                         obj_index(tokens[2], n, path, lineNo));
    }
    // normals, texture coordinates, groups and materials are ignored
  }
  TriMesh mesh;
  mesh.V.resize(static_cast<Eigen::Index>(verts.size()), 3);
  mesh.F.resize(static_cast<Eigen::Index>(faces.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.V.row(i) = verts[i].transpose();
  for (size_t i = 0; i < faces.size(); ++i) mesh.F.row(i) = faces[i].transpose();
  return mesh;
}

}  // namespace

MeshFormat format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".off") return MeshFormat::OFF;
  if (ext == ".obj") return MeshFormat::OBJ;
  throw Error("cannot infer mesh format from '" + path.string() + "'");
}

TriMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format) {
  const MeshFormat fmt = format ? *format : format_from_path(path);
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  TriMesh mesh = fmt == MeshFormat::OFF ? read_off(in, path.string())
                                        : read_obj(in, path.string());
  validate(mesh);
  return mesh;
}

void save_mesh(const TriMesh& mesh, const std::filesystem::path& path,
               std::optional<MeshFormat> format) {
  const MeshFormat fmt = format ? *format : format_from_path(path);
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  if (fmt == MeshFormat::OFF) {
    out << "OFF\n" << mesh.numVertices() << ' ' << mesh.numFaces() << " 0\n";
    for (Eigen::Index i = 0; i < mesh.numVertices(); ++i)
      out << mesh.V(i, 0) << ' ' << mesh.V(i, 1) << ' ' << mesh.V(i, 2) << '\n';
    for (Eigen::Index f = 0; f < mesh.numFaces(); ++f)
      out << "3 " << mesh.F(f, 0) << ' ' << mesh.F(f, 1) << ' ' << mesh.F(f, 2) << '\n';
  } else {
    for (Eigen::Index i = 0; i < mesh.numVertices(); ++i)
      out << "v " << mesh.V(i, 0) << ' ' << mesh.V(i, 1) << ' ' << mesh.V(i, 2) << '\n';
    for (Eigen::Index f = 0; f < mesh.numFaces(); ++f)
      out << "f " << mesh.F(f, 0) + 1 << ' ' << mesh.F(f, 1) + 1 << ' ' << mesh.F(f, 2) + 1
          << '\n';
  }
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

MeshGraph build_graph(const TriMesh& mesh) {
  const int n = static_cast<int>(mesh.numVertices());
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<size_t>(mesh.numFaces()) * 6);
  for (Eigen::Index f = 0; f < mesh.numFaces(); ++f) {
    for (int c = 0; c < 3; ++c) {
      const int a = mesh.F(f, c), b = mesh.F(f, (c + 1) % 3);
      edges.emplace_back(a, b);
      edges.emplace_back(b, a);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  MeshGraph g;
  g.offsets.assign(n + 1, 0);
  for (const auto& [a, b] : edges) ++g.offsets[a + 1];
  for (int i = 0; i < n; ++i) g.offsets[i + 1] += g.offsets[i];
  g.neighbors.reserve(edges.size());
  g.lengths.reserve(edges.size());
  for (const auto& [a, b] : edges) {
    g.neighbors.push_back(b);
    g.lengths.push_back((mesh.V.row(a) - mesh.V.row(b)).norm());
  }
  return g;
}

Eigen::VectorXd graph_distances(const MeshGraph& graph, int seed, double maxDistance) {
  const int n = graph.numVertices();
  Eigen::VectorXd dist =
      Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  if (seed < 0 || seed >= n) throw Error("seed vertex out of range");
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  dist(seed) = 0.0;
  heap.emplace(0.0, seed);
  while (!heap.empty()) {
    const auto [d, v] = heap.top();
    heap.pop();
    if (d > dist(v)) continue;
    for (int k = graph.offsets[v]; k < graph.offsets[v + 1]; ++k) {
      const int u = graph.neighbors[k];
      const double nd = d + graph.lengths[k];
      if (nd <= maxDistance && nd < dist(u)) {
        dist(u) = nd;
        heap.emplace(nd, u);
      }
    }
  }
  return dist;
}

std::vector<int> geodesic_ball(const MeshGraph& graph, int seed, double radius) {
  const Eigen::VectorXd dist = graph_distances(graph, seed, radius);
  std::vector<int> ball;
  for (int i = 0; i < dist.size(); ++i)
    if (dist(i) <= radius) ball.push_back(i);
  return ball;
}

std::vector<int> geodesic_ball(const TriMesh& mesh, int seed, double radius) {
  return geodesic_ball(build_graph(mesh), seed, radius);
}

}  // namespace blendforge
