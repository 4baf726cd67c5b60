#include "cathlab/error.hpp"
#include "cathlab/volume_data.hpp"

#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace cathlab::volume {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

std::pair<fs::path, fs::path> volume_paths(const fs::path& path) {
  fs::path raw = path, side = path;
  if (path.extension() == ".json") {
    raw.replace_extension(".raw");
  } else {
    side.replace_extension(".json");
  }
  return {raw, side};
}

std::ifstream open_in(const fs::path& p, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(p, mode);
  if (!in) fail(ErrorCode::Io, "cannot open " + p.string());
  return in;
}

std::ofstream open_out(const fs::path& p, std::ios::openmode mode = std::ios::out) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, mode);
  if (!out) fail(ErrorCode::Io, "cannot write " + p.string());
  return out;
}

Vec3 vec3_from(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(ErrorCode::MalformedFile, std::string("volume sidecar: '") + key + "' must be a 3-array");
  return Vec3(j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>());
}

}  // namespace

void save_volume(const AttenuationVolume& vol, const fs::path& path) {
  const auto [raw, side] = volume_paths(path);
  json j;
  j["dims"] = vol.dims();
  j["spacing_mm"] = {vol.spacing().x(), vol.spacing().y(), vol.spacing().z()};
  j["origin_mm"] = {vol.origin().x(), vol.origin().y(), vol.origin().z()};
  j["dtype"] = "float32";
  j["byte_order"] = "little";
  j["raw"] = raw.filename().string();
  {
    auto out = open_out(side);
    out << j.dump(2) << '\n';
  }
  auto out = open_out(raw, std::ios::binary);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(vol.data().data()),
              static_cast<std::streamsize>(vol.data().size() * sizeof(float)));
  } else {
    for (float f : vol.data()) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = byteswap32(u);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
  if (!out) fail(ErrorCode::Io, "failed writing " + raw.string());
}

AttenuationVolume load_volume(const fs::path& path) {
  auto [raw, side] = volume_paths(path);
  json j;
  try {
    auto in = open_in(side);
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, "volume sidecar " + side.string() + ": " + e.what());
  }
  std::array<int, 3> dims{};
  try {
    if (!j.contains("dims") || !j["dims"].is_array() || j["dims"].size() != 3)
      fail(ErrorCode::MalformedFile, "volume sidecar: 'dims' must be a 3-array");
    for (int a = 0; a < 3; ++a) dims[a] = j["dims"][a].get<int>();
    if (j.contains("dtype") && j["dtype"] != "float32")
      fail(ErrorCode::MalformedFile, "volume sidecar: only float32 payloads are supported");
    if (j.contains("raw")) raw = side.parent_path() / j["raw"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedFile, std::string("volume sidecar: ") + e.what());
  }
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) fail(ErrorCode::MalformedFile, "volume sidecar: dims must be >= 1");
  const Vec3 spacing = vec3_from(j, "spacing_mm");
  const Vec3 origin = vec3_from(j, "origin_mm");
  const bool big = j.value("byte_order", std::string("little")) == "big";

  const std::size_t expected = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  auto in = open_in(raw, std::ios::binary);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  if (bytes != expected * sizeof(float))
    fail(ErrorCode::SizeMismatch, "volume payload has " + std::to_string(bytes / sizeof(float)) +
                                      " values, metadata expects " + std::to_string(expected));
  std::vector<float> data(expected);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(ErrorCode::Io, "failed reading " + raw.string());
  const bool swap = big != (std::endian::native == std::endian::big);
  if (swap) {
    for (float& f : data) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      u = byteswap32(u);
      std::memcpy(&f, &u, 4);
    }
  }
  return AttenuationVolume(dims, spacing, origin, std::move(data));
}

void save_mesh(const SurfaceMesh& mesh, const fs::path& path) {
  validate_indices(mesh);
  auto out = open_out(path);
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

SurfaceMesh load_mesh(const fs::path& path, bool require_closed) {
  auto in = open_in(path);
  SurfaceMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        try {
          idx.push_back(std::stoi(tok.substr(0, tok.find('/'))) - 1);
        } catch (const std::exception&) {
          fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": bad face index");
        }
      }
      if (idx.size() < 3) fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": face needs 3 indices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  validate_indices(mesh);
  if (require_closed) {
    const MeshReport r = inspect(mesh);
    if (!r.manifold) fail(ErrorCode::NonManifold, path.string() + ": non-manifold edge");
    if (!r.closed) fail(ErrorCode::NotClosed, path.string() + ": mesh is not closed");
  }
  return mesh;
}

void save_tet_mesh(const TetMesh& mesh, const fs::path& path) {
  validate_indices(mesh);
  auto out = open_out(path);
  out.precision(17);
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.tets) out << "t " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
}

TetMesh load_tet_mesh(const fs::path& path) {
  auto in = open_in(path);
  TetMesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "t") {
      std::array<int, 4> t{};
      if (!(ss >> t[0] >> t[1] >> t[2] >> t[3]))
        fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": bad tet");
      mesh.tets.push_back(t);
    } else {
      fail(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(lineno) + ": unknown record '" + tag + "'");
    }
  }
  validate_indices(mesh);
  for (std::size_t i = 0; i < mesh.tets.size(); ++i) {
    const auto& t = mesh.tets[i];
    if (std::abs(tet_volume(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]], mesh.vertices[t[3]])) < 1e-12)
      fail(ErrorCode::MalformedFile, path.string() + ": tet " + std::to_string(i) + " is degenerate");
  }
  return mesh;
}

}  // namespace cathlab::volume
