#include "ddwm/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need swaps");

namespace ddwm {

using nlohmann::json;

namespace {

void write_f32(const std::string& path, const std::vector<float>& buf) {
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("save: cannot open " + path);
  bin.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!bin) throw std::runtime_error("save: write failed for " + path);
}

std::vector<float> read_f32(const std::string& path, size_t count) {
  std::vector<float> buf(count);
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("load: cannot open " + path);
  bin.read(reinterpret_cast<char*>(buf.data()),
           static_cast<std::streamsize>(count * sizeof(float)));
  if (bin.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
    throw std::runtime_error("load: truncated data in " + path);
  return buf;
}

void write_sidecar(const std::string& path, const char* format, size_t count,
                   const std::map<std::string, std::string>& meta, json extra = json()) {
  json side;
  side["format"] = format;
  side["count"] = count;
  if (!extra.is_null()) side["extents"] = std::move(extra);
  side["meta"] = meta;
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw std::runtime_error("save: cannot open " + path + ".json");
  js << side.dump(2) << "\n";
}

json read_sidecar(const std::string& path, const char* format,
                  std::map<std::string, std::string>* meta) {
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("load: cannot open " + path + ".json");
  json side = json::parse(js);
  if (side.at("format").get<std::string>() != format)
    throw std::runtime_error("load: unexpected format in " + path + ".json");
  if (meta) {
    meta->clear();
    for (auto& [k, v] : side.at("meta").items()) (*meta)[k] = v.get<std::string>();
  }
  return side;
}

}  // namespace

void save_tensor_archive(const std::string& path, const ParamStore& store,
                         const std::map<std::string, std::string>& meta) {
  {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("save_tensor_archive: cannot open " + path);
    bin.write(reinterpret_cast<const char*>(store.flat().data()),
              static_cast<std::streamsize>(store.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("save_tensor_archive: write failed for " + path);
  }
  json manifest;
  manifest["dtype"] = "float64";
  manifest["total_values"] = store.size();
  json tensors = json::array();
  for (const TensorSpec& s : store.manifest()) {
    json t;
    t["name"] = s.name;
    t["shape"] = s.shape;
    t["byte_offset"] = s.offset * sizeof(double);
    t["values"] = s.size;
    tensors.push_back(std::move(t));
  }
  manifest["tensors"] = std::move(tensors);
  manifest["meta"] = meta;
  std::ofstream js(path + ".json", std::ios::trunc);
  if (!js) throw std::runtime_error("save_tensor_archive: cannot open " + path + ".json");
  js << manifest.dump(2) << "\n";
}

void load_tensor_archive(const std::string& path, ParamStore* store,
                         std::map<std::string, std::string>* meta) {
  if (!store) throw std::invalid_argument("load_tensor_archive: null store");
  std::ifstream js(path + ".json");
  if (!js) throw std::runtime_error("load_tensor_archive: cannot open " + path + ".json");
  json manifest = json::parse(js);
  if (manifest.at("dtype").get<std::string>() != "float64")
    throw std::runtime_error("load_tensor_archive: unsupported dtype");

  const bool rebuild = store->size() == 0;
  size_t slot = 0;
  for (const json& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    const size_t offset = t.at("byte_offset").get<size_t>() / sizeof(double);
    if (rebuild) {
      if (store->add(name, shape) != offset)
        throw std::runtime_error("load_tensor_archive: non-contiguous manifest");
    } else {
      if (slot >= store->manifest().size())
        throw std::runtime_error("load_tensor_archive: manifest mismatch (extra tensor " +
                                 name + ")");
      const TensorSpec& have = store->manifest()[slot];
      if (have.name != name || have.shape != shape || have.offset != offset)
        throw std::runtime_error("load_tensor_archive: manifest mismatch at " + name);
    }
    ++slot;
  }
  if (!rebuild && slot != store->manifest().size())
    throw std::runtime_error("load_tensor_archive: manifest mismatch (missing tensors)");
  if (manifest.at("total_values").get<size_t>() != store->size())
    throw std::runtime_error("load_tensor_archive: value count mismatch");

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw std::runtime_error("load_tensor_archive: cannot open " + path);
  bin.read(reinterpret_cast<char*>(store->flat().data()),
           static_cast<std::streamsize>(store->size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(store->size() * sizeof(double)))
    throw std::runtime_error("load_tensor_archive: truncated data in " + path);

  if (meta) {
    meta->clear();
    for (auto& [k, v] : manifest.at("meta").items()) (*meta)[k] = v.get<std::string>();
  }
}

void save_point_cloud(const std::string& path, const PointCloud& points,
                      const std::map<std::string, std::string>& meta) {
  std::vector<float> buf;
  buf.reserve(points.size() * 3);
  std::array<double, 3> lo{0.0, 0.0, 0.0}, hi{0.0, 0.0, 0.0};
  if (!points.empty()) {
    lo = hi = points[0];
    for (const auto& p : points) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], p[a]);
        hi[a] = std::max(hi[a], p[a]);
      }
    }
  }
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) buf.push_back(static_cast<float>(p[a]));
  }
  write_f32(path, buf);
  json extents = {{"lo", lo}, {"hi", hi}};
  write_sidecar(path, "xyz_f32le", points.size(), meta, std::move(extents));
}

PointCloud load_point_cloud(const std::string& path, std::map<std::string, std::string>* meta) {
  json side = read_sidecar(path, "xyz_f32le", meta);
  const size_t count = side.at("count").get<size_t>();
  const std::vector<float> buf = read_f32(path, count * 3);
  PointCloud points(count);
  for (size_t i = 0; i < count; ++i) {
    for (int a = 0; a < 3; ++a) points[i][a] = buf[3 * i + a];
  }
  return points;
}

void save_rays(const std::string& path, const std::vector<Ray>& rays,
               const std::map<std::string, std::string>& meta) {
  std::vector<float> buf;
  buf.reserve(rays.size() * 7);
  for (size_t i = 0; i < rays.size(); ++i) {
    const Ray& r = rays[i];
    if (!r.gt_depth.has_value())
      throw std::invalid_argument("save_rays: ray " + std::to_string(i) +
                                  " has no ground-truth depth");
    for (int a = 0; a < 3; ++a) buf.push_back(static_cast<float>(r.origin[a]));
    for (int a = 0; a < 3; ++a) buf.push_back(static_cast<float>(r.dir[a]));
    buf.push_back(static_cast<float>(*r.gt_depth));
  }
  write_f32(path, buf);
  write_sidecar(path, "ray_f32le", rays.size(), meta);
}

std::vector<Ray> load_rays(const std::string& path, std::map<std::string, std::string>* meta) {
  json side = read_sidecar(path, "ray_f32le", meta);
  const size_t count = side.at("count").get<size_t>();
  const std::vector<float> buf = read_f32(path, count * 7);
  std::vector<Ray> rays(count);
  for (size_t i = 0; i < count; ++i) {
    const float* rec = buf.data() + 7 * i;
    for (int a = 0; a < 3; ++a) rays[i].origin[a] = rec[a];
    // stored directions were unit-length doubles; renormalize after the f32
    // round trip so Ray::validate keeps its tight tolerance
    double n2 = 0.0;
    for (int a = 0; a < 3; ++a) n2 += double(rec[3 + a]) * double(rec[3 + a]);
    const double n = std::sqrt(n2);
    if (!(n > 0.0)) throw std::runtime_error("load_rays: zero direction in " + path);
    for (int a = 0; a < 3; ++a) rays[i].dir[a] = rec[3 + a] / n;
    rays[i].gt_depth = rec[6];
  }
  return rays;
}

void save_trajectory(const std::string& path, const Trajectory& traj,
                     const std::map<std::string, std::string>& meta) {
  traj.validate();
  json j;
  if (traj.frames.empty()) throw std::invalid_argument("save_trajectory: empty trajectory");
  j["rows"] = traj.frames[0].rows;
  j["cols"] = traj.frames[0].cols;
  j["vocab"] = traj.frames[0].vocab.m;
  json frames = json::array();
  for (const TokenGrid& g : traj.frames) frames.push_back(g.tokens);
  j["frames"] = std::move(frames);
  json actions = json::array();
  for (const Action& a : traj.actions) actions.push_back(a);
  j["actions"] = std::move(actions);
  j["meta"] = meta;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_trajectory: cannot open " + path);
  out << j.dump(2) << "\n";
}

Trajectory load_trajectory(const std::string& path, std::map<std::string, std::string>* meta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_trajectory: cannot open " + path);
  json j = json::parse(in);
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const Vocabulary vocab(j.at("vocab").get<int>());
  Trajectory traj;
  for (const json& f : j.at("frames")) {
    TokenGrid g(vocab, rows, cols);
    g.tokens = f.get<std::vector<int32_t>>();
    if (static_cast<int>(g.tokens.size()) != rows * cols)
      throw std::runtime_error("load_trajectory: frame size mismatch in " + path);
    traj.frames.push_back(std::move(g));
  }
  for (const json& a : j.at("actions")) {
    traj.actions.push_back(a.get<Action>());
  }
  if (meta) {
    meta->clear();
    for (auto& [k, v] : j.at("meta").items()) (*meta)[k] = v.get<std::string>();
  }
  traj.validate();
  return traj;
}

}  // namespace ddwm
