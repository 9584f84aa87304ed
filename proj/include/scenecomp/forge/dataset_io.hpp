#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

#include "scenecomp/forge/scene.hpp"
#include "scenecomp/io.hpp"
#include "scenecomp/sha256.hpp"

namespace scenecomp {

inline constexpr int kDatasetSchemaVersion = 1;

inline std::string scene_dir_name(uint64_t scene_id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%08" PRIu64, scene_id);
  return buf;
}

namespace detail {

inline std::string depth_blob(const DepthRaster& d) {
  io::ByteWriter w;
  for (double v : d.data) w.f32(static_cast<float>(v));
  return w.take();
}

inline std::string id_blob(const IdRaster& r) {
  io::ByteWriter w;
  for (uint16_t v : r.data) w.u16(v);
  return w.take();
}

inline std::string ppm_blob(const RgbRaster& r) {
  std::string s = "P6\n" + std::to_string(r.width) + " " + std::to_string(r.height) + "\n255\n";
  for (const Rgb& c : r.data) {
    s.push_back(static_cast<char>(std::lround(std::clamp(c.r, 0.0, 1.0) * 255.0)));
    s.push_back(static_cast<char>(std::lround(std::clamp(c.g, 0.0, 1.0) * 255.0)));
    s.push_back(static_cast<char>(std::lround(std::clamp(c.b, 0.0, 1.0) * 255.0)));
  }
  return s;
}

inline std::string surface_blob(const PointCloud& pc) {
  io::ByteWriter w;
  for (const Vec3& p : pc.points) {
    w.f32(static_cast<float>(p.x));
    w.f32(static_cast<float>(p.y));
    w.f32(static_cast<float>(p.z));
  }
  return w.take();
}

inline nlohmann::json box_json(const AABB& b) {
  return {{"min", {b.min_corner.x, b.min_corner.y, b.min_corner.z}},
          {"max", {b.max_corner.x, b.max_corner.y, b.max_corner.z}}};
}

inline AABB box_from_json(const nlohmann::json& j) {
  auto mn = j.at("min"), mx = j.at("max");
  return {{mn[0], mn[1], mn[2]}, {mx[0], mx[1], mx[2]}};
}

}  // namespace detail

// One directory per scene: manifest.json plus little-endian binary blobs.
// The manifest carries a SHA-256 per blob; loading verifies every one.
inline std::filesystem::path write_sample(const SceneSample& scene,
                                          const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  fs::path dir = root / scene_dir_name(scene.scene_id);
  fs::create_directories(dir);

  std::map<std::string, std::string> blobs;
  for (size_t v = 0; v < scene.cameras.size(); ++v) {
    blobs["view_" + std::to_string(v) + "_depth.f32"] = detail::depth_blob(scene.depths[v]);
    blobs["view_" + std::to_string(v) + "_instid.u16"] = detail::id_blob(scene.ids[v]);
    if (!scene.rgbs.empty())
      blobs["view_" + std::to_string(v) + "_rgb.ppm"] = detail::ppm_blob(scene.rgbs[v]);
  }
  for (const auto& inst : scene.instances)
    blobs["inst_" + std::to_string(inst.instance_id) + "_surface.f32"] =
        detail::surface_blob(inst.gt_surface);

  nlohmann::json manifest;
  manifest["schema_version"] = kDatasetSchemaVersion;
  manifest["scene_id"] = scene.scene_id;
  manifest["seed"] = scene.seed;
  manifest["floor"] = detail::box_json(scene.floor);
  manifest["walls"] = nlohmann::json::array();
  for (const auto& wall : scene.walls) manifest["walls"].push_back(detail::box_json(wall));
  manifest["instances"] = nlohmann::json::array();
  for (const auto& inst : scene.instances) {
    nlohmann::json j;
    j["id"] = inst.instance_id;
    j["kind"] = to_string(inst.primitive.kind);
    j["params"] = inst.primitive.params;
    j["base_color"] = {inst.primitive.base_color.r, inst.primitive.base_color.g,
                       inst.primitive.base_color.b};
    j["scale"] = inst.scale;
    j["z_rotation"] = inst.z_rotation;
    j["translation"] = {inst.translation.x, inst.translation.y, inst.translation.z};
    j["gt_box"] = detail::box_json(inst.gt_box);
    j["surface_count"] = inst.gt_surface.size();
    manifest["instances"].push_back(j);
  }
  manifest["cameras"] = nlohmann::json::array();
  for (const auto& cam : scene.cameras) {
    nlohmann::json j;
    j["K"] = cam.intrinsics.m;
    std::array<double, 16> w2c{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) w2c[r * 4 + c] = cam.world_to_cam.rotation(r, c);
      w2c[r * 4 + 3] = cam.world_to_cam.translation[r];
    }
    w2c[15] = 1.0;
    j["world_to_cam"] = w2c;
    j["width"] = cam.width;
    j["height"] = cam.height;
    manifest["cameras"].push_back(j);
  }
  nlohmann::json sums;
  for (const auto& [name, bytes] : blobs)
    sums[name] = Sha256::hex_digest(bytes.data(), bytes.size());
  manifest["checksums"] = sums;

  for (const auto& [name, bytes] : blobs) io::write_file(dir / name, bytes);
  io::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return dir;
}

inline SceneSample read_sample(const std::filesystem::path& root, uint64_t scene_id) {
  namespace fs = std::filesystem;
  fs::path dir = root / scene_dir_name(scene_id);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    SC_THROW(LoadError, "malformed manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("schema_version", -1) != kDatasetSchemaVersion)
    SC_THROW(LoadError, "unsupported schema_version in " + dir.string());

  auto read_blob = [&](const std::string& name) {
    std::string bytes = io::read_file(dir / name);
    std::string want = manifest.at("checksums").value(name, "");
    std::string got = Sha256::hex_digest(bytes.data(), bytes.size());
    if (want != got)
      SC_THROW(LoadError, "checksum failure for " + (dir / name).string());
    return bytes;
  };

  SceneSample scene;
  try {
    scene.scene_id = manifest.at("scene_id");
    scene.seed = manifest.at("seed");
    scene.floor = detail::box_from_json(manifest.at("floor"));
    for (const auto& wj : manifest.at("walls")) scene.walls.push_back(detail::box_from_json(wj));

    for (const auto& cj : manifest.at("cameras")) {
      Camera cam;
      std::array<double, 9> k = cj.at("K");
      cam.intrinsics.m = k;
      std::array<double, 16> w2c = cj.at("world_to_cam");
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) cam.world_to_cam.rotation(r, c) = w2c[r * 4 + c];
        cam.world_to_cam.translation[r] = w2c[r * 4 + 3];
      }
      cam.width = cj.at("width");
      cam.height = cj.at("height");
      cam.validate();
      scene.cameras.push_back(cam);
    }

    for (const auto& ij : manifest.at("instances")) {
      InstanceRecord inst;
      inst.instance_id = ij.at("id");
      inst.primitive.kind = primitive_kind_from(ij.at("kind"));
      inst.primitive.params = ij.at("params").get<std::vector<double>>();
      auto bc = ij.at("base_color");
      inst.primitive.base_color = {bc[0], bc[1], bc[2]};
      inst.scale = ij.at("scale");
      inst.z_rotation = ij.at("z_rotation");
      auto tr = ij.at("translation");
      inst.translation = {tr[0], tr[1], tr[2]};
      inst.gt_box = detail::box_from_json(ij.at("gt_box"));
      size_t n = ij.at("surface_count");
      std::string blob = read_blob("inst_" + std::to_string(inst.instance_id) + "_surface.f32");
      if (blob.size() != n * 12)
        SC_THROW(LoadError, "surface blob size mismatch for instance " +
                                std::to_string(inst.instance_id));
      io::ByteReader r(blob);
      inst.gt_surface.points.resize(n);
      for (size_t i = 0; i < n; ++i) {
        inst.gt_surface.points[i].x = r.f32();
        inst.gt_surface.points[i].y = r.f32();
        inst.gt_surface.points[i].z = r.f32();
      }
      inst.gt_surface.colors.assign(n, inst.primitive.base_color);
      AABB check = compute_aabb(inst.gt_surface);
      if ((check.min_corner - inst.gt_box.min_corner).norm() > 1e-9 ||
          (check.max_corner - inst.gt_box.max_corner).norm() > 1e-9)
        SC_THROW(LoadError, "gt_box does not match surface samples for instance " +
                                std::to_string(inst.instance_id));
      scene.instances.push_back(std::move(inst));
    }
  } catch (const nlohmann::json::exception& e) {
    SC_THROW(LoadError, "manifest schema error in " + dir.string() + ": " + e.what());
  }

  for (size_t v = 0; v < scene.cameras.size(); ++v) {
    const Camera& cam = scene.cameras[v];
    std::string dname = "view_" + std::to_string(v) + "_depth.f32";
    std::string blob = read_blob(dname);
    if (blob.size() != size_t(cam.width) * cam.height * 4)
      SC_THROW(LoadError, "depth blob size mismatch: " + (dir / dname).string());
    io::ByteReader dr(blob);
    DepthRaster depth(cam.height, cam.width, 0.0);
    for (auto& px : depth.data) px = double(dr.f32());
    scene.depths.push_back(std::move(depth));

    std::string iname = "view_" + std::to_string(v) + "_instid.u16";
    std::string iblob = read_blob(iname);
    if (iblob.size() != size_t(cam.width) * cam.height * 2)
      SC_THROW(LoadError, "instance-id blob size mismatch: " + (dir / iname).string());
    io::ByteReader ir(iblob);
    IdRaster idr(cam.height, cam.width, 0);
    for (auto& px : idr.data) px = ir.u16();
    scene.ids.push_back(std::move(idr));

    std::string rname = "view_" + std::to_string(v) + "_rgb.ppm";
    if (manifest.at("checksums").contains(rname)) {
      std::string rblob = read_blob(rname);
      std::string header =
          "P6\n" + std::to_string(cam.width) + " " + std::to_string(cam.height) + "\n255\n";
      if (rblob.size() != header.size() + size_t(cam.width) * cam.height * 3 ||
          rblob.compare(0, header.size(), header) != 0)
        SC_THROW(LoadError, "bad ppm: " + (dir / rname).string());
      RgbRaster rgb(cam.height, cam.width);
      const unsigned char* p =
          reinterpret_cast<const unsigned char*>(rblob.data()) + header.size();
      for (auto& px : rgb.data) {
        px = {p[0] / 255.0, p[1] / 255.0, p[2] / 255.0};
        p += 3;
      }
      scene.rgbs.push_back(std::move(rgb));
    }
  }
  return scene;
}

}  // namespace scenecomp
