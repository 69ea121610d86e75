#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include "ddwm/io.hpp"
#include "ddwm/rng.hpp"
#include "ddwm/toy_env.hpp"

using namespace ddwm;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() {
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
  }
};

}  // namespace

TEST_CASE("point cloud round trip with metadata and extents") {
  Rng rng(7);
  PointCloud points;
  for (int i = 0; i < 100; ++i) {
    points.push_back({rng.uniform() * 100.0 - 50.0, rng.uniform() * 100.0 - 50.0,
                      rng.uniform() * 10.0 - 5.0});
  }
  TempFile f("test_io_cloud.bin");
  const std::map<std::string, std::string> meta{{"config_hash", "deadbeef01234567"},
                                                {"seed", "7"}};
  save_point_cloud(f.path, points, meta);

  std::map<std::string, std::string> got_meta;
  PointCloud loaded = load_point_cloud(f.path, &got_meta);
  REQUIRE(loaded.size() == points.size());
  for (size_t i = 0; i < points.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      CHECK(loaded[i][a] == double(float(points[i][a])));  // exact f32 quantization
    }
  }
  CHECK(got_meta == meta);

  // the sidecar advertises count and the double-precision bounding box
  std::ifstream side(f.path + ".json");
  std::string text((std::istreambuf_iterator<char>(side)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"count\": 100") != std::string::npos);
  CHECK(text.find("\"extents\"") != std::string::npos);
  CHECK(text.find("\"lo\"") != std::string::npos);
  CHECK(text.find("\"hi\"") != std::string::npos);
}

TEST_CASE("empty point cloud round trip") {
  TempFile f("test_io_cloud_empty.bin");
  save_point_cloud(f.path, {});
  CHECK(load_point_cloud(f.path).empty());
}

TEST_CASE("saving twice produces identical bytes") {
  PointCloud points{{1.5, -2.25, 3.0}, {0.0, 7.0, -1.0}};
  TempFile f1("test_io_cloud_a.bin");
  TempFile f2("test_io_cloud_b.bin");
  save_point_cloud(f1.path, points, {{"seed", "0"}});
  save_point_cloud(f2.path, points, {{"seed", "0"}});
  for (const char* suffix : {"", ".json"}) {
    std::ifstream a(f1.path + suffix, std::ios::binary);
    std::ifstream b(f2.path + suffix, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}

TEST_CASE("ray set round trip renormalizes directions") {
  Rng rng(3);
  std::vector<Ray> rays;
  for (int i = 0; i < 25; ++i) {
    Ray r;
    double n2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      r.origin[a] = rng.uniform() * 4.0 - 2.0;
      r.dir[a] = rng.uniform() * 2.0 - 1.0;
      n2 += r.dir[a] * r.dir[a];
    }
    for (int a = 0; a < 3; ++a) r.dir[a] /= std::sqrt(n2);
    r.gt_depth = 0.5 + rng.uniform() * 3.0;
    rays.push_back(r);
  }
  TempFile f("test_io_rays.bin");
  save_rays(f.path, rays, {{"seed", "3"}});

  std::map<std::string, std::string> meta;
  std::vector<Ray> loaded = load_rays(f.path, &meta);
  REQUIRE(loaded.size() == rays.size());
  CHECK(meta.at("seed") == "3");
  for (size_t i = 0; i < rays.size(); ++i) {
    double n2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      CHECK(loaded[i].origin[a] == double(float(rays[i].origin[a])));
      CHECK(loaded[i].dir[a] == doctest::Approx(rays[i].dir[a]).epsilon(1e-6));
      n2 += loaded[i].dir[a] * loaded[i].dir[a];
    }
    CHECK(std::abs(n2 - 1.0) < 1e-12);  // unit after the f32 round trip
    REQUIRE(loaded[i].gt_depth.has_value());
    CHECK(*loaded[i].gt_depth == double(float(*rays[i].gt_depth)));
    loaded[i].samples = {1.0};
    loaded[i].validate();
  }
}

TEST_CASE("rays without ground truth are rejected") {
  std::vector<Ray> rays(3);
  rays[0].gt_depth = 1.0;
  rays[1].gt_depth = 2.0;
  TempFile f("test_io_rays_bad.bin");
  CHECK_THROWS_WITH_AS(save_rays(f.path, rays),
                       "save_rays: ray 2 has no ground-truth depth", std::invalid_argument);
}

TEST_CASE("truncated binary payload is detected") {
  PointCloud points{{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}};
  TempFile f("test_io_trunc.bin");
  save_point_cloud(f.path, points);
  {
    std::ofstream cut(f.path, std::ios::binary | std::ios::trunc);
    cut << "xx";
  }
  CHECK_THROWS_WITH_AS(load_point_cloud(f.path),
                       "load: truncated data in test_io_trunc.bin", std::runtime_error);
}

TEST_CASE("format tags keep clouds and rays apart") {
  TempFile f("test_io_tag.bin");
  save_point_cloud(f.path, {{1.0, 2.0, 3.0}});
  CHECK_THROWS_WITH_AS(load_rays(f.path),
                       "load: unexpected format in test_io_tag.bin.json", std::runtime_error);
}

TEST_CASE("trajectory json round trip") {
  ToyDynamicsConfig cfg;
  Rng rng(11);
  Trajectory traj = generate_episode(cfg, rng);
  TempFile f("test_io_traj.json");
  // TempFile also removes path+".json"; harmless extra remove for a json path
  save_trajectory(f.path, traj, {{"config_hash", "0123456789abcdef"}, {"seed", "11"}});

  std::map<std::string, std::string> meta;
  Trajectory loaded = load_trajectory(f.path, &meta);
  REQUIRE(loaded.length() == traj.length());
  CHECK(meta.at("config_hash") == "0123456789abcdef");
  CHECK(meta.at("seed") == "11");
  for (size_t t = 0; t < traj.length(); ++t) {
    CHECK(loaded.frames[t].rows == traj.frames[t].rows);
    CHECK(loaded.frames[t].cols == traj.frames[t].cols);
    CHECK(loaded.frames[t].vocab.m == traj.frames[t].vocab.m);
    CHECK(loaded.frames[t].tokens == traj.frames[t].tokens);
    CHECK(loaded.actions[t] == traj.actions[t]);  // doubles survive json exactly
  }
}

TEST_CASE("empty trajectory is rejected") {
  TempFile f("test_io_traj_bad.json");
  CHECK_THROWS_AS(save_trajectory(f.path, Trajectory{}), std::exception);
}
