#pragma once

#include <map>
#include <string>
#include <vector>

#include "ddwm/metrics.hpp"
#include "ddwm/param_store.hpp"
#include "ddwm/render.hpp"
#include "ddwm/tokens.hpp"

namespace ddwm {

// Tensor archive: <path> holds the raw little-endian float64 buffer; the
// sidecar <path>.json holds the manifest (tensor names, shapes, dtype, byte
// offsets) plus free-form string metadata (rng state, iteration, config hash).
void save_tensor_archive(const std::string& path, const ParamStore& store,
                         const std::map<std::string, std::string>& meta = {});

// Loads values (and metadata) back. If the store already holds tensors, its
// manifest must match the archive's exactly; an empty store is rebuilt from
// the manifest.
void load_tensor_archive(const std::string& path, ParamStore* store,
                         std::map<std::string, std::string>* meta = nullptr);

// Point cloud: <path> holds packed little-endian float32 xyz triples; the
// sidecar <path>.json holds {format, count, extents {lo, hi}, meta}.
void save_point_cloud(const std::string& path, const PointCloud& points,
                      const std::map<std::string, std::string>& meta = {});
PointCloud load_point_cloud(const std::string& path,
                            std::map<std::string, std::string>* meta = nullptr);

// Rays: packed little-endian float32 records (origin xyz, direction xyz,
// ground-truth depth) with the same sidecar shape. Every ray must carry a
// ground-truth depth; sample depths are not stored.
void save_rays(const std::string& path, const std::vector<Ray>& rays,
               const std::map<std::string, std::string>& meta = {});
std::vector<Ray> load_rays(const std::string& path,
                           std::map<std::string, std::string>* meta = nullptr);

// Episode as JSON: grid shape, vocabulary, per-frame token arrays and the
// aligned action list, plus free-form string metadata.
void save_trajectory(const std::string& path, const Trajectory& traj,
                     const std::map<std::string, std::string>& meta = {});
Trajectory load_trajectory(const std::string& path,
                           std::map<std::string, std::string>* meta = nullptr);

}  // namespace ddwm
