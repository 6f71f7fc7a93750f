// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ld3m/distill.hpp"
#include "ld3m/models.hpp"

namespace ld3m {

using json = nlohmann::json;

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

/// Container layout shared by every binary artifact:
///   magic (4 bytes) | version u16 LE | metadata length u32 LE | JSON | payload
struct Container {
  std::uint16_t version = 0;
  json meta;
  std::string payload;
};

std::string encode_container(const char magic[4], std::uint16_t version, const json& meta, const std::string& payload);
Container decode_container(const std::string& bytes, const char magic[4], const std::string& what);

// Distilled set: Z then c as f32 LE, row-major, then labels as u16 LE.
constexpr std::uint16_t kSetVersion = 1;
std::string encode_distilled_set(const DistilledSet& ds, const json& extra_meta);
DistilledSet decode_distilled_set(const std::string& bytes, json* meta = nullptr);
void save_distilled_set(const std::string& path, const DistilledSet& ds, const json& extra_meta);
DistilledSet load_distilled_set(const std::string& path, json* meta = nullptr);

// Bundle and expert buffers keep full f64 precision.
void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);
void save_experts(const std::string& path, const ExpertBuffer& buffer);
ExpertBuffer load_experts(const std::string& path);

// 8-bit binary PGM (P5) of one side x side image with values clamped to [0, 1].
std::string encode_pgm(std::span<const double> pixels, std::size_t side);

// Shortest decimal that round-trips the double.
std::string format_double(double v);

}  // namespace ld3m
