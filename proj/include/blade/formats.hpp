#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "blade/apps.hpp"
#include "blade/net.hpp"
#include "blade/refsolve.hpp"
#include "blade/train.hpp"

namespace blade {

using Json = nlohmann::ordered_json;

// ---- filter banks ----------------------------------------------------------
//
// Little-endian layout:
//   "BLADEFB1"  u32 version(1)  u32 fp_w  u32 fp_h
//   u32 feature_kinds (0 structure tensor, 1 structure tensor + intensity)
//   u32 orientation_bins
//   u32 n_s, f64[n_s] strength thresholds
//   u32 n_c, f64[n_c] coherence thresholds
//   u32 n_i, f64[n_i] intensity thresholds
//   f64 rho  u32 num_filters  f32[num_filters * fp_w * fp_h] taps

inline constexpr std::uint32_t kBankVersion = 1;

std::vector<std::uint8_t> encode_bank(const FilterBank& bank);
FilterBank decode_bank(const std::vector<std::uint8_t>& bytes);
void write_bank(const std::filesystem::path& path, const FilterBank& bank);
FilterBank read_bank(const std::filesystem::path& path);

// ---- flow fields -----------------------------------------------------------
//
// "BLFLOW01"  u32 width  u32 height  f32 vx plane  f32 vy plane (row-major).

void write_flow(const std::filesystem::path& path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& path);

// ---- frame sequences -------------------------------------------------------

struct SequenceMeta {
  Json info = Json::object();  // pde, parameters, source, ...
  double peak = 255.0;
};

/// frame_0000.png ... as 16-bit PNG on [0, peak] plus meta.json.
void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq,
                    const SequenceMeta& meta);
FrameSequence read_sequence(const std::filesystem::path& dir, SequenceMeta* meta = nullptr);

Json scheme_to_json(const SchemeConfig& cfg);
SchemeConfig scheme_from_json(const Json& j);

// ---- manifests and logs ----------------------------------------------------

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// JSON record of one run: command, parameters, seeds, input hashes,
/// outputs and metrics.
class RunManifest {
 public:
  explicit RunManifest(std::string command);

  Json& parameters() { return doc_["parameters"]; }
  Json& metrics() { return doc_["metrics"]; }
  void set_seed(std::uint64_t seed);
  void add_input(const std::filesystem::path& path);
  void add_output(const std::filesystem::path& path);
  const Json& json() const { return doc_; }
  void write(const std::filesystem::path& path) const;

 private:
  Json doc_;
};

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

/// "iteration,loss" rows.
void write_loss_csv(const std::filesystem::path& path, const std::vector<LossPoint>& curve);

}  // namespace blade
