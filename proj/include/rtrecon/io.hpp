#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtrecon/coilcomp.hpp"
#include "rtrecon/enhancer.hpp"
#include "rtrecon/grappa.hpp"
#include "rtrecon/grid.hpp"
#include "rtrecon/metrics.hpp"
#include "rtrecon/sampling.hpp"

namespace rtrecon {

inline constexpr const char* kToolVersion = "1.0.0";

// Grid files are a text header at `path` plus a raw little-endian payload at
// `path + ".raw"` (basename recorded in the header, resolved relative to the
// header). Default dtype is float64/complex128 so round trips are bit-exact;
// float32/complex64 payloads are accepted on read.
void write_grid(const KSpaceGrid& grid, const std::string& path);
void write_grid(const CoilImageStack& images, const std::string& path);
void write_image(const RealImage& image, const std::string& path);
void write_tensor(const Tensor& tensor, const std::string& path);  // [channels][rows][cols]
KSpaceGrid read_kspace(const std::string& path);
CoilImageStack read_coil_images(const std::string& path);
RealImage read_image(const std::string& path);
Tensor read_tensor(const std::string& path);

// Text mask file: profile, seed, line count, and the 0/1 acquisition string.
void write_mask(const SamplingMask& mask, const std::string& path);
SamplingMask read_mask(const std::string& path);

// GRAPPA kernel sets and compression matrices use the same header+payload
// scheme with complex128 payloads.
void write_kernels(const GrappaKernelSet& kernels, const std::string& path);
GrappaKernelSet read_kernels(const std::string& path);
void write_compression(const CompressionMatrix& m, const std::string& path);
CompressionMatrix read_compression(const std::string& path);

// Network snapshot: config, normalization scales, and every named tensor
// (including running statistics) as a float64 payload in parameters() order.
void save_weights(const Enhancer& net, const NormalizationScales& scales,
                  const std::string& path);
std::pair<Enhancer, NormalizationScales> load_weights(const std::string& path);

// 16-bit grayscale PNG with linear windowing; the default window is the image
// min/max. A degenerate window maps everything to mid-gray. Import returns
// values scaled to [0, 1] and accepts only files this exporter writes.
void export_png(const RealImage& image, const std::string& path,
                std::optional<double> window_min = std::nullopt,
                std::optional<double> window_max = std::nullopt);
RealImage import_png_gray16(const std::string& path);

// Metric reports: CSV plus JSON with a fixed column order and mean/std rows
// appended. Numbers carry 6 significant digits; +infinite PSNR serializes as
// "inf" and an absent Hausdorff distance as an empty cell / JSON null.
struct ReportRow {
  std::string label;
  SliceMetrics metrics;
};

void emit_report(const std::vector<ReportRow>& rows, const std::string& csv_path,
                 const std::string& json_path);

std::string format_number(double v, int significant_digits = 6);

// FNV-1a 64-bit, lower-case hex.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 14695981039346656037ULL);
std::string checksum_bytes(const std::string& bytes);
std::string checksum_file(const std::string& path);

// Flat key=value configuration text. '#' starts a comment, blank lines are
// skipped, keys must be unique. The canonical form is sorted key=value lines
// and round-trips bit-exactly.
using KeyValueConfig = std::map<std::string, std::string>;

KeyValueConfig parse_config_text(const std::string& text);
KeyValueConfig read_config(const std::string& path);
std::string config_text(const KeyValueConfig& config);
void write_config(const KeyValueConfig& config, const std::string& path);

// Run manifest: tool version, config hash, every recorded seed/value, and all
// output files with checksums. Written to a temp file then renamed so readers
// never observe a partial manifest.
struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> values;  // insertion order
  std::vector<std::pair<std::string, std::string>> files;   // path -> checksum

  void add_value(const std::string& key, const std::string& value);
  void add_file(const std::string& path);  // checksums the file on disk
};

void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

// Whole-file helpers shared by the formats above.
std::string read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::string& bytes);

}  // namespace rtrecon
