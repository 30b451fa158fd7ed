#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "lgseg/types.hpp"

namespace lgseg::io {

// Netpbm images. RGB images are 8-bit binary PPM (P6) mapped to [0, 1];
// label maps are binary PGM (P5) with maxval 65535, i.e. 16-bit big-endian
// samples, which is lossless for ids in [0, 65535].
DenseMap read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const DenseMap& image);
LabelMap read_pgm_labels(const std::filesystem::path& path);
void write_pgm_labels(const std::filesystem::path& path, const LabelMap& labels);

// Dense-array container (".lgda"), little-endian:
//   char[4] magic "LGDA" | u32 version (1) | u32 dtype (1 = f64, 2 = i32)
//   u32 ndim | u64 dims[ndim] | u32 meta_len | meta bytes | payload
// Payload is row-major. Real maps are stored as (H, W, C), label maps as (H, W).
void write_dense_array(const std::filesystem::path& path, const DenseMap& map,
                       std::string_view meta = {});
DenseMap read_dense_array(const std::filesystem::path& path, std::string* meta = nullptr);
void write_label_array(const std::filesystem::path& path, const LabelMap& labels,
                       std::string_view meta = {});
LabelMap read_label_array(const std::filesystem::path& path, std::string* meta = nullptr);

/// Loads a label map from either a .pgm or a .lgda file, chosen by extension.
LabelMap read_label_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// 64-bit FNV-1a.
uint64_t fnv1a(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(uint64_t v);

/// SplitMix64 finalizer; used to derive independent stream seeds from a
/// base seed and a tuple of counters.
uint64_t mix_seed(uint64_t a, uint64_t b);
uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d = 0);

}  // namespace lgseg::io
