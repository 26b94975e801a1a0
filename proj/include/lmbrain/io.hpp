#pragma once

#include "lmbrain/types.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lmbrain {

/// HFM1 binary matrix layout (all little-endian):
///   bytes 0..3   magic "HFM1"
///   bytes 4..7   uint32 rows
///   bytes 8..11  uint32 cols
///   bytes 12..   rows*cols float32, row-major
inline constexpr char kHfmMagic[4] = {'H', 'F', 'M', '1'};
inline constexpr std::size_t kHfmHeaderBytes = 12;

std::vector<std::byte> encode_hfm(const Matrix& m);
Matrix decode_hfm(std::span<const std::byte> bytes);

// Loads HFM1 when the file starts with the magic, CSV otherwise.
Matrix load_matrix(const std::filesystem::path& path);
void store_matrix(const Matrix& m, const std::filesystem::path& path);

// CSV: comma separated, optional non-numeric header row, '#' lines skipped.
Matrix load_csv_matrix(const std::filesystem::path& path);
void store_csv_matrix(const Matrix& m, const std::filesystem::path& path,
                      const std::string& comment = {});

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct TokenTimeline {
  std::vector<double> token_times;  // seconds, nondecreasing
  double tr_seconds = 1.5;

  void validate() const;
};

// {"tr_seconds": 1.5, "token_times": [...]}
TokenTimeline parse_timeline_json(const std::string& text);
TokenTimeline load_timeline(const std::filesystem::path& path);
std::string timeline_to_json(const TokenTimeline& tl);

struct RoiLabel {
  std::int64_t voxel_index;
  std::string roi;
};

// Rows of "voxel_index,roi_label"; header optional.
std::vector<RoiLabel> load_roi_labels(const std::filesystem::path& path);
void store_roi_labels(const std::vector<RoiLabel>& labels, const std::filesystem::path& path,
                      const std::string& comment = {});

}  // namespace lmbrain
