#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dear/synthvid.hpp"

namespace dear::synthvid {

enum class Split { kTrain, kVal };

struct ManifestLine {
  ManifestRecord record;
  Split split = Split::kTrain;
};

// One record per line: class_id<TAB>seed<TAB>split, split in {train, val}.
std::string format_manifest(const DatasetSplit& split);
DatasetSplit parse_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const DatasetSplit& split);
DatasetSplit read_manifest(const std::filesystem::path& path);

inline constexpr char kClipMagic[8] = {'D', 'E', 'A', 'R', 'C', 'L', 'I', 'P'};
inline constexpr std::uint32_t kClipVersion = 1;

// Flat binary clip cache: magic, version u32, T/H/W u32, label u32, seed u64,
// then rgb and depth as little-endian f32, row-major.
std::string encode_clip(const VideoClip& clip);
VideoClip decode_clip(const std::string& bytes);
void write_clip_cache(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip_cache(const std::filesystem::path& path);

}  // namespace dear::synthvid
