#include "dear/dataset_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dear/binary_io.hpp"
#include "dear/errors.hpp"

namespace dear {
namespace binio {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace binio

namespace synthvid {

std::string format_manifest(const DatasetSplit& split) {
  std::ostringstream os;
  for (const auto& r : split.train) os << r.class_id << '\t' << r.seed << "\ttrain\n";
  for (const auto& r : split.val) os << r.class_id << '\t' << r.seed << "\tval\n";
  return os.str();
}

namespace {

// Whole-string unsigned decimal; rejects signs, blanks and overflow.
template <typename T>
bool parse_unsigned(const std::string& text, T& out) {
  const char* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, out);
  return !text.empty() && res.ec == std::errc() && res.ptr == end;
}

}  // namespace

DatasetSplit parse_manifest(const std::string& text) {
  DatasetSplit split;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string cls, seed, which, extra;
    if (!std::getline(fields, cls, '\t') || !std::getline(fields, seed, '\t') ||
        !std::getline(fields, which, '\t') || std::getline(fields, extra, '\t')) {
      throw FormatError("manifest line " + std::to_string(lineno) +
                        ": expected class_id<TAB>seed<TAB>split");
    }
    ManifestRecord rec;
    if (!parse_unsigned(cls, rec.class_id) || !parse_unsigned(seed, rec.seed)) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": bad number");
    }
    if (which == "train") {
      split.train.push_back(rec);
    } else if (which == "val") {
      split.val.push_back(rec);
    } else {
      throw FormatError("manifest line " + std::to_string(lineno) + ": unknown split '" +
                        which + "'");
    }
  }
  return split;
}

void write_manifest(const std::filesystem::path& path, const DatasetSplit& split) {
  binio::write_file(path, format_manifest(split));
}

DatasetSplit read_manifest(const std::filesystem::path& path) {
  return parse_manifest(binio::read_file(path));
}

std::string encode_clip(const VideoClip& clip) {
  const std::size_t n = static_cast<std::size_t>(clip.frames) * clip.pixels_per_frame();
  if (clip.rgb.size() != n * 3 || clip.depth.size() != n) {
    throw ShapeError("encode_clip: buffers do not match T x H x W");
  }
  std::string out(kClipMagic, sizeof kClipMagic);
  binio::put(out, kClipVersion);
  binio::put(out, clip.frames);
  binio::put(out, clip.height);
  binio::put(out, clip.width);
  binio::put(out, clip.label);
  binio::put(out, clip.seed);
  for (float v : clip.rgb) binio::put(out, v);
  for (float v : clip.depth) binio::put(out, v);
  return out;
}

VideoClip decode_clip(const std::string& bytes) {
  binio::Reader in(bytes);
  if (std::string_view(in.take(sizeof kClipMagic), sizeof kClipMagic) !=
      std::string_view(kClipMagic, sizeof kClipMagic)) {
    throw FormatError("clip cache: bad magic");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kClipVersion) {
    throw FormatError("clip cache: unsupported version " + std::to_string(version));
  }
  VideoClip clip;
  clip.frames = in.get<std::uint32_t>();
  clip.height = in.get<std::uint32_t>();
  clip.width = in.get<std::uint32_t>();
  clip.label = in.get<std::uint32_t>();
  clip.seed = in.get<std::uint64_t>();
  const std::size_t n = static_cast<std::size_t>(clip.frames) * clip.pixels_per_frame();
  if (in.remaining() != n * 4 * sizeof(float)) {
    throw FormatError("clip cache: payload size does not match header");
  }
  clip.rgb.resize(n * 3);
  clip.depth.resize(n);
  for (float& v : clip.rgb) v = in.get<float>();
  for (float& v : clip.depth) v = in.get<float>();
  return clip;
}

void write_clip_cache(const std::filesystem::path& path, const VideoClip& clip) {
  binio::write_file(path, encode_clip(clip));
}

VideoClip read_clip_cache(const std::filesystem::path& path) {
  return decode_clip(binio::read_file(path));
}

}  // namespace synthvid
}  // namespace dear
