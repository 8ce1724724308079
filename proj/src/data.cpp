#include "condvc/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>

#include <torch/torch.h>

#include "condvc/errors.hpp"
#include "condvc/image_io.hpp"

namespace condvc {

namespace fs = std::filesystem;

std::string_view to_string(ShuffleMode mode) {
  return mode == ShuffleMode::kReverse ? "reverse" : "permute";
}

ShuffleMode parse_shuffle_mode(std::string_view name) {
  if (name == "reverse") return ShuffleMode::kReverse;
  if (name == "permute") return ShuffleMode::kPermute;
  fail(ErrorCategory::kConfig, "shuffle_mode must be 'reverse' or 'permute', got '" +
                                   std::string(name) + "'");
}

void AugmentConfig::validate() const {
  auto check = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      fail(ErrorCategory::kConfig, std::string("train.augment.") + name + " must lie in [0, 1]");
    }
  };
  check(p_hflip, "p_hflip");
  check(p_vflip, "p_vflip");
  check(p_shuffle, "p_shuffle");
}

ClipSample sample_clip(const std::function<torch::Tensor(int64_t)>& load_frame, int64_t total_frames,
                       int64_t length, int64_t crop, const AugmentConfig& aug, uint64_t seed) {
  if (length < 1 || length > total_frames) {
    fail(ErrorCategory::kData, "clip length " + std::to_string(length) + " exceeds the " +
                                   std::to_string(total_frames) + " available frames");
  }
  std::mt19937_64 rng(seed);
  ClipSample sample;
  sample.start = std::uniform_int_distribution<int64_t>(0, total_frames - length)(rng);

  std::vector<torch::Tensor> frames;
  frames.reserve(length);
  for (int64_t i = 0; i < length; ++i) frames.push_back(load_frame(sample.start + i));
  auto window = torch::stack(frames);  // [T, 3, H, W]
  const auto h = window.size(2);
  const auto w = window.size(3);
  if (crop > h || crop > w) {
    fail(ErrorCategory::kData, "crop " + std::to_string(crop) + " larger than frame " +
                                   std::to_string(w) + "x" + std::to_string(h));
  }
  sample.top = std::uniform_int_distribution<int64_t>(0, h - crop)(rng);
  sample.left = std::uniform_int_distribution<int64_t>(0, w - crop)(rng);
  using torch::indexing::Slice;
  auto clip = window.index({Slice(), Slice(), Slice(sample.top, sample.top + crop),
                            Slice(sample.left, sample.left + crop)});

  sample.hflip = std::bernoulli_distribution(aug.p_hflip)(rng);
  sample.vflip = std::bernoulli_distribution(aug.p_vflip)(rng);
  if (sample.hflip) clip = clip.flip({3});
  if (sample.vflip) clip = clip.flip({2});

  sample.order.resize(length);
  std::iota(sample.order.begin(), sample.order.end(), 0);
  if (std::bernoulli_distribution(aug.p_shuffle)(rng)) {
    if (aug.shuffle_mode == ShuffleMode::kReverse) {
      std::reverse(sample.order.begin(), sample.order.end());
    } else {
      std::shuffle(sample.order.begin(), sample.order.end(), rng);
    }
    clip = clip.index_select(0, torch::tensor(sample.order, torch::kLong));
  }
  sample.frames = clip.contiguous();
  return sample;
}

std::vector<Frame> sample_training_clip(const ClipRecord& record, int64_t length, int64_t crop,
                                        const AugmentConfig& aug, uint64_t seed) {
  auto sample = sample_clip([&](int64_t i) { return read_png(record.directory / record.frames.at(i)); },
                            record.length(), length, crop, aug, seed);
  std::vector<Frame> out;
  for (int64_t i = 0; i < sample.frames.size(0); ++i) out.push_back({sample.frames[i], FrameRole::kSource});
  return out;
}

namespace {

// Compares runs of digits by value so that frame10 sorts after frame9.
bool natural_less(const std::string& a, const std::string& b) {
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      auto na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
      nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

std::vector<std::string> list_png_frames(const fs::path& directory) {
  if (!fs::is_directory(directory)) {
    fail(ErrorCategory::kIo, "frame directory '" + directory.string() + "' does not exist");
  }
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end(), natural_less);
  return names;
}

ClipRecord scan_clip_directory(const fs::path& directory) {
  ClipRecord record{directory, list_png_frames(directory)};
  if (record.frames.empty()) {
    fail(ErrorCategory::kData, "clip directory '" + directory.string() + "' holds no PNG frames");
  }
  return record;
}

std::vector<ClipRecord> read_clip_index(const fs::path& index_file) {
  std::ifstream in(index_file);
  if (!in) fail(ErrorCategory::kIo, "cannot read dataset index '" + index_file.string() + "'");
  std::vector<ClipRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    fs::path dir(line);
    if (dir.is_relative()) dir = index_file.parent_path() / dir;
    records.push_back(scan_clip_directory(dir));
  }
  if (records.empty()) fail(ErrorCategory::kData, "dataset index '" + index_file.string() + "' is empty");
  return records;
}

std::string_view to_string(ColorMatrix matrix) { return matrix == ColorMatrix::kBt601 ? "bt601" : "bt709"; }

ColorMatrix parse_color_matrix(std::string_view name) {
  if (name == "bt601") return ColorMatrix::kBt601;
  if (name == "bt709") return ColorMatrix::kBt709;
  fail(ErrorCategory::kConfig, "color matrix must be 'bt601' or 'bt709', got '" + std::string(name) + "'");
}

std::string_view to_string(SequenceFormat format) {
  return format == SequenceFormat::kYuv420p8 ? "yuv420p8" : "png_dir";
}

SequenceFormat parse_sequence_format(std::string_view name) {
  if (name == "yuv420p8") return SequenceFormat::kYuv420p8;
  if (name == "png_dir") return SequenceFormat::kPngDir;
  fail(ErrorCategory::kConfig, "sequence format must be 'yuv420p8' or 'png_dir', got '" +
                                   std::string(name) + "'");
}

torch::Tensor yuv420_to_rgb(const uint8_t* y_plane, const uint8_t* u_plane, const uint8_t* v_plane,
                            int64_t width, int64_t height, ColorMatrix matrix) {
  // Luma/chroma weights (Kr, Kb) of the two matrices.
  const double kr = matrix == ColorMatrix::kBt601 ? 0.299 : 0.2126;
  const double kb = matrix == ColorMatrix::kBt601 ? 0.114 : 0.0722;
  const double kg = 1.0 - kr - kb;
  const double r_cr = 2.0 * (1.0 - kr);
  const double b_cb = 2.0 * (1.0 - kb);
  const double g_cb = -b_cb * kb / kg;
  const double g_cr = -r_cr * kr / kg;

  const int64_t cw = (width + 1) / 2;
  auto out = torch::empty({3, height, width}, torch::kFloat32);
  auto acc = out.accessor<float, 3>();
  for (int64_t y = 0; y < height; ++y) {
    for (int64_t x = 0; x < width; ++x) {
      const double luma = (static_cast<double>(y_plane[y * width + x]) - 16.0) / 219.0;
      const int64_t ci = (y / 2) * cw + x / 2;
      const double cb = (static_cast<double>(u_plane[ci]) - 128.0) / 224.0;
      const double cr = (static_cast<double>(v_plane[ci]) - 128.0) / 224.0;
      acc[0][y][x] = static_cast<float>(std::clamp(luma + r_cr * cr, 0.0, 1.0));
      acc[1][y][x] = static_cast<float>(std::clamp(luma + g_cb * cb + g_cr * cr, 0.0, 1.0));
      acc[2][y][x] = static_cast<float>(std::clamp(luma + b_cb * cb, 0.0, 1.0));
    }
  }
  return out;
}

VideoSequence load_test_sequence(const fs::path& path, const SequenceRequest& request) {
  if (request.n_frames < 1) fail(ErrorCategory::kConfig, "n_frames must be >= 1");
  VideoSequence video;
  video.source_id = path.stem().string();

  if (request.format == SequenceFormat::kPngDir) {
    auto names = list_png_frames(path);
    if (static_cast<int64_t>(names.size()) < request.n_frames) {
      fail(ErrorCategory::kData, "'" + path.string() + "' has only " + std::to_string(names.size()) +
                                     " frames, " + std::to_string(request.n_frames) + " requested");
    }
    for (int64_t i = 0; i < request.n_frames; ++i) video.frames.push_back({read_png(path / names[i])});
    return video;
  }

  if (request.width <= 0 || request.height <= 0) {
    fail(ErrorCategory::kUsage, "raw YUV input needs a resolution (WxH)");
  }
  if (!fs::is_regular_file(path)) fail(ErrorCategory::kIo, "cannot open '" + path.string() + "'");
  const int64_t w = request.width, h = request.height;
  const int64_t chroma = ((w + 1) / 2) * ((h + 1) / 2);
  const int64_t frame_bytes = w * h + 2 * chroma;
  const auto file_bytes = static_cast<int64_t>(fs::file_size(path));
  const int64_t available = file_bytes / frame_bytes;
  if (available < request.n_frames) {
    fail(ErrorCategory::kData, "'" + path.string() + "' holds only " + std::to_string(available) +
                                   " complete frames at " + std::to_string(w) + "x" + std::to_string(h) +
                                   ", " + std::to_string(request.n_frames) + " requested");
  }
  std::ifstream in(path, std::ios::binary);
  std::vector<uint8_t> buffer(frame_bytes);
  for (int64_t i = 0; i < request.n_frames; ++i) {
    if (!in.read(reinterpret_cast<char*>(buffer.data()), frame_bytes)) {
      fail(ErrorCategory::kIo, "short read in '" + path.string() + "'");
    }
    video.frames.push_back({yuv420_to_rgb(buffer.data(), buffer.data() + w * h,
                                          buffer.data() + w * h + chroma, w, h, request.matrix)});
  }
  return video;
}

namespace {

torch::Tensor fixed_clip(const std::function<torch::Tensor(int64_t)>& load, int64_t length, int64_t crop) {
  std::vector<torch::Tensor> frames;
  for (int64_t i = 0; i < length; ++i) frames.push_back(load(i));
  auto clip = torch::stack(frames);
  const auto top = (clip.size(2) - crop) / 2;
  const auto left = (clip.size(3) - crop) / 2;
  if (top < 0 || left < 0) fail(ErrorCategory::kData, "crop larger than frame");
  using torch::indexing::Slice;
  return clip.index({Slice(), Slice(), Slice(top, top + crop), Slice(left, left + crop)}).contiguous();
}

}  // namespace

FolderClipProvider::FolderClipProvider(std::vector<ClipRecord> records, int64_t crop, AugmentConfig aug)
    : records_(std::move(records)), crop_(crop), aug_(aug) {}

torch::Tensor FolderClipProvider::clip(size_t index, int64_t length, uint64_t seed, bool augment) const {
  const auto& record = records_.at(index);
  auto load = [&](int64_t i) { return read_png(record.directory / record.frames.at(i)); };
  if (!augment) {
    if (length > record.length()) fail(ErrorCategory::kData, "clip shorter than requested length");
    return fixed_clip(load, length, crop_);
  }
  return sample_clip(load, record.length(), length, crop_, aug_, seed).frames;
}

TensorClipProvider::TensorClipProvider(std::vector<torch::Tensor> clips, int64_t crop, AugmentConfig aug)
    : clips_(std::move(clips)), crop_(crop), aug_(aug) {}

torch::Tensor TensorClipProvider::clip(size_t index, int64_t length, uint64_t seed, bool augment) const {
  const auto& source = clips_.at(index);
  auto load = [&](int64_t i) { return source[i]; };
  if (!augment) {
    if (length > source.size(0)) fail(ErrorCategory::kData, "clip shorter than requested length");
    return fixed_clip(load, length, crop_);
  }
  return sample_clip(load, source.size(0), length, crop_, aug_, seed).frames;
}

}  // namespace condvc
