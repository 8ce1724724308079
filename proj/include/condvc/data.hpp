#pragma once

// Training-clip ingestion with random crops and clip-level augmentation, and
// test-sequence loading (raw YUV 4:2:0 or PNG frame folders).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/types.h>

#include "condvc/codec.hpp"

namespace condvc {

struct ClipRecord {
  std::filesystem::path directory;
  std::vector<std::string> frames;  // file names in temporal order

  int64_t length() const { return static_cast<int64_t>(frames.size()); }
};

enum class ShuffleMode { kReverse, kPermute };

std::string_view to_string(ShuffleMode mode);
ShuffleMode parse_shuffle_mode(std::string_view name);

struct AugmentConfig {
  double p_hflip = 0.5;
  double p_vflip = 0.5;
  double p_shuffle = 0.5;
  ShuffleMode shuffle_mode = ShuffleMode::kReverse;

  void validate() const;
  static AugmentConfig none() { return {0.0, 0.0, 0.0, ShuffleMode::kReverse}; }
};

// A sampled clip together with the random decisions that produced it.
struct ClipSample {
  torch::Tensor frames;  // [length, 3, crop, crop]
  int64_t start = 0;     // first source frame of the temporal window
  int64_t top = 0;
  int64_t left = 0;
  bool hflip = false;
  bool vflip = false;
  std::vector<int64_t> order;  // order[i] = window position shown at output position i
};

// Chooses a window of `length` consecutive frames, one crop window, flips
// and a frame-order change, all shared by every frame of the clip, and
// applies them. `load_frame(i)` returns source frame i as [3, H, W].
ClipSample sample_clip(const std::function<torch::Tensor(int64_t)>& load_frame, int64_t total_frames,
                       int64_t length, int64_t crop, const AugmentConfig& aug, uint64_t seed);

std::vector<Frame> sample_training_clip(const ClipRecord& record, int64_t length, int64_t crop,
                                        const AugmentConfig& aug, uint64_t seed);

// Index file: one clip directory per line (relative paths resolve against
// the index file's directory); blank lines and '#' comments are skipped.
std::vector<ClipRecord> read_clip_index(const std::filesystem::path& index_file);
ClipRecord scan_clip_directory(const std::filesystem::path& directory);

// PNG files of a directory, sorted so that embedded numbers compare numerically.
std::vector<std::string> list_png_frames(const std::filesystem::path& directory);

enum class ColorMatrix { kBt601, kBt709 };
std::string_view to_string(ColorMatrix matrix);
ColorMatrix parse_color_matrix(std::string_view name);

enum class SequenceFormat { kYuv420p8, kPngDir };
std::string_view to_string(SequenceFormat format);
SequenceFormat parse_sequence_format(std::string_view name);

// Limited-range YCbCr 4:2:0 (8-bit planes) to RGB in [0, 1], chroma upsampled
// by sample replication. Returns [3, height, width].
torch::Tensor yuv420_to_rgb(const uint8_t* y_plane, const uint8_t* u_plane, const uint8_t* v_plane,
                            int64_t width, int64_t height, ColorMatrix matrix);

struct SequenceRequest {
  SequenceFormat format = SequenceFormat::kPngDir;
  int64_t n_frames = 96;
  int64_t width = 0;   // required for raw YUV
  int64_t height = 0;  // required for raw YUV
  ColorMatrix matrix = ColorMatrix::kBt601;
};

// Reads the first n_frames frames. Throws Error(kData) naming the available
// frame count when the source is shorter.
VideoSequence load_test_sequence(const std::filesystem::path& path, const SequenceRequest& request);

// Source of training clips for the trainer.
class ClipProvider {
 public:
  virtual ~ClipProvider() = default;
  virtual size_t size() const = 0;
  // Clip `index` as [length, 3, crop, crop]; `augment` = false disables
  // flips/shuffle and takes the centre crop of the first window.
  virtual torch::Tensor clip(size_t index, int64_t length, uint64_t seed, bool augment) const = 0;
};

// Clips read from PNG folders.
class FolderClipProvider : public ClipProvider {
 public:
  FolderClipProvider(std::vector<ClipRecord> records, int64_t crop, AugmentConfig aug);
  size_t size() const override { return records_.size(); }
  torch::Tensor clip(size_t index, int64_t length, uint64_t seed, bool augment) const override;

 private:
  std::vector<ClipRecord> records_;
  int64_t crop_;
  AugmentConfig aug_;
};

// Clips held in memory, each [T, 3, H, W].
class TensorClipProvider : public ClipProvider {
 public:
  TensorClipProvider(std::vector<torch::Tensor> clips, int64_t crop, AugmentConfig aug);
  size_t size() const override { return clips_.size(); }
  torch::Tensor clip(size_t index, int64_t length, uint64_t seed, bool augment) const override;

 private:
  std::vector<torch::Tensor> clips_;
  int64_t crop_;
  AugmentConfig aug_;
};

}  // namespace condvc
