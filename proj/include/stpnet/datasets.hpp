#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "stpnet/clamp.hpp"
#include "stpnet/rng.hpp"
#include "stpnet/trace.hpp"

namespace stpnet::data {

inline constexpr int kNoLabel = -1;

/// Binary images stored row-major, one byte per pixel.
struct ImageDataset {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<BinaryState> images;
  std::vector<int> labels;  ///< kNoLabel for unlabeled items

  std::size_t size() const { return images.size(); }
  std::size_t pixels() const { return width * height; }
  void push(BinaryState image, int label = kNoLabel);
  std::map<int, std::size_t> class_counts() const;
  /// Items whose label is in `classes`, in their original order.
  ImageDataset select(const std::vector<int>& classes) const;
  ImageDataset subset(const std::vector<std::size_t>& indices) const;
  /// Throws unless every image has width * height pixels in {0, 1}.
  void validate() const;

  friend bool operator==(const ImageDataset&, const ImageDataset&) = default;
};

enum class BarsMode { Easy, Hard };

/// Three classes of width-2 strokes (0 horizontal, 1 vertical, 2 diagonal),
/// each image shifted by -1, 0 or +1 pixel across its stroke. In easy mode
/// all strokes cross the image centre; in hard mode each class lives in its
/// own region, so no two images of different classes share a pixel. Needs
/// side >= 6 (easy) or side >= 8 (hard).
ImageDataset generate_bars(std::size_t side, BarsMode mode, std::size_t n_per_class, Rng& rng);

/// Unshifted stroke of one class.
BinaryState bars_template(std::size_t side, BarsMode mode, int label);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801);
/// gzip-compressed files are accepted transparently. Pixels are binarized at
/// half the maximal intensity: p >= 128 becomes 1.
ImageDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Writes 8-bit IDX files (pixel values 0 / 255). Compressed when the path
/// ends in ".gz".
void write_mnist_idx(const ImageDataset& dataset, const std::filesystem::path& images,
                     const std::filesystem::path& labels);

/// Class-stratified sample without replacement, returned in shuffled order.
ImageDataset make_imbalanced(const ImageDataset& dataset, const std::map<int, std::size_t>& class_counts, Rng& rng);

/// Seeded shuffle, then the first `first_count` items and the rest.
std::pair<ImageDataset, ImageDataset> shuffle_split(const ImageDataset& dataset, std::size_t first_count, Rng& rng);

/// Maps label classes[i] to i; items with other labels are dropped.
ImageDataset relabel(const ImageDataset& dataset, const std::vector<int>& classes);

enum class Half { Lower, Upper };

/// Pixels of the chosen half clamped to the reference image; the rest free.
/// For odd heights the middle row belongs to the lower half.
ClampMask half_clamp_mask(std::size_t width, std::size_t height, Half half, const BinaryState& reference);

/// Index of the item of class `from_class` whose `half` is closest (squared
/// distance) to the mean `half` of class `towards_class`: the most ambiguous
/// exemplar for a half-image completion task.
std::size_t ambiguous_exemplar(const ImageDataset& dataset, int from_class, int towards_class, Half half);

/// Line-oriented text container:
///   stpnet-dataset 1
///   width W
///   height H
///   items N
///   <label> <base64 of the row-major pixel bits, MSB first>   (N lines)
void write_dataset(std::ostream& out, const ImageDataset& dataset);
ImageDataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const ImageDataset& dataset);
ImageDataset load_dataset(const std::filesystem::path& path);

}  // namespace stpnet::data
