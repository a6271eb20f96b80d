#include "stpnet/datasets.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "stpnet/error.hpp"

namespace stpnet::data {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

class GzReader {
 public:
  explicit GzReader(const std::filesystem::path& path) : file_(gzopen(path.c_str(), "rb")), path_(path) {
    if (!file_) throw FormatError("cannot open " + path.string());
  }
  GzReader(const GzReader&) = delete;
  GzReader& operator=(const GzReader&) = delete;
  ~GzReader() { gzclose(file_); }

  void read(void* dst, std::size_t bytes) {
    auto* out = static_cast<unsigned char*>(dst);
    while (bytes > 0) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
      const int got = gzread(file_, out, chunk);
      if (got <= 0) throw FormatError("truncated IDX file " + path_.string());
      out += got;
      bytes -= static_cast<std::size_t>(got);
    }
  }

  std::uint32_t u32() {
    std::array<unsigned char, 4> b{};
    read(b.data(), 4);
    return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  }

 private:
  gzFile file_;
  std::filesystem::path path_;
};

class IdxWriter {
 public:
  explicit IdxWriter(const std::filesystem::path& path)
      : file_(gzopen(path.c_str(), path.extension() == ".gz" ? "wb9" : "wbT")) {
    if (!file_) throw FormatError("cannot write " + path.string());
  }
  IdxWriter(const IdxWriter&) = delete;
  IdxWriter& operator=(const IdxWriter&) = delete;
  ~IdxWriter() { gzclose(file_); }

  void write(const void* src, std::size_t bytes) {
    if (bytes > 0 && gzwrite(file_, src, static_cast<unsigned>(bytes)) != static_cast<int>(bytes))
      throw FormatError("IDX write failed");
  }
  void u32(std::uint32_t v) {
    const std::array<unsigned char, 4> b{static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                         static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    write(b.data(), 4);
  }

 private:
  gzFile file_;
};

BinaryState empty_image(std::size_t side) { return BinaryState(side * side, 0); }

void set_pixel(BinaryState& img, std::size_t side, long row, long col) {
  if (row >= 0 && col >= 0 && row < static_cast<long>(side) && col < static_cast<long>(side))
    img[static_cast<std::size_t>(row) * side + static_cast<std::size_t>(col)] = 1;
}

BinaryState bars_image(std::size_t side, BarsMode mode, int label, int shift) {
  const long s = static_cast<long>(side);
  BinaryState img = empty_image(side);
  if (mode == BarsMode::Easy) {
    const long m = s / 2;
    for (long t = 0; t < s; ++t) {
      for (long w = 0; w < 2; ++w) {
        if (label == 0) set_pixel(img, side, m - 1 + shift + w, t);
        if (label == 1) set_pixel(img, side, t, m - 1 + shift + w);
        if (label == 2) set_pixel(img, side, t, t + shift + w);
      }
    }
  } else {
    // Regions: rows 0..3 (horizontal), columns 0..3 below row 4 (vertical),
    // the square [4, side)^2 (diagonal). Shifts keep each stroke inside.
    for (long t = 0; t < s; ++t) {
      for (long w = 0; w < 2; ++w) {
        if (label == 0) set_pixel(img, side, 1 + shift + w, t);
        if (label == 1 && t >= 4) set_pixel(img, side, t, 1 + shift + w);
        if (label == 2 && t >= 4) {
          const long col = t + shift + w;
          if (col >= 4) set_pixel(img, side, t, col);
        }
      }
    }
  }
  return img;
}

std::vector<std::size_t> half_rows(std::size_t height, Half half) {
  std::vector<std::size_t> rows;
  const std::size_t split = height / 2;
  for (std::size_t r = 0; r < height; ++r) {
    if ((half == Half::Upper) == (r < split)) rows.push_back(r);
  }
  return rows;
}

std::vector<unsigned char> pack_bits(const BinaryState& img) {
  std::vector<unsigned char> bytes((img.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < img.size(); ++i)
    if (img[i]) bytes[i / 8] |= static_cast<unsigned char>(0x80u >> (i % 8));
  return bytes;
}

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int len = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(len));
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text, std::size_t expected) {
  if (text.size() % 4 != 0) throw FormatError("base64 block length is not a multiple of 4");
  std::vector<unsigned char> out(3 * text.size() / 4);
  const int len = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (len < 0) throw FormatError("invalid base64 block");
  // EVP_DecodeBlock keeps the zero bytes that stand for '=' padding.
  std::size_t padding = 0;
  if (!text.empty() && text.back() == '=') ++padding;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++padding;
  out.resize(static_cast<std::size_t>(len) - padding);
  if (out.size() != expected) throw FormatError("pixel block has the wrong length");
  return out;
}

}  // namespace

void ImageDataset::push(BinaryState image, int label) {
  if (image.size() != pixels()) throw DimensionError("image size differs from width * height");
  images.push_back(std::move(image));
  labels.push_back(label);
}

std::map<int, std::size_t> ImageDataset::class_counts() const {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  return counts;
}

ImageDataset ImageDataset::select(const std::vector<int>& classes) const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < size(); ++i)
    if (std::find(classes.begin(), classes.end(), labels[i]) != classes.end()) keep.push_back(i);
  return subset(keep);
}

ImageDataset ImageDataset::subset(const std::vector<std::size_t>& indices) const {
  ImageDataset out{width, height, {}, {}};
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw InvalidArgument("dataset index out of range");
    out.images.push_back(images[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

void ImageDataset::validate() const {
  if (images.size() != labels.size()) throw DimensionError("image and label counts differ");
  for (const auto& img : images) {
    if (img.size() != pixels()) throw DimensionError("image size differs from width * height");
    for (auto p : img)
      if (p > 1) throw InvalidArgument("pixels must be 0 or 1");
  }
}

static void check_bars_side(std::size_t side, BarsMode mode) {
  if (side < 6) throw InvalidArgument("bars need side >= 6");
  if (mode == BarsMode::Hard && side < 8)
    throw InvalidArgument("hard-mode bars need side >= 8 to fit three disjoint strokes");
}

BinaryState bars_template(std::size_t side, BarsMode mode, int label) {
  check_bars_side(side, mode);
  if (label < 0 || label > 2) throw InvalidArgument("bars classes are 0, 1 and 2");
  return bars_image(side, mode, label, 0);
}

ImageDataset generate_bars(std::size_t side, BarsMode mode, std::size_t n_per_class, Rng& rng) {
  check_bars_side(side, mode);
  ImageDataset d{side, side, {}, {}};
  for (int label = 0; label < 3; ++label) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      const int shift = static_cast<int>(rng.below(3)) - 1;
      d.push(bars_image(side, mode, label, shift), label);
    }
  }
  return d;
}

ImageDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  GzReader img(images);
  if (img.u32() != kImageMagic) throw FormatError("bad IDX image magic in " + images.string());
  const std::uint32_t count = img.u32();
  const std::uint32_t rows = img.u32();
  const std::uint32_t cols = img.u32();
  if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) throw FormatError("implausible IDX image shape");

  GzReader lab(labels);
  if (lab.u32() != kLabelMagic) throw FormatError("bad IDX label magic in " + labels.string());
  if (lab.u32() != count) throw FormatError("image and label counts differ");

  ImageDataset d{cols, rows, {}, {}};
  d.images.reserve(count);
  d.labels.reserve(count);
  std::vector<unsigned char> raw(static_cast<std::size_t>(rows) * cols);
  std::vector<unsigned char> label_bytes(count);
  lab.read(label_bytes.data(), label_bytes.size());
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(raw.data(), raw.size());
    BinaryState bits(raw.size());
    for (std::size_t p = 0; p < raw.size(); ++p) bits[p] = raw[p] >= 128 ? 1 : 0;
    d.images.push_back(std::move(bits));
    d.labels.push_back(label_bytes[i]);
  }
  return d;
}

void write_mnist_idx(const ImageDataset& dataset, const std::filesystem::path& images,
                     const std::filesystem::path& labels) {
  dataset.validate();
  IdxWriter img(images);
  img.u32(kImageMagic);
  img.u32(static_cast<std::uint32_t>(dataset.size()));
  img.u32(static_cast<std::uint32_t>(dataset.height));
  img.u32(static_cast<std::uint32_t>(dataset.width));
  std::vector<unsigned char> raw(dataset.pixels());
  for (const auto& bits : dataset.images) {
    for (std::size_t p = 0; p < raw.size(); ++p) raw[p] = bits[p] ? 255 : 0;
    img.write(raw.data(), raw.size());
  }
  IdxWriter lab(labels);
  lab.u32(kLabelMagic);
  lab.u32(static_cast<std::uint32_t>(dataset.size()));
  for (int l : dataset.labels) {
    if (l < 0 || l > 255) throw InvalidArgument("IDX labels must lie in 0..255");
    const auto b = static_cast<unsigned char>(l);
    lab.write(&b, 1);
  }
}

ImageDataset make_imbalanced(const ImageDataset& dataset, const std::map<int, std::size_t>& class_counts, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
  std::vector<std::size_t> chosen;
  for (const auto& [label, want] : class_counts) {
    auto& pool = by_class[label];
    if (pool.size() < want) {
      throw InvalidArgument("class " + std::to_string(label) + " has " + std::to_string(pool.size()) +
                            " items, " + std::to_string(want) + " requested");
    }
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::shuffle(chosen.begin(), chosen.end(), rng.engine());
  return dataset.subset(chosen);
}

std::pair<ImageDataset, ImageDataset> shuffle_split(const ImageDataset& dataset, std::size_t first_count, Rng& rng) {
  if (first_count > dataset.size()) throw InvalidArgument("split larger than the dataset");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  const auto mid = order.begin() + static_cast<std::ptrdiff_t>(first_count);
  return {dataset.subset({order.begin(), mid}), dataset.subset({mid, order.end()})};
}

ImageDataset relabel(const ImageDataset& dataset, const std::vector<int>& classes) {
  ImageDataset out{dataset.width, dataset.height, {}, {}};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto it = std::find(classes.begin(), classes.end(), dataset.labels[i]);
    if (it == classes.end()) continue;
    out.images.push_back(dataset.images[i]);
    out.labels.push_back(static_cast<int>(it - classes.begin()));
  }
  return out;
}

ClampMask half_clamp_mask(std::size_t width, std::size_t height, Half half, const BinaryState& reference) {
  if (reference.size() != width * height) throw DimensionError("reference image size differs from width * height");
  ClampMask mask(width * height, Clamp::Free);
  for (std::size_t r : half_rows(height, half)) {
    for (std::size_t c = 0; c < width; ++c) {
      const std::size_t p = r * width + c;
      mask[p] = reference[p] ? Clamp::On : Clamp::Off;
    }
  }
  return mask;
}

std::size_t ambiguous_exemplar(const ImageDataset& dataset, int from_class, int towards_class, Half half) {
  std::vector<std::size_t> pixels;
  for (std::size_t r : half_rows(dataset.height, half))
    for (std::size_t c = 0; c < dataset.width; ++c) pixels.push_back(r * dataset.width + c);

  std::vector<double> mean(pixels.size(), 0.0);
  std::size_t towards = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] != towards_class) continue;
    ++towards;
    for (std::size_t k = 0; k < pixels.size(); ++k) mean[k] += dataset.images[i][pixels[k]];
  }
  if (towards == 0) throw InvalidArgument("no items of class " + std::to_string(towards_class));
  for (auto& m : mean) m /= static_cast<double>(towards);

  std::optional<std::size_t> best;
  double best_distance = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.labels[i] != from_class) continue;
    double d = 0;
    for (std::size_t k = 0; k < pixels.size(); ++k) {
      const double diff = dataset.images[i][pixels[k]] - mean[k];
      d += diff * diff;
    }
    if (!best || d < best_distance) {
      best = i;
      best_distance = d;
    }
  }
  if (!best) throw InvalidArgument("no items of class " + std::to_string(from_class));
  return *best;
}

void write_dataset(std::ostream& out, const ImageDataset& dataset) {
  dataset.validate();
  out << "stpnet-dataset 1\nwidth " << dataset.width << "\nheight " << dataset.height << "\nitems " << dataset.size()
      << '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i)
    out << dataset.labels[i] << ' ' << base64_encode(pack_bits(dataset.images[i])) << '\n';
}

ImageDataset read_dataset(std::istream& in) {
  auto expect_key = [&](const std::string& key) {
    std::string word;
    std::size_t value = 0;
    if (!(in >> word >> value) || word != key) throw FormatError("dataset header: expected '" + key + "'");
    return value;
  };
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "stpnet-dataset" || version != 1)
    throw FormatError("not an stpnet-dataset version 1 container");
  ImageDataset d;
  d.width = expect_key("width");
  d.height = expect_key("height");
  const std::size_t items = expect_key("items");
  const std::size_t bytes = (d.pixels() + 7) / 8;
  for (std::size_t i = 0; i < items; ++i) {
    int label = 0;
    std::string block;
    if (!(in >> label >> block)) throw FormatError("dataset truncated at item " + std::to_string(i));
    const auto packed = base64_decode(block, bytes);
    BinaryState img(d.pixels());
    for (std::size_t p = 0; p < img.size(); ++p) img[p] = (packed[p / 8] >> (7 - p % 8)) & 1u;
    d.push(std::move(img), label);
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const ImageDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  write_dataset(out, dataset);
}

ImageDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_dataset(in);
}

}  // namespace stpnet::data
