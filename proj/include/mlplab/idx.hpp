// Copyright 2026 The mlplab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MLPLAB_IDX_HPP
#define MLPLAB_IDX_HPP

// IDX binary reader/writer. Format: a big-endian 32-bit magic number
// (0x00000803 for unsigned-byte image tensors, 0x00000801 for label
// vectors), one big-endian 32-bit size per dimension, then the raw payload
// bytes. Files ending in ".gz" are inflated transparently.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "mlplab/dataset.hpp"
#include "mlplab/errors.hpp"

namespace mlplab {

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::vector<std::uint8_t> bytes;
  if (has_suffix(path, ".gz")) {
    gzFile gz = gzopen(path.c_str(), "rb");
    if (!gz) throw IoError("cannot open " + path);
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(gz, buf, sizeof(buf))) > 0)
      bytes.insert(bytes.end(), buf, buf + n);
    const bool ok = (n == 0);
    gzclose(gz);
    if (!ok) throw IoError("gzip read failed for " + path);
    return bytes;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  bytes.resize(static_cast<std::size_t>(len));
  if (len > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), len))
    throw IoError("read failed for " + path);
  return bytes;
}

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::string name)
      : bytes_(bytes), name_(std::move(name)) {}

  std::uint32_t read_u32_be() {
    if (pos_ + 4 > bytes_.size())
      throw IoError("truncated header in " + name_);
    std::uint32_t v = (std::uint32_t(bytes_[pos_]) << 24) |
                      (std::uint32_t(bytes_[pos_ + 1]) << 16) |
                      (std::uint32_t(bytes_[pos_ + 2]) << 8) |
                      std::uint32_t(bytes_[pos_ + 3]);
    pos_ += 4;
    return v;
  }

  const std::uint8_t* payload(std::size_t count) {
    if (pos_ + count > bytes_.size())
      throw IoError("truncated payload in " + name_ + ": expected " +
                    std::to_string(count) + " bytes, have " +
                    std::to_string(bytes_.size() - pos_));
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += count;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

/// Loads an images/labels IDX pair into a Dataset. Pixels are scaled to
/// [0,1] by /255; labels are used as 0-based class indices as stored.
inline Dataset load_idx(const std::string& images_path,
                        const std::string& labels_path) {
  const auto image_bytes = detail::read_file_bytes(images_path);
  const auto label_bytes = detail::read_file_bytes(labels_path);

  detail::ByteReader images(image_bytes, images_path);
  if (images.read_u32_be() != kIdxImagesMagic)
    throw FormatError("bad IDX magic number in " + images_path);
  const std::uint32_t item_count = images.read_u32_be();
  const std::uint32_t rows = images.read_u32_be();
  const std::uint32_t cols = images.read_u32_be();

  detail::ByteReader labels(label_bytes, labels_path);
  if (labels.read_u32_be() != kIdxLabelsMagic)
    throw FormatError("bad IDX magic number in " + labels_path);
  const std::uint32_t label_count = labels.read_u32_be();

  if (item_count != label_count)
    throw ConsistencyError("item count mismatch: " + images_path + " has " +
                           std::to_string(item_count) + " items, " +
                           labels_path + " has " + std::to_string(label_count));
  if (item_count == 0)
    throw ConsistencyError("empty dataset: " + images_path +
                           " declares 0 items");

  const std::size_t feature_dim = std::size_t(rows) * cols;
  const std::uint8_t* pixels = images.payload(item_count * feature_dim);
  const std::uint8_t* label_data = labels.payload(item_count);

  int max_label = 0;
  for (std::uint32_t i = 0; i < item_count; ++i)
    max_label = std::max(max_label, int(label_data[i]));
  const int class_count = max_label + 1;

  std::vector<Sample> samples;
  samples.reserve(item_count);
  for (std::uint32_t i = 0; i < item_count; ++i) {
    Sample s;
    s.features.resize(feature_dim);
    const std::uint8_t* px = pixels + i * feature_dim;
    for (std::size_t d = 0; d < feature_dim; ++d)
      s.features[d] = static_cast<double>(px[d]) / 255.0;
    s.label = label_data[i];
    s.one_hot = one_hot(s.label, class_count);
    samples.push_back(std::move(s));
  }
  return make_dataset(std::move(samples), class_count,
                      static_cast<int>(feature_dim));
}

/// Writes a dataset back out as an IDX pair (uncompressed). Features are
/// mapped to bytes with round(255*x), the inverse of the loader's scaling.
inline void write_idx(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path, std::uint32_t rows,
                      std::uint32_t cols) {
  if (std::size_t(rows) * cols != std::size_t(ds.feature_dim))
    throw std::invalid_argument("write_idx: rows*cols != feature_dim");

  auto put_u32_be = [](std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {char((v >> 24) & 0xff), char((v >> 16) & 0xff),
                           char((v >> 8) & 0xff), char(v & 0xff)};
    out.write(bytes, 4);
  };

  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  put_u32_be(img, kIdxImagesMagic);
  put_u32_be(img, static_cast<std::uint32_t>(ds.samples.size()));
  put_u32_be(img, rows);
  put_u32_be(img, cols);
  for (const Sample& s : ds.samples) {
    for (double f : s.features) {
      const double clamped = std::min(1.0, std::max(0.0, f));
      img.put(static_cast<char>(std::llround(clamped * 255.0)));
    }
  }
  if (!img) throw IoError("write failed for " + images_path);

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);
  put_u32_be(lab, kIdxLabelsMagic);
  put_u32_be(lab, static_cast<std::uint32_t>(ds.samples.size()));
  for (const Sample& s : ds.samples) lab.put(static_cast<char>(s.label));
  if (!lab) throw IoError("write failed for " + labels_path);
}

}  // namespace mlplab

#endif  // MLPLAB_IDX_HPP
