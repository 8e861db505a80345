#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <vector>

#include "flymaster/error.hpp"
#include "flymaster/fl_core.hpp"

namespace flymaster {

// IDX container: big-endian u32 magic, u32 dimension sizes, then u8 payload.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                               const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw Error(ErrorKind::TruncatedFile, path.string() + ": header truncated");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> bytes = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(bytes.data(), bytes.size());
}

}  // namespace detail

/// Reads an image/label IDX pair. Pixels are scaled by 1/255.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = detail::read_all(images_path);
  const auto labels = detail::read_all(labels_path);

  if (detail::read_be32(images, 0, images_path) != kIdxImageMagic) {
    throw Error(ErrorKind::BadMagic, images_path.string() + ": not an IDX image file");
  }
  if (detail::read_be32(labels, 0, labels_path) != kIdxLabelMagic) {
    throw Error(ErrorKind::BadMagic, labels_path.string() + ": not an IDX label file");
  }
  const std::size_t count = detail::read_be32(images, 4, images_path);
  const std::size_t rows = detail::read_be32(images, 8, images_path);
  const std::size_t cols = detail::read_be32(images, 12, images_path);
  const std::size_t label_count = detail::read_be32(labels, 4, labels_path);
  if (count != label_count) {
    throw Error(ErrorKind::CountMismatch, std::to_string(count) + " images vs " + std::to_string(label_count) + " labels");
  }
  const std::size_t dim = rows * cols;
  if (images.size() < 16 + count * dim) throw Error(ErrorKind::TruncatedFile, images_path.string() + ": pixel data truncated");
  if (labels.size() < 8 + count) throw Error(ErrorKind::TruncatedFile, labels_path.string() + ": label data truncated");

  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  out.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(images[16 + i * dim + j]) / 255.0;
    }
    out.labels[i] = labels[8 + i];
  }
  return out;
}

/// Writes `data` as an IDX pair with rows x cols images. Features are mapped
/// back to bytes with round(v * 255).
inline void write_idx(const Dataset& data, std::size_t rows, std::size_t cols,
                      const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  if (rows * cols != data.dim()) throw Error(ErrorKind::DimensionMismatch, "rows*cols must equal feature dim");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw Error(ErrorKind::Io, "cannot write IDX files");
  detail::write_be32(img, kIdxImageMagic);
  detail::write_be32(img, static_cast<std::uint32_t>(data.size()));
  detail::write_be32(img, static_cast<std::uint32_t>(rows));
  detail::write_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < data.features.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.features.cols(); ++j) {
      const double v = std::clamp(data.features(i, j), 0.0, 1.0);
      img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
  detail::write_be32(lab, kIdxLabelMagic);
  detail::write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

}  // namespace flymaster
