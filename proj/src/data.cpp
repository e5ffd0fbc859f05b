#include "ntkflow/data.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>

#include "ntkflow/rng.hpp"

namespace ntkflow {

namespace {

constexpr double kSyntheticParallelTol = 1e-6;
constexpr double kMnistParallelTol = 1e-9;
constexpr int kResampleRounds = 100;

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  if (off + 4 > b.size()) throw std::runtime_error("truncated idx header");
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>((v >> 24) & 0xff), static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 8) & 0xff), static_cast<char>(v & 0xff)};
  out.write(bytes, 4);
}

}  // namespace

Dataset synthetic_dataset(Index n, Index p, std::uint64_t seed, double target_scale) {
  if (n < 2 || p < 2) throw std::invalid_argument("synthetic_dataset: needs n >= 2 and p >= 2");
  if (target_scale < 0) throw std::invalid_argument("synthetic_dataset: target_scale < 0");
  Rng rng(seed);
  Dataset data;
  data.X.resize(n, p);
  data.y.resize(n);
  data.y_bound = std::max(1.0, target_scale);
  for (Index i = 0; i < n; ++i) {
    bool placed = false;
    for (int round = 0; round < kResampleRounds && !placed; ++round) {
      Vector row(p);
      for (Index j = 0; j < p; ++j) row[j] = rng.normal();
      const double norm = row.norm();
      if (norm == 0) continue;
      row /= norm;
      placed = true;
      for (Index k = 0; k < i && placed; ++k)
        if (std::abs(row.dot(data.X.row(k))) > 1.0 - kSyntheticParallelTol) placed = false;
      if (placed) data.X.row(i) = row;
    }
    if (!placed)
      throw std::runtime_error("synthetic_dataset: could not place a non-parallel row " +
                               std::to_string(i) + " in 100 rounds");
  }
  for (Index i = 0; i < n; ++i) data.y[i] = rng.uniform(-target_scale, target_scale);
  validate_dataset(data, kSyntheticParallelTol);
  return data;
}

Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path, Index n_sub,
                   std::uint64_t seed) {
  if (n_sub < 2) throw std::invalid_argument("load_mnist: needs n_sub >= 2");
  const auto img = read_all(images_path);
  const auto lab = read_all(labels_path);
  if (read_be32(img, 0) != 0x00000803u) throw std::runtime_error("bad image magic");
  if (read_be32(lab, 0) != 0x00000801u) throw std::runtime_error("bad label magic");
  const std::size_t count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  if (read_be32(lab, 4) != count) throw std::runtime_error("image/label count mismatch");
  const std::size_t pixels = rows * cols;
  if (img.size() != 16 + count * pixels) throw std::runtime_error("truncated image file");
  if (lab.size() != 8 + count) throw std::runtime_error("truncated label file");
  if (static_cast<std::size_t>(n_sub) > count)
    throw std::invalid_argument("load_mnist: n_sub exceeds the corpus size");

  // Seeded full shuffle; the accepted subsample is a prefix walk over it so
  // rejected candidates (zero norm or near-parallel) refill deterministically.
  Rng rng(seed);
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  for (std::size_t i = 0; i + 1 < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(count - i));
    std::swap(order[i], order[j]);
  }

  Dataset data;
  data.X.resize(n_sub, static_cast<Index>(pixels));
  data.y.resize(n_sub);
  data.y_bound = 1.0;
  Index taken = 0;
  for (std::size_t walk = 0; walk < count && taken < n_sub; ++walk) {
    const std::size_t idx = order[walk];
    Vector row(static_cast<Index>(pixels));
    for (std::size_t q = 0; q < pixels; ++q)
      row[static_cast<Index>(q)] = static_cast<double>(img[16 + idx * pixels + q]);
    const double norm = row.norm();
    if (norm == 0) continue;
    row /= norm;
    bool ok = true;
    for (Index k = 0; k < taken && ok; ++k)
      if (std::abs(row.dot(data.X.row(k))) > 1.0 - kMnistParallelTol) ok = false;
    if (!ok) continue;
    data.X.row(taken) = row;
    data.y[taken] = static_cast<double>(lab[8 + idx]) / 10.0;
    ++taken;
  }
  if (taken < n_sub)
    throw std::runtime_error("load_mnist: corpus exhausted before n_sub usable images");
  validate_dataset(data, kMnistParallelTol);
  return data;
}

void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::vector<std::uint8_t>>& images, int rows,
                      int cols) {
  const std::size_t pixels = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  for (const auto& im : images)
    if (im.size() != pixels)
      throw std::invalid_argument("write_idx_images: image size != rows * cols");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_be32(out, 0x00000803u);
  write_be32(out, static_cast<std::uint32_t>(images.size()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (const auto& im : images)
    out.write(reinterpret_cast<const char*>(im.data()), static_cast<std::streamsize>(im.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  write_be32(out, 0x00000801u);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace ntkflow
