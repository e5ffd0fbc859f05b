#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ntkflow/network.hpp"
#include "ntkflow/types.hpp"

namespace ntkflow {

/// Rows drawn uniformly on the unit sphere (normalized Gaussians); any row
/// whose inner product with an earlier row exceeds 1 - 1e-6 in absolute value
/// is redrawn, up to 100 rounds per row. Targets are uniform in
/// [-target_scale, target_scale], drawn after all rows. Requires n >= 2,
/// p >= 2.
Dataset synthetic_dataset(Index n, Index p, std::uint64_t seed, double target_scale = 0.5);

/// IDX-format loader. Images: big-endian magic 0x00000803 then count, rows,
/// cols and count*rows*cols pixel bytes; labels: magic 0x00000801, count,
/// count label bytes. Subsamples n_sub without replacement (seeded shuffle),
/// divides each image by its Euclidean norm (zero images are skipped), drops
/// the later member of any pair with |x_i . x_j| > 1 - 1e-9 and refills from
/// the remaining shuffled pool, and maps label d to the target y = d / 10.
Dataset load_mnist(const std::filesystem::path& images_path,
                   const std::filesystem::path& labels_path, Index n_sub,
                   std::uint64_t seed);

/// Writers emitting the exact byte layout load_mnist parses; used to build
/// fixtures and stand-in corpora.
void write_idx_images(const std::filesystem::path& path,
                      const std::vector<std::vector<std::uint8_t>>& images, int rows = 28,
                      int cols = 28);
void write_idx_labels(const std::filesystem::path& path,
                      const std::vector<std::uint8_t>& labels);

}  // namespace ntkflow
