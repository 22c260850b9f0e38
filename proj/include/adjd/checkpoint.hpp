#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adjd/classifier.hpp"
#include "adjd/denoiser.hpp"
#include "adjd/schedule.hpp"

namespace adjd {

// File layout (little-endian):
//   "ADJD" | u32 version | u32 len | schedule JSON (len bytes)
//   u32 count | count x { u32 len | name | u32 ndim | u64 dims[ndim] | f64 data[prod(dims)] }
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // row-major over dims

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  NoiseSchedule schedule;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  /// Throws FormatError when the array is missing.
  const NamedArray& at(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Rejects bad magic, unknown versions, truncation and trailing bytes.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

NamedArray matrix_array(const std::string& name, const Eigen::MatrixXd& m);
NamedArray vector_array(const std::string& name, const Eigen::VectorXd& v);
Eigen::MatrixXd array_matrix(const NamedArray& a);
Eigen::VectorXd array_vector(const NamedArray& a);

/// Adds / reads the "denoiser.*" arrays (architecture, weights, table, frequencies).
void put_denoiser(Checkpoint& ckpt, const Denoiser& model);
Denoiser get_denoiser(const Checkpoint& ckpt);
/// Adds / reads the "classifier.*" arrays.
void put_classifier(Checkpoint& ckpt, const ToyClassifier& clf);
ToyClassifier get_classifier(const Checkpoint& ckpt);

/// Warning text when sampling with a schedule other than the one trained with.
std::optional<std::string> schedule_mismatch(const NoiseSchedule& trained,
                                             const NoiseSchedule& requested);

}  // namespace adjd
