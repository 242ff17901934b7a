#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bsnn/error.hpp"
#include "bsnn/tensor.hpp"

namespace bsnn {

struct Dataset {
  Tensor images;  // [N, C, H, W], values in [0, 1]
  std::vector<int> labels;
  std::size_t classes = 0;
  std::string split;

  std::size_t size() const { return labels.size(); }
  void validate() const;
  /// Samples [begin, begin+count) as a new dataset.
  Dataset subset(std::size_t begin, std::size_t count) const;
  /// Samples at the given indices, in order.
  Tensor gather(const std::vector<std::size_t>& idx) const;
};

enum class IdxErrorCode { open_failed, bad_magic, truncated, count_mismatch };

class IdxError : public Error {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : Error(what), code_(code) {}
  IdxErrorCode code() const noexcept { return code_; }

 private:
  IdxErrorCode code_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Raw IDX contents: dimension sizes and the unsigned byte payload.
struct IdxFile {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxFile read_idx_file(const std::string& path);
void write_idx_file(const std::string& path, const IdxFile& f);

/// Loads a 3-D image file and a 1-D label file; pixels are divided by 255.
/// `limit` > 0 keeps only the first `limit` samples.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit = 0);

/// Writes the dataset as IDX (pixels rounded to the nearest of 0..255).
/// Multi-channel images are not representable and are rejected.
void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path);

struct BlobOptions {
  std::uint64_t seed = 7;
  std::size_t classes = 10;
  std::size_t per_class = 60;
  Shape image{1, 12, 12};
  double noise = 0.3;
};

/// K random template images plus Gaussian pixel noise, clipped to [0, 1].
/// Samples are interleaved by class. Templates depend only on the seed, so
/// calls with different `sample_seed` draw fresh samples of the same classes.
Dataset synthetic_blobs(const BlobOptions& opts, std::uint64_t sample_seed = 0);

/// The class templates used by synthetic_blobs, [K, C, H, W].
Tensor blob_templates(const BlobOptions& opts);

/// Replicates [N,C,H,W] images T times into a folded [T*N,C,H,W] tensor.
Tensor encode_constant(const Tensor& images, std::size_t timesteps);

/// Independent Bernoulli spikes with probability equal to pixel intensity.
Tensor encode_bernoulli(const Tensor& images, std::size_t timesteps, std::uint64_t seed);

}  // namespace bsnn
