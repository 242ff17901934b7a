#include "bsnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace bsnn {

void Dataset::validate() const {
  if (images.rank() != 4) throw ShapeError("dataset images must be [N,C,H,W], got " + shape_string(images.shape()));
  if (images.dim(0) != labels.size())
    throw ShapeError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                     std::to_string(labels.size()) + " labels");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      throw DomainError("label " + std::to_string(l) + " outside [0," + std::to_string(classes) + ")");
}

Dataset Dataset::subset(std::size_t begin, std::size_t count) const {
  Dataset d;
  d.images = slice_leading(images, begin, count);
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  labels.begin() + static_cast<std::ptrdiff_t>(begin + count));
  d.classes = classes;
  d.split = split;
  return d;
}

Tensor Dataset::gather(const std::vector<std::size_t>& idx) const {
  Shape s = images.shape();
  s[0] = idx.size();
  Tensor out(s);
  const std::size_t per = images.size() / images.dim(0);
  for (std::size_t k = 0; k < idx.size(); ++k)
    std::copy_n(images.values().begin() + static_cast<std::ptrdiff_t>(idx[k] * per), per,
                out.values().begin() + static_cast<std::ptrdiff_t>(k * per));
  return out;
}

namespace {

bool read_be32(std::istream& in, std::uint32_t& v) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) return false;
  v = (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
  return true;
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

IdxFile read_idx_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorCode::open_failed, path + ": cannot open");
  IdxFile f;
  if (!read_be32(in, f.magic)) throw IdxError(IdxErrorCode::truncated, path + ": truncated header");
  // 0x08 = unsigned byte payload; low byte is the dimension count.
  if ((f.magic & 0xFFFFFF00u) != 0x00000800u || (f.magic & 0xFFu) == 0)
    throw IdxError(IdxErrorCode::bad_magic, path + ": bad magic number");
  const std::size_t ndims = f.magic & 0xFFu;
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndims; ++i) {
    std::uint32_t d = 0;
    if (!read_be32(in, d)) throw IdxError(IdxErrorCode::truncated, path + ": truncated dimension header");
    f.dims.push_back(d);
    total *= d;
  }
  f.bytes.resize(total);
  if (total > 0 && !in.read(reinterpret_cast<char*>(f.bytes.data()), static_cast<std::streamsize>(total)))
    throw IdxError(IdxErrorCode::truncated, path + ": payload shorter than declared " + std::to_string(total) +
                                                " bytes");
  return f;
}

void write_idx_file(const std::string& path, const IdxFile& f) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  write_be32(out, f.magic);
  for (auto d : f.dims) write_be32(out, d);
  out.write(reinterpret_cast<const char*>(f.bytes.data()), static_cast<std::streamsize>(f.bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit) {
  const IdxFile img = read_idx_file(images_path);
  const IdxFile lab = read_idx_file(labels_path);
  if (img.magic != kIdxImageMagic) throw IdxError(IdxErrorCode::bad_magic, images_path + ": expected 3-D image magic 0x00000803");
  if (lab.magic != kIdxLabelMagic) throw IdxError(IdxErrorCode::bad_magic, labels_path + ": expected label magic 0x00000801");
  if (img.dims[0] != lab.dims[0])
    throw IdxError(IdxErrorCode::count_mismatch, images_path + " has " + std::to_string(img.dims[0]) + " images, " +
                                                     labels_path + " has " + std::to_string(lab.dims[0]) + " labels");
  std::size_t n = img.dims[0];
  if (limit > 0) n = std::min<std::size_t>(n, limit);
  if (n == 0) throw IdxError(IdxErrorCode::count_mismatch, images_path + ": no samples");
  const std::size_t H = img.dims[1], W = img.dims[2];
  Dataset d;
  d.images = Tensor({n, 1, H, W});
  for (std::size_t i = 0; i < n * H * W; ++i) d.images[i] = img.bytes[i] / 255.0;
  d.labels.resize(n);
  int max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lab.bytes[i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  d.split = images_path;
  return d;
}

void write_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
  d.validate();
  if (d.images.dim(1) != 1) throw ShapeError("IDX export supports single-channel images only");
  IdxFile img{kIdxImageMagic,
              {static_cast<std::uint32_t>(d.size()), static_cast<std::uint32_t>(d.images.dim(2)),
               static_cast<std::uint32_t>(d.images.dim(3))},
              {}};
  img.bytes.resize(d.images.size());
  for (std::size_t i = 0; i < d.images.size(); ++i)
    img.bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(d.images[i], 0.0, 1.0) * 255.0));
  IdxFile lab{kIdxLabelMagic, {static_cast<std::uint32_t>(d.size())}, {}};
  for (int l : d.labels) lab.bytes.push_back(static_cast<std::uint8_t>(l));
  write_idx_file(images_path, img);
  write_idx_file(labels_path, lab);
}

Tensor blob_templates(const BlobOptions& o) {
  if (o.classes < 2) throw DomainError("synthetic blobs need at least 2 classes");
  if (o.image.size() != 3) throw ShapeError("blob image shape must be [C,H,W]");
  Shape s{o.classes, o.image[0], o.image[1], o.image[2]};
  Tensor t(s);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

Dataset synthetic_blobs(const BlobOptions& o, std::uint64_t sample_seed) {
  const Tensor templates = blob_templates(o);
  const std::size_t per = shape_volume(o.image);
  const std::size_t n = o.classes * o.per_class;
  Dataset d;
  d.images = Tensor({n, o.image[0], o.image[1], o.image[2]});
  d.labels.resize(n);
  d.classes = o.classes;
  d.split = "synthetic";
  std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(sample_seed), 0x5a17u};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % o.classes;
    d.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < per; ++j) {
      const double v = templates[k * per + j] + (o.noise > 0.0 ? o.noise * noise(rng) : 0.0);
      d.images[i * per + j] = std::clamp(v, 0.0, 1.0);
    }
  }
  return d;
}

Tensor encode_constant(const Tensor& images, std::size_t timesteps) {
  if (timesteps < 1) throw DomainError("encoding needs T >= 1");
  std::vector<Tensor> steps(timesteps, images);
  return fold_time(steps);
}

Tensor encode_bernoulli(const Tensor& images, std::size_t timesteps, std::uint64_t seed) {
  if (timesteps < 1) throw DomainError("encoding needs T >= 1");
  Shape s = images.shape();
  const std::size_t n = s[0];
  s[0] = n * timesteps;
  Tensor out(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < timesteps; ++t)
    for (std::size_t i = 0; i < images.size(); ++i) out[t * images.size() + i] = u(rng) < images[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace bsnn
