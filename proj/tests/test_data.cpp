#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "bsnn/data.hpp"
#include "bsnn/error.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace bsnn;

namespace {

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

std::vector<std::uint8_t> image_file(std::uint32_t n, std::uint32_t h, std::uint32_t w, std::mt19937_64& rng) {
  std::vector<std::uint8_t> f;
  be32(f, kIdxImageMagic);
  be32(f, n);
  be32(f, h);
  be32(f, w);
  std::uniform_int_distribution<int> byte(0, 255);
  for (std::uint32_t i = 0; i < n * h * w; ++i) f.push_back(static_cast<std::uint8_t>(byte(rng)));
  return f;
}

std::vector<std::uint8_t> label_file(const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> f;
  be32(f, kIdxLabelMagic);
  be32(f, static_cast<std::uint32_t>(labels.size()));
  f.insert(f.end(), labels.begin(), labels.end());
  return f;
}

IdxErrorCode code_of(const std::string& img, const std::string& lab) {
  try {
    load_idx(img, lab);
  } catch (const IdxError& e) {
    return e.code();
  }
  FAIL("expected an IdxError");
  return IdxErrorCode::open_failed;
}

}  // namespace

TEST_CASE("IDX label file example") {
  const auto p = testing::temp_path("labels.idx");
  write_bytes(p, {0x00, 0x00, 0x08, 0x01, 0x00, 0x00, 0x00, 0x02, 7, 3});
  IdxFile f = read_idx_file(p);
  CHECK(f.magic == kIdxLabelMagic);
  CHECK(f.dims == std::vector<std::uint32_t>{2});
  CHECK(f.bytes == std::vector<std::uint8_t>{7, 3});

  std::mt19937_64 rng(1);
  const auto ip = testing::temp_path("labels_img.idx");
  write_bytes(ip, image_file(2, 3, 4, rng));
  Dataset d = load_idx(ip, p);
  CHECK(d.labels == std::vector<int>{7, 3});
  CHECK(d.images.shape() == Shape{2, 1, 3, 4});
  const auto raw = read_bytes(ip);
  for (std::size_t i = 0; i < 24; ++i) CHECK(d.images[i] == raw[16 + i] / 255.0);
  std::filesystem::remove(p);
  std::filesystem::remove(ip);
}

TEST_CASE("IDX errors carry distinct codes") {
  std::mt19937_64 rng(2);
  const auto img = testing::temp_path("err_img.idx"), lab = testing::temp_path("err_lab.idx");
  write_bytes(img, image_file(3, 2, 2, rng));

  write_bytes(lab, label_file({1, 2}));
  CHECK(code_of(img, lab) == IdxErrorCode::count_mismatch);

  auto badmagic = label_file({1, 2, 0});
  badmagic[2] = 0x0D;  // float payload type
  write_bytes(lab, badmagic);
  CHECK(code_of(img, lab) == IdxErrorCode::bad_magic);
  auto little = label_file({1, 2, 0});
  std::swap(little[0], little[3]);
  std::swap(little[1], little[2]);
  write_bytes(lab, little);
  CHECK(code_of(img, lab) == IdxErrorCode::bad_magic);
  // A valid image file passed as labels is also rejected by magic.
  CHECK(code_of(img, img) == IdxErrorCode::bad_magic);

  auto full = label_file({1, 2, 0});
  full.pop_back();
  write_bytes(lab, full);
  CHECK(code_of(img, lab) == IdxErrorCode::truncated);
  write_bytes(lab, {0x00, 0x00});
  CHECK(code_of(img, lab) == IdxErrorCode::truncated);

  CHECK(code_of(testing::temp_path("does_not_exist.idx"), lab) == IdxErrorCode::open_failed);
  std::filesystem::remove(img);
  std::filesystem::remove(lab);
}

TEST_CASE("IDX files round-trip byte-exactly") {
  std::mt19937_64 rng(3);
  const auto img = testing::temp_path("rt_img.idx"), lab = testing::temp_path("rt_lab.idx");
  const auto img2 = testing::temp_path("rt_img2.idx"), lab2 = testing::temp_path("rt_lab2.idx");
  std::vector<std::uint8_t> labels(17);
  std::uniform_int_distribution<int> l(0, 9);
  for (auto& x : labels) x = static_cast<std::uint8_t>(l(rng));
  write_bytes(img, image_file(17, 5, 6, rng));
  write_bytes(lab, label_file(labels));
  write_idx(load_idx(img, lab), img2, lab2);
  CHECK(read_bytes(img) == read_bytes(img2));
  CHECK(read_bytes(lab) == read_bytes(lab2));

  write_idx_file(img2, read_idx_file(img));
  CHECK(read_bytes(img) == read_bytes(img2));

  Dataset limited = load_idx(img, lab, 5);
  CHECK(limited.size() == 5);
  for (const auto& p : {img, lab, img2, lab2}) std::filesystem::remove(p);
}

TEST_CASE("MNIST t10k files when available") {
  const char* dir = std::getenv("BSNN_MNIST_DIR");
  const std::filesystem::path root = dir ? dir : "";
  const auto img = root / "t10k-images-idx3-ubyte", lab = root / "t10k-labels-idx1-ubyte";
  if (!dir || !std::filesystem::exists(img) || !std::filesystem::exists(lab)) {
    MESSAGE("BSNN_MNIST_DIR not set or files missing; skipped");
    return;
  }
  Dataset d = load_idx(img.string(), lab.string());
  CHECK(d.size() == 10000);
  CHECK(d.images.shape() == Shape{10000, 1, 28, 28});
  CHECK(d.labels[0] == 7);
}

TEST_CASE("synthetic_blobs properties") {
  BlobOptions o;
  o.classes = 5;
  o.per_class = 8;
  o.image = {2, 6, 6};
  o.noise = 0.0;
  Dataset clean = synthetic_blobs(o);
  const std::size_t per = 72;
  CHECK(clean.size() == 40);
  CHECK(clean.classes == 5);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean.labels[i] == static_cast<int>(i % 5));
    for (std::size_t j = 0; j < per; ++j) CHECK(clean.images[i * per + j] == clean.images[(i % 5) * per + j]);
  }

  // Nearest template (squared distance) classifies the noise-free set perfectly.
  const Tensor templates = blob_templates(o);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < 5; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < per; ++j) {
        const double diff = clean.images[i * per + j] - templates[k * per + j];
        dist += diff * diff;
      }
      if (dist < best_d) best_d = dist, best = k;
    }
    CHECK(static_cast<int>(best) == clean.labels[i]);
  }

  o.noise = 0.4;
  Dataset a = synthetic_blobs(o, 1), b = synthetic_blobs(o, 1), c = synthetic_blobs(o, 2);
  CHECK(a.images == b.images);
  CHECK(a.labels == b.labels);
  CHECK_FALSE(a.images == c.images);
  for (double v : a.images.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(blob_templates(o) == templates);

  Dataset sub = a.subset(5, 10);
  CHECK(sub.size() == 10);
  CHECK(sub.labels[0] == a.labels[5]);
  o.classes = 1;
  CHECK_THROWS_AS(synthetic_blobs(o), DomainError);
}

TEST_CASE("constant encoding") {
  std::mt19937_64 rng(4);
  Tensor img({3, 2, 4, 4});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : img.data()) v = u(rng);
  CHECK(encode_constant(img, 1) == img);
  Tensor seq = encode_constant(img, 4);
  CHECK(seq.shape() == Shape{12, 2, 4, 4});
  for (const auto& step : unfold_time(seq, 4)) CHECK(step == img);
  CHECK_THROWS_AS(encode_constant(img, 0), DomainError);
}

TEST_CASE("Bernoulli encoding") {
  Tensor img({1, 1, 1, 4}, {0.0, 1.0, 0.3, 0.85});
  Tensor s = encode_bernoulli(img, 10000, 5);
  CHECK(s.shape() == Shape{10000, 1, 1, 4});
  double count[4] = {0, 0, 0, 0};
  for (std::size_t t = 0; t < 10000; ++t)
    for (std::size_t k = 0; k < 4; ++k) {
      const double v = s[t * 4 + k];
      CHECK((v == 0.0 || v == 1.0));
      count[k] += v;
    }
  CHECK(count[0] == 0.0);
  CHECK(count[1] == 10000.0);
  for (std::size_t k = 2; k < 4; ++k) {
    const double p = img[k], rate = count[k] / 10000.0;
    CHECK(std::fabs(rate - p) <= 3.0 * std::sqrt(p * (1.0 - p) / 10000.0));
  }
  CHECK(encode_bernoulli(img, 50, 9) == encode_bernoulli(img, 50, 9));
  CHECK_FALSE(encode_bernoulli(img, 50, 9) == encode_bernoulli(img, 50, 10));
  CHECK_THROWS_AS(encode_bernoulli(img, 0, 1), DomainError);
}
