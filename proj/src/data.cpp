#include "befb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

namespace befb {

Tensor Dataset::image(std::size_t i) const {
  return batch({i});
}

Tensor Dataset::batch(const std::vector<std::size_t>& indices) const {
  const std::size_t plane = images.c() * images.h() * images.w();
  Tensor out(indices.size(), images.c(), images.h(), images.w());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::memcpy(&out.data[i * plane], &images.data[indices[i] * plane],
                plane * sizeof(double));
  }
  return out;
}

std::vector<int> Dataset::batch_labels(
    const std::vector<std::size_t>& indices) const {
  std::vector<int> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(is),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t be32(const unsigned char* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) |
         (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) |
         static_cast<std::uint32_t>(p[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  const auto img = read_file(images_path);
  const auto lab = read_file(labels_path);
  if (img.size() < 16) {
    throw FormatError(images_path + ": truncated IDX header");
  }
  if (lab.size() < 8) {
    throw FormatError(labels_path + ": truncated IDX header");
  }
  const std::uint32_t img_magic = be32(img.data());
  if (img_magic != 0x00000803) {
    throw FormatError(images_path + ": bad IDX image magic 0x" +
                      [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof buf, "%08x", img_magic);
                        return std::string(buf);
                      }() +
                      " (expected 0x00000803)");
  }
  const std::uint32_t lab_magic = be32(lab.data());
  if (lab_magic != 0x00000801) {
    throw FormatError(labels_path + ": bad IDX label magic 0x" +
                      [&] {
                        char buf[16];
                        std::snprintf(buf, sizeof buf, "%08x", lab_magic);
                        return std::string(buf);
                      }() +
                      " (expected 0x00000801)");
  }
  const std::uint32_t n_img = be32(img.data() + 4);
  const std::uint32_t rows = be32(img.data() + 8);
  const std::uint32_t cols = be32(img.data() + 12);
  const std::uint32_t n_lab = be32(lab.data() + 4);
  if (n_img != n_lab) {
    throw FormatError("IDX count mismatch: " + std::to_string(n_img) +
                      " images vs " + std::to_string(n_lab) + " labels");
  }
  const std::size_t expected = 16 + std::size_t(n_img) * rows * cols;
  if (img.size() != expected) {
    throw FormatError(images_path + ": expected " + std::to_string(expected) +
                      " bytes, got " + std::to_string(img.size()));
  }
  if (lab.size() != 8 + n_lab) {
    throw FormatError(labels_path + ": expected " +
                      std::to_string(8 + n_lab) + " bytes, got " +
                      std::to_string(lab.size()));
  }
  Dataset ds;
  ds.name = "mnist";
  ds.class_count = 10;
  ds.images = Tensor(n_img, 1, rows, cols);
  for (std::size_t i = 0; i < std::size_t(n_img) * rows * cols; ++i) {
    ds.images.data[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  ds.labels.resize(n_lab);
  for (std::size_t i = 0; i < n_lab; ++i) {
    ds.labels[i] = lab[8 + i];
  }
  return ds;
}

Dataset load_cifar10_bin(const std::vector<std::string>& batch_paths) {
  constexpr std::size_t kRecord = 3073;  // label byte + 3 * 32 * 32
  std::size_t total = 0;
  std::vector<std::vector<unsigned char>> blobs;
  for (const auto& path : batch_paths) {
    blobs.push_back(read_file(path));
    if (blobs.back().size() % kRecord != 0) {
      const std::size_t full = blobs.back().size() / kRecord;
      throw FormatError(path + ": size " +
                        std::to_string(blobs.back().size()) +
                        " is not a multiple of 3073 (truncated at byte " +
                        std::to_string(full * kRecord) + ")");
    }
    total += blobs.back().size() / kRecord;
  }
  Dataset ds;
  ds.name = "cifar10";
  ds.class_count = 10;
  ds.images = Tensor(total, 3, 32, 32);
  ds.labels.resize(total);
  std::size_t rec = 0;
  for (std::size_t b = 0; b < blobs.size(); ++b) {
    const auto& blob = blobs[b];
    for (std::size_t off = 0; off < blob.size(); off += kRecord, ++rec) {
      const unsigned char label = blob[off];
      if (label > 9) {
        throw FormatError(batch_paths[b] + ": label " +
                          std::to_string(int(label)) + " > 9 at byte " +
                          std::to_string(off));
      }
      ds.labels[rec] = label;
      double* dst = &ds.images.data[rec * 3072];
      for (std::size_t i = 0; i < 3072; ++i) {
        dst[i] = static_cast<double>(blob[off + 1 + i]) / 255.0;
      }
    }
  }
  return ds;
}

static Dataset take(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  out.images = ds.batch(idx);
  out.labels = ds.batch_labels(idx);
  return out;
}

std::pair<Dataset, Dataset> subset(const Dataset& ds, std::size_t n_train,
                                   std::size_t n_test, std::uint64_t seed,
                                   bool stratified) {
  if (n_train + n_test > ds.size()) {
    throw std::invalid_argument(
        "subset: requested " + std::to_string(n_train + n_test) +
        " samples from a dataset of " + std::to_string(ds.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order;
  if (stratified) {
    // per-class shuffles, then round-robin across classes
    std::vector<std::vector<std::size_t>> per_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i)
      per_class[ds.labels[i]].push_back(i);
    for (auto& v : per_class) std::shuffle(v.begin(), v.end(), rng);
    std::vector<std::size_t> cursor(ds.class_count, 0);
    while (order.size() < ds.size()) {
      for (int k = 0; k < ds.class_count; ++k) {
        if (cursor[k] < per_class[k].size()) {
          order.push_back(per_class[k][cursor[k]++]);
        }
      }
    }
  } else {
    order.resize(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_idx(order.begin() + n_train,
                                    order.begin() + n_train + n_test);
  return {take(ds, train_idx), take(ds, test_idx)};
}

namespace {

enum class Shape { rectangle, disc, triangle };

void render_shape(double* img, std::size_t size, Shape shape, double cx,
                  double cy, double half, double fg) {
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      bool inside = false;
      switch (shape) {
        case Shape::rectangle:
          inside = std::abs(dx) <= half && std::abs(dy) <= half;
          break;
        case Shape::disc:
          inside = dx * dx + dy * dy <= half * half;
          break;
        case Shape::triangle:
          // upward triangle: base at cy + half
          inside = dy <= half && dy >= -half &&
                   std::abs(dx) <= (dy + half) / 2.0;
          break;
      }
      if (inside) img[y * size + x] = fg;
    }
  }
}

}  // namespace

Dataset synthetic_shapes(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (size < 16) {
    throw std::invalid_argument("synthetic_shapes: size must be >= 16");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds;
  ds.name = "shapes";
  ds.class_count = 3;
  ds.images = Tensor(n, 1, size, size);
  ds.labels.resize(n);
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 3);
    ds.labels[i] = cls;
    double* img = &ds.images.data[i * size * size];
    const double half = s * (0.15 + 0.15 * unit(rng));
    const double cx = half + 1.0 + unit(rng) * (s - 2.0 * half - 2.0);
    const double cy = half + 1.0 + unit(rng) * (s - 2.0 * half - 2.0);
    const double fg = 0.7 + 0.2 * unit(rng);
    render_shape(img, size, static_cast<Shape>(cls), cx, cy, half, fg);
    // light texture noise
    for (std::size_t p = 0; p < size * size; ++p) {
      img[p] = std::clamp(img[p] + 0.05 * (unit(rng) - 0.5), 0.0, 1.0);
    }
  }
  return ds;
}

}  // namespace befb
