// Copyright 2026 The pbho Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dataset import: CSV with a header row (last column is the label) and the
// MNIST IDX binary format.

#ifndef PBHO_MODELS_LOADERS_HPP_
#define PBHO_MODELS_LOADERS_HPP_

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pbho/errors.hpp"
#include "pbho/models/dataset.hpp"

namespace pbho {

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DatasetError(path + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

inline std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file: " + path);
  return in;
}

}  // namespace detail

// Images (magic 0x00000803) as rows of pixels scaled to [0, 1].
inline ad::Tensor load_idx_images(const std::string& path) {
  auto in = detail::open_binary(path);
  if (detail::read_be32(in, path) != 0x00000803)
    throw DatasetError(path + ": bad magic number (expected 0x00000803)");
  const std::size_t n = detail::read_be32(in, path);
  const std::size_t rows = detail::read_be32(in, path);
  const std::size_t cols = detail::read_be32(in, path);
  const std::size_t d = rows * cols;
  std::vector<unsigned char> buf(n * d);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
    throw DatasetError(path + ": truncated image data");
  ad::Tensor X = ad::Tensor::zeros({n, d});
  for (std::size_t i = 0; i < buf.size(); ++i) X.data[i] = buf[i] / 255.0;
  return X;
}

// Labels (magic 0x00000801).
inline std::vector<int> load_idx_labels(const std::string& path) {
  auto in = detail::open_binary(path);
  if (detail::read_be32(in, path) != 0x00000801)
    throw DatasetError(path + ": bad magic number (expected 0x00000801)");
  const std::size_t n = detail::read_be32(in, path);
  std::vector<unsigned char> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n)))
    throw DatasetError(path + ": truncated label data");
  return std::vector<int>(buf.begin(), buf.end());
}

inline Dataset load_idx(const std::string& images, const std::string& labels, int classes = 10) {
  ad::Tensor X = load_idx_images(images);
  std::vector<int> y = load_idx_labels(labels);
  if (y.size() != X.shape[0])
    throw DatasetError(images + " and " + labels + " disagree on the example count");
  for (int l : y)
    if (l < 0 || l >= classes) throw DatasetError(labels + ": label outside [0, classes)");
  return Dataset(std::move(X), std::move(y), classes);
}

struct MnistSplit {
  Dataset train;
  Dataset test;
};

// Reads the standard four MNIST file names from `dir`.
inline MnistSplit load_mnist_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  const char* names[] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
  std::string paths[4];
  for (int i = 0; i < 4; ++i) {
    paths[i] = (fs::path(dir) / names[i]).string();
    if (!fs::exists(paths[i])) throw DatasetError("missing MNIST file: " + paths[i]);
  }
  return {load_idx(paths[0], paths[1]), load_idx(paths[2], paths[3])};
}

// CSV with a header row; every column but the last is a feature. With
// `classification`, the last column must hold integer class ids.
inline Dataset load_csv(const std::string& path, bool classification) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DatasetError(path + ": empty file");
  std::vector<double> flat, target;
  std::size_t cols = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw DatasetError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() < 2) throw DatasetError(path + ":" + std::to_string(lineno) + ": need >= 2 columns");
    if (cols == 0) cols = row.size();
    if (row.size() != cols)
      throw DatasetError(path + ":" + std::to_string(lineno) + ": ragged row");
    target.push_back(row.back());
    flat.insert(flat.end(), row.begin(), row.end() - 1);
  }
  if (target.empty()) throw DatasetError(path + ": no data rows");
  ad::Tensor X({target.size(), cols - 1}, std::move(flat));
  if (!classification) return Dataset(std::move(X), std::move(target));
  std::vector<int> cls;
  int classes = 0;
  for (double v : target) {
    if (v != static_cast<int>(v) || v < 0) throw DatasetError(path + ": non-integer class label");
    cls.push_back(static_cast<int>(v));
    classes = std::max(classes, cls.back() + 1);
  }
  return Dataset(std::move(X), std::move(cls), classes);
}

}  // namespace pbho

#endif  // PBHO_MODELS_LOADERS_HPP_
