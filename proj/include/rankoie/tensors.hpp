// Copyright 2026 The RankOIE Authors - All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "rankoie/common.hpp"

namespace rankoie {

// All parameters of a model live in one contiguous buffer with named
// matrix views. Optimizer accumulators, gradients, and finite-difference
// probes all address the same flat index space.
class Tensors {
 public:
  struct Entry {
    std::string name;
    std::size_t offset;
    std::size_t rows;
    std::size_t cols;
    std::size_t count() const { return rows * cols; }
  };

  using View = Eigen::Map<Eigen::MatrixXd>;
  using ConstView = Eigen::Map<const Eigen::MatrixXd>;

  std::size_t add(const std::string& name, std::size_t rows, std::size_t cols) {
    if (index_.count(name)) throw Error("duplicate tensor name: " + name);
    Entry e{name, data_.size(), rows, cols};
    index_[name] = entries_.size();
    entries_.push_back(e);
    data_.resize(data_.size() + e.count(), 0.0);
    return entries_.size() - 1;
  }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  View view(const std::string& name) {
    const Entry& e = entry(name);
    return View(data_.data() + e.offset, static_cast<Eigen::Index>(e.rows),
                static_cast<Eigen::Index>(e.cols));
  }
  ConstView view(const std::string& name) const {
    const Entry& e = entry(name);
    return ConstView(data_.data() + e.offset, static_cast<Eigen::Index>(e.rows),
                     static_cast<Eigen::Index>(e.cols));
  }

  const Entry& entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown tensor: " + name);
    return entries_[it->second];
  }

  const std::vector<Entry>& entries() const { return entries_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::size_t size() const { return data_.size(); }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

  // Same registry, zero-initialized data.
  static Tensors like(const Tensors& other) {
    Tensors t;
    t.entries_ = other.entries_;
    t.index_ = other.index_;
    t.data_.assign(other.data_.size(), 0.0);
    return t;
  }

  bool same_shape(const Tensors& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Entry& a = entries_[i];
      const Entry& b = other.entries_[i];
      if (a.name != b.name || a.rows != b.rows || a.cols != b.cols) return false;
    }
    return true;
  }

  void add_scaled(const Tensors& other, double scale) {
    if (size() != other.size()) throw Error("tensor size mismatch in accumulation");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
  }

  // Name of the tensor owning a flat index, for diagnostics.
  const std::string& name_at(std::size_t flat_index) const {
    for (const Entry& e : entries_) {
      if (flat_index >= e.offset && flat_index < e.offset + e.count()) return e.name;
    }
    throw Error("flat index out of range");
  }

  bool all_finite(std::size_t* bad_index = nullptr) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i])) {
        if (bad_index) *bad_index = i;
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<double> data_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rankoie
