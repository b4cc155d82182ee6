#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lrlab/matrix.hpp"

namespace lrlab {

// Flat parameter storage with named, shaped blocks. The trainer treats the
// whole vector as one optimizer state; the sharpness pipeline addresses one
// block at a time.
class ParamVector {
 public:
  struct Block {
    std::string id;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t length() const { return rows * cols; }
  };

  ParamVector() = default;

  std::size_t add_block(const std::string& id, std::size_t rows, std::size_t cols) {
    if (index_.count(id)) throw std::invalid_argument("ParamVector: duplicate block " + id);
    Block b{id, data_.size(), rows, cols};
    index_[id] = blocks_.size();
    blocks_.push_back(b);
    data_.resize(data_.size() + rows * cols, 0.0);
    return blocks_.size() - 1;
  }

  std::size_t add_block(const std::string& id, const DenseMatrix& m) {
    std::size_t idx = add_block(id, m.rows(), m.cols());
    set_block(idx, m);
    return idx;
  }

  std::size_t block_count() const { return blocks_.size(); }
  const Block& block(std::size_t i) const { return blocks_[i]; }
  const std::vector<Block>& blocks() const { return blocks_; }

  bool has_block(const std::string& id) const { return index_.count(id) != 0; }
  std::size_t block_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw std::out_of_range("ParamVector: no block " + id);
    return it->second;
  }

  std::size_t size() const { return data_.size(); }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  DenseMatrix block_matrix(std::size_t i) const {
    const Block& b = blocks_[i];
    DenseMatrix m(b.rows, b.cols);
    for (std::size_t j = 0; j < b.length(); ++j) m.data()[j] = data_[b.offset + j];
    return m;
  }

  void set_block(std::size_t i, const DenseMatrix& m) {
    const Block& b = blocks_[i];
    if (m.rows() != b.rows || m.cols() != b.cols)
      throw std::invalid_argument("ParamVector: shape mismatch for " + b.id);
    for (std::size_t j = 0; j < b.length(); ++j) data_[b.offset + j] = m.data()[j];
  }

  // Same block layout, zero values.
  ParamVector zeros_like() const {
    ParamVector out;
    out.blocks_ = blocks_;
    out.index_ = index_;
    out.data_.assign(data_.size(), 0.0);
    return out;
  }

  bool same_structure(const ParamVector& o) const {
    if (blocks_.size() != o.blocks_.size() || data_.size() != o.data_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const Block &a = blocks_[i], &b = o.blocks_[i];
      if (a.id != b.id || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset)
        return false;
    }
    return true;
  }

 private:
  std::vector<double> data_;
  std::vector<Block> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace lrlab
