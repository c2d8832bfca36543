#pragma once

// IBCHK v1: line-oriented text container for named tensors.
//
//   IBCHK v1
//   tensor <name> <rank> <dim...>
//   <values, whitespace separated, 17 significant digits>
//   ...
//   end

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invbench/tensor.hpp"

namespace invbench {

struct TensorRecord {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

class Checkpoint {
 public:
  void put(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  void put(std::string name, const ad::Tensor& tensor);
  void put_indices(std::string name, std::span<const std::size_t> indices);
  void put_scalar(std::string name, double value);

  bool contains(std::string_view name) const;
  const TensorRecord& get(std::string_view name) const;
  // Checks the stored shape against `expected` before returning.
  const TensorRecord& get(std::string_view name, const std::vector<std::size_t>& expected) const;
  std::vector<std::size_t> get_indices(std::string_view name) const;
  double get_scalar(std::string_view name) const;

  const std::vector<TensorRecord>& records() const { return records_; }

  void write(std::ostream& os) const;
  static Checkpoint read(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<TensorRecord> records_;
};

}  // namespace invbench
