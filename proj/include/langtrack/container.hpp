// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace langtrack {

// Header-plus-payload tensor container used for text-encoder weight import and
// for checkpoints. Layout: 8-byte little-endian header length, UTF-8 JSON
// header, raw payload. The header maps tensor name -> {dtype, shape, offset,
// frozen}; "__meta__" holds free-form string metadata. Payload arrays are
// row-major little-endian, dtype "f4" or "f8".
class TensorFile {
 public:
  void put(const std::string& name, const Eigen::MatrixXd& value,
           bool frozen = false);
  bool has(const std::string& name) const;
  const Eigen::MatrixXd& get(const std::string& name) const;
  bool frozen(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }

  std::map<std::string, std::string>& meta() { return meta_; }
  const std::map<std::string, std::string>& meta() const { return meta_; }

  // dtype applies to the whole payload at save time: "f8" (default) or "f4".
  void save(const std::string& path, const std::string& dtype = "f8") const;
  static TensorFile load(const std::string& path);

 private:
  struct Entry {
    Eigen::MatrixXd value;
    bool frozen = false;
  };
  std::vector<std::string> order_;
  std::map<std::string, Entry> entries_;
  std::map<std::string, std::string> meta_;
};

}  // namespace langtrack
