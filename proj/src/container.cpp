// SPDX-License-Identifier: Apache-2.0
#include "langtrack/container.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace langtrack {

namespace {

using ordered_json = nlohmann::ordered_json;

void append_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

void TensorFile::put(const std::string& name, const Eigen::MatrixXd& value,
                     bool frozen) {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    order_.push_back(name);
    entries_[name] = Entry{value, frozen};
  } else {
    it->second.value = value;
    it->second.frozen = frozen;
  }
}

bool TensorFile::has(const std::string& name) const {
  return entries_.count(name) != 0;
}

const Eigen::MatrixXd& TensorFile::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::runtime_error("TensorFile: missing tensor '" + name + "'");
  }
  return it->second.value;
}

bool TensorFile::frozen(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw std::runtime_error("TensorFile: missing tensor '" + name + "'");
  }
  return it->second.frozen;
}

void TensorFile::save(const std::string& path, const std::string& dtype) const {
  if (dtype != "f4" && dtype != "f8") {
    throw std::runtime_error("TensorFile: unsupported dtype " + dtype);
  }
  const std::size_t elem = dtype == "f4" ? 4 : 8;

  ordered_json header = ordered_json::object();
  std::string payload;
  for (const std::string& name : order_) {
    const Entry& e = entries_.at(name);
    const Eigen::Index rows = e.value.rows(), cols = e.value.cols();
    header[name] = {{"dtype", dtype},
                    {"shape", {rows, cols}},
                    {"offset", payload.size()},
                    {"frozen", e.frozen}};
    const std::size_t start = payload.size();
    payload.resize(start + elem * static_cast<std::size_t>(rows * cols));
    char* out = payload.data() + start;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (elem == 4) {
          const float f = static_cast<float>(e.value(r, c));
          std::memcpy(out, &f, 4);
          out += 4;
        } else {
          const double d = e.value(r, c);
          std::memcpy(out, &d, 8);
          out += 8;
        }
      }
    }
  }
  if (!meta_.empty()) {
    header["__meta__"] = meta_;
  }

  const std::string htext = header.dump();
  std::string blob;
  append_u64_le(blob, htext.size());
  blob += htext;
  blob += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("TensorFile: cannot open " + path);
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw std::runtime_error("TensorFile: write failed for " + path);
}

TensorFile TensorFile::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("TensorFile: cannot open " + path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (blob.size() < 8) throw std::runtime_error("TensorFile: truncated " + path);
  const std::uint64_t hlen =
      read_u64_le(reinterpret_cast<const unsigned char*>(blob.data()));
  if (8 + hlen > blob.size()) {
    throw std::runtime_error("TensorFile: truncated header in " + path);
  }
  const ordered_json header = ordered_json::parse(blob.substr(8, hlen));
  const char* payload = blob.data() + 8 + hlen;
  const std::size_t payload_size = blob.size() - 8 - hlen;

  TensorFile out;
  for (auto it = header.begin(); it != header.end(); ++it) {
    const std::string& name = it.key();
    if (name == "__meta__") {
      for (auto m = it->begin(); m != it->end(); ++m) {
        out.meta_[m.key()] = m->get<std::string>();
      }
      continue;
    }
    const ordered_json& e = *it;
    const std::string dtype = e.at("dtype").get<std::string>();
    if (dtype != "f4" && dtype != "f8") {
      throw std::runtime_error("TensorFile: unsupported dtype in " + name);
    }
    const std::size_t elem = dtype == "f4" ? 4 : 8;
    const auto shape = e.at("shape");
    if (shape.size() != 2) {
      throw std::runtime_error("TensorFile: tensor " + name + " is not 2-D");
    }
    const Eigen::Index rows = shape[0].get<Eigen::Index>();
    const Eigen::Index cols = shape[1].get<Eigen::Index>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t count = static_cast<std::size_t>(rows * cols);
    if (offset + elem * count > payload_size) {
      throw std::runtime_error("TensorFile: tensor " + name +
                               " extends past end of payload");
    }
    Eigen::MatrixXd m(rows, cols);
    const char* src = payload + offset;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (elem == 4) {
          float v;
          std::memcpy(&v, src, 4);
          src += 4;
          m(r, c) = static_cast<double>(v);
        } else {
          double v;
          std::memcpy(&v, src, 8);
          src += 8;
          m(r, c) = v;
        }
      }
    }
    const bool frozen = e.contains("frozen") && e.at("frozen").get<bool>();
    out.put(name, m, frozen);
  }
  return out;
}

}  // namespace langtrack
