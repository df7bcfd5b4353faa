// SPDX-License-Identifier: Apache-2.0
#include "langtrack/mot_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace langtrack {

namespace {

// Shortest representation that round-trips through double.
void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

double parse_double(const std::string& field, int lineno) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::runtime_error("mot: line " + std::to_string(lineno) +
                             ": bad number '" + field + "'");
  }
  return v;
}

long parse_long(const std::string& field, int lineno) {
  long v = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw std::runtime_error("mot: line " + std::to_string(lineno) +
                             ": bad integer '" + field + "'");
  }
  return v;
}

}  // namespace

std::string format_mot(const Sequence& seq) {
  std::string out;
  for (const auto& [frame, boxes] : seq.frames) {
    std::vector<TrackedBox> sorted = boxes;
    std::sort(sorted.begin(), sorted.end(),
              [](const TrackedBox& a, const TrackedBox& b) { return a.id < b.id; });
    for (const TrackedBox& tb : sorted) {
      out += std::to_string(frame);
      out += ',';
      out += std::to_string(tb.id);
      out += ',';
      append_double(out, tb.box.left);
      out += ',';
      append_double(out, tb.box.top);
      out += ',';
      append_double(out, tb.box.w);
      out += ',';
      append_double(out, tb.box.h);
      out += ',';
      char conf[32];
      std::snprintf(conf, sizeof conf, "%.6f", tb.conf);
      out += conf;
      out += ",-1,-1,-1\n";
    }
  }
  return out;
}

void write_mot(const Sequence& seq, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("mot: cannot open " + path);
  const std::string text = format_mot(seq);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("mot: write failed for " + path);
}

Sequence parse_mot(const std::string& text) {
  Sequence seq;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() < 7 || fields.size() > 10) {
      throw std::runtime_error("mot: line " + std::to_string(lineno) +
                               ": expected 7..10 fields, got " +
                               std::to_string(fields.size()));
    }
    const long frame = parse_long(fields[0], lineno);
    const long id = parse_long(fields[1], lineno);
    if (frame < 1) {
      throw std::runtime_error("mot: line " + std::to_string(lineno) +
                               ": frame must be >= 1");
    }
    if (id < 1) {
      throw std::runtime_error("mot: line " + std::to_string(lineno) +
                               ": id must be >= 1");
    }
    TrackedBox tb;
    tb.id = static_cast<int>(id);
    tb.box.left = parse_double(fields[2], lineno);
    tb.box.top = parse_double(fields[3], lineno);
    tb.box.w = parse_double(fields[4], lineno);
    tb.box.h = parse_double(fields[5], lineno);
    tb.conf = parse_double(fields[6], lineno);
    auto& frame_boxes = seq.frames[static_cast<int>(frame)];
    for (const TrackedBox& existing : frame_boxes) {
      if (existing.id == tb.id) {
        throw std::runtime_error("mot: line " + std::to_string(lineno) +
                                 ": duplicate id " + std::to_string(id) +
                                 " in frame " + std::to_string(frame));
      }
    }
    frame_boxes.push_back(tb);
  }
  for (auto& [frame, boxes] : seq.frames) {
    std::sort(boxes.begin(), boxes.end(),
              [](const TrackedBox& a, const TrackedBox& b) { return a.id < b.id; });
  }
  return seq;
}

Sequence read_mot(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("mot: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_mot(ss.str());
}

}  // namespace langtrack
