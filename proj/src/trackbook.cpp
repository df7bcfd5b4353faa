// SPDX-License-Identifier: Apache-2.0
#include "langtrack/trackbook.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace langtrack {

namespace {

std::string normalize_phrase(const std::string& raw) {
  std::string out;
  bool in_space = true;
  for (char c : raw) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out.push_back(' ');
    in_space = false;
    out.push_back(
        static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

Trackbook parse_trackbook(const std::string& text) {
  Trackbook book;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string phrase = normalize_phrase(line);
    if (phrase.empty()) continue;
    if (!seen.insert(phrase).second) {
      throw std::runtime_error("trackbook: line " + std::to_string(lineno) +
                               ": duplicate phrase '" + phrase + "'");
    }
    book.phrases.push_back(phrase);
  }
  if (book.phrases.empty()) {
    throw std::runtime_error("trackbook: no phrases found");
  }
  return book;
}

Trackbook load_trackbook(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("trackbook: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_trackbook(ss.str());
}

std::string render_sentence(const PromptTemplate& tpl, const std::string& phrase) {
  if (tpl.prefix.empty()) return phrase;
  return tpl.prefix + " " + phrase;
}

std::vector<std::string> render_sentences(const Trackbook& book,
                                          const PromptTemplate& tpl) {
  std::vector<std::string> out;
  out.reserve(book.phrases.size());
  for (const std::string& p : book.phrases) out.push_back(render_sentence(tpl, p));
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& sentences) {
  if (sentences.empty()) {
    throw std::runtime_error("vocabulary: empty sentence list");
  }
  std::set<std::string> words;
  for (const std::string& s : sentences) {
    for (const std::string& w : split_words(s)) words.insert(w);
  }
  Vocabulary v;
  v.id_to_word_ = {"<pad>", "<init>", "<eos>"};
  for (const std::string& w : words) {
    v.word_to_id_[w] = static_cast<int>(v.id_to_word_.size());
    v.id_to_word_.push_back(w);
  }
  return v;
}

int Vocabulary::id(const std::string& word) const {
  auto it = word_to_id_.find(word);
  if (it == word_to_id_.end()) {
    throw std::runtime_error("vocabulary: unknown word '" + word + "'");
  }
  return it->second;
}

bool Vocabulary::knows(const std::string& word) const {
  return word_to_id_.count(word) != 0;
}

const std::string& Vocabulary::word(int id) const {
  if (id < 0 || id >= size()) {
    throw std::runtime_error("vocabulary: id out of range: " + std::to_string(id));
  }
  return id_to_word_[id];
}

std::string Vocabulary::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  j["<pad>"] = kPad;
  j["<init>"] = kInit;
  j["<eos>"] = kEos;
  for (const auto& [w, i] : word_to_id_) j[w] = i;
  return j.dump(2);
}

std::vector<std::string> split_words(const std::string& sentence) {
  std::vector<std::string> words;
  std::istringstream in(sentence);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

TokenSequence tokenize(const std::string& sentence, const Vocabulary& vocab,
                       int length) {
  if (length < 3) {
    throw std::runtime_error("tokenize: length must be >= 3");
  }
  std::vector<std::string> words = split_words(sentence);
  const std::size_t max_words = static_cast<std::size_t>(length - 2);
  if (words.size() > max_words) words.resize(max_words);

  TokenSequence seq;
  seq.ids.reserve(static_cast<std::size_t>(length));
  seq.ids.push_back(Vocabulary::kInit);
  for (const std::string& w : words) seq.ids.push_back(vocab.id(w));
  seq.eos_pos = static_cast<int>(seq.ids.size());
  seq.ids.push_back(Vocabulary::kEos);
  seq.ids.resize(static_cast<std::size_t>(length), Vocabulary::kPad);
  return seq;
}

std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab) {
  if (seq.ids.empty() || seq.ids[0] != Vocabulary::kInit) {
    throw std::runtime_error("decode: sequence does not start with INIT");
  }
  std::vector<std::string> words;
  for (std::size_t i = 1; i < seq.ids.size(); ++i) {
    if (seq.ids[i] == Vocabulary::kEos) return words;
    words.push_back(vocab.word(seq.ids[i]));
  }
  throw std::runtime_error("decode: no EOS in sequence");
}

}  // namespace langtrack
