// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace langtrack {

// Ordered phrase dictionary covering common tracking cases. The default book
// ships as data/trackbook.txt (56 phrases) and is editable.
struct Trackbook {
  std::vector<std::string> phrases;
  std::string version = "v1";
};

// One phrase per line; "#" comments and blank lines skipped; phrases are
// lowercased and whitespace-normalized. Errors on duplicates and empty books.
Trackbook parse_trackbook(const std::string& text);
Trackbook load_trackbook(const std::string& path);

// render = prefix + " " + phrase; an empty prefix returns the phrase as-is.
struct PromptTemplate {
  std::string prefix;
};

std::string render_sentence(const PromptTemplate& tpl, const std::string& phrase);
std::vector<std::string> render_sentences(const Trackbook& book,
                                          const PromptTemplate& tpl);

// Closed word-level vocabulary over the rendered sentences. Reserved ids
// PAD=0, INIT=1, EOS=2; real words get dense ids from 3 in sorted order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kInit = 1;
  static constexpr int kEos = 2;

  static Vocabulary build(const std::vector<std::string>& sentences);

  int id(const std::string& word) const;  // throws on unknown words
  bool knows(const std::string& word) const;
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(id_to_word_.size()); }
  std::string to_json() const;

 private:
  std::map<std::string, int> word_to_id_;
  std::vector<std::string> id_to_word_;
};

// Fixed-length id sequence: [INIT, words..., EOS, PAD...]. Sentences longer
// than L-2 words are truncated before the EOS is placed.
struct TokenSequence {
  std::vector<int> ids;
  int eos_pos = -1;

  int length() const { return static_cast<int>(ids.size()); }
};

std::vector<std::string> split_words(const std::string& sentence);
TokenSequence tokenize(const std::string& sentence, const Vocabulary& vocab,
                       int length);
// Words between INIT and EOS, in order.
std::vector<std::string> decode(const TokenSequence& seq, const Vocabulary& vocab);

}  // namespace langtrack
