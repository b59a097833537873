#pragma once

// Instruction templates and a fixed-length word tokenizer.

#include <map>
#include <string>
#include <vector>

#include "vvla/sim.hpp"

namespace vvla {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;

class Vocab {
 public:
  // Ids are assigned to the sorted unique words after the reserved entries.
  explicit Vocab(std::vector<std::string> words);

  // Closed vocabulary covering every template under every colour and shape.
  static Vocab standard();
  static Vocab parse(const std::string& text);

  int id(const std::string& word) const;
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }
  // "word<TAB>id" lines in id order.
  std::string to_text() const;

  friend bool operator==(const Vocab&, const Vocab&) = default;

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> ids_;
};

std::string instantiate_template(const TaskSpec& task);

// Whitespace split, vocabulary lookup, then truncate or pad to `length`.
std::vector<int> tokenize(const std::string& instruction, const Vocab& vocab, int length);

// Words for the non-pad ids, joined by single spaces.
std::string detokenize(const std::vector<int>& ids, const Vocab& vocab);

}  // namespace vvla
