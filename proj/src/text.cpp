#include "vvla/text.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "vvla/errors.hpp"

namespace vvla {

namespace {

const char* kPadWord = "<pad>";
const char* kUnkWord = "<unk>";

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string describe(const ObjectSpec& o) { return std::string(color_name(o.color)) + " " + shape_name(o.shape); }

}  // namespace

Vocab::Vocab(std::vector<std::string> words) {
  std::set<std::string> unique(words.begin(), words.end());
  unique.erase(kPadWord);
  unique.erase(kUnkWord);
  words_ = {kPadWord, kUnkWord};
  words_.insert(words_.end(), unique.begin(), unique.end());
  for (std::size_t i = 0; i < words_.size(); ++i) ids_[words_[i]] = static_cast<int>(i);
}

Vocab Vocab::standard() {
  std::vector<std::string> words;
  for (const char* w : {"pick", "up", "the", "and", "place", "it", "on", "plate", "stack", "move", "near", "topple",
                        "bottle", "wipe", "stain", "with", "sponge", "take", "out", "of", "bowl"})
    words.emplace_back(w);
  for (int c = 0; c < kColorCount; ++c) words.emplace_back(color_name(static_cast<Color>(c)));
  for (Shape s : {Shape::disk, Shape::square, Shape::triangle}) words.emplace_back(shape_name(s));
  return Vocab(std::move(words));
}

Vocab Vocab::parse(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string line;
  int expect = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("vocab: line without tab: " + line);
    const std::string word = line.substr(0, tab);
    int id = -1;
    try {
      id = std::stoi(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw DataError("vocab: bad id in line: " + line);
    }
    if (id != expect++) throw DataError("vocab: ids must be dense and ordered");
    words.push_back(word);
  }
  if (words.size() < 2 || words[0] != kPadWord || words[1] != kUnkWord)
    throw DataError("vocab: reserved entries missing");
  Vocab v(words);
  if (v.words_ != words) throw DataError("vocab: words not sorted or not unique");
  return v;
}

int Vocab::id(const std::string& word) const {
  const auto it = ids_.find(word);
  return it == ids_.end() ? kUnkId : it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw DataError("vocab: id out of range");
  return words_[static_cast<std::size_t>(id)];
}

std::string Vocab::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < words_.size(); ++i) out += words_[i] + "\t" + std::to_string(i) + "\n";
  return out;
}

std::string instantiate_template(const TaskSpec& task) {
  const ObjectSpec& s = task.object(task.subject);
  switch (task.skill) {
    case Skill::pick_place:
      return "pick up the " + describe(s) + " and place it on the " + color_name(task.object(task.target).color) +
             " plate";
    case Skill::stack:
      return "stack the " + describe(s) + " on the " + describe(task.object(task.target));
    case Skill::move_near:
      return "move the " + describe(s) + " near the " + describe(task.object(task.target));
    case Skill::topple:
      return std::string("topple the ") + color_name(s.color) + " bottle";
    case Skill::wipe:
      return std::string("wipe the stain with the ") + color_name(s.color) + " sponge";
    case Skill::take_out:
      return "take the " + describe(s) + " out of the " + color_name(task.object(task.target).color) + " bowl";
  }
  throw UsageError("unknown skill");
}

std::vector<int> tokenize(const std::string& instruction, const Vocab& vocab, int length) {
  if (length < 1) throw UsageError("token length must be positive");
  std::vector<int> ids(static_cast<std::size_t>(length), kPadId);
  const auto words = split_words(instruction);
  const std::size_t n = std::min(words.size(), ids.size());
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id(words[i]);
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id == kPadId) continue;
    if (!out.empty()) out += ' ';
    out += vocab.word(id);
  }
  return out;
}

}  // namespace vvla
