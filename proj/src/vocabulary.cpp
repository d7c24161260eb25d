#include "diva/vocabulary.hpp"

#include "diva/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace diva {

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kMaskToken);
  add(kUnkToken);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t min_count,
                             std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : texts) {
    for (auto& tok : tokenize(text)) ++counts[std::move(tok)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary vocab;
  for (const auto& [tok, count] : ranked) {
    if (count < min_count) break;
    if (max_size != 0 && vocab.size() >= max_size) break;
    vocab.add(tok);
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
  if (tokens.size() < 3 || tokens[0] != kPadToken || tokens[1] != kMaskToken || tokens[2] != kUnkToken) {
    throw DataError("vocabulary must start with " + std::string(kPadToken) + ", " +
                    std::string(kMaskToken) + ", " + std::string(kUnkToken));
  }
  Vocabulary vocab;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw DataError("duplicate vocabulary token: " + tokens[i]);
    vocab.add(tokens[i]);
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(tokens);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocabulary file " + path.string());
  for (const auto& tok : tokens_) out << tok << '\n';
}

int Vocabulary::add(std::string_view token) {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.emplace_back(token);
  ids_.emplace(tokens_.back(), id);
  return id;
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw DataError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const auto& tok : tokenize(text)) ids.push_back(id(tok));
  return ids;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace diva
