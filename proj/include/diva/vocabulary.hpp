#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace diva {

/// Token <-> id map. Ids are dense in [0, size()); the three special tokens
/// always occupy ids 0..2.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kUnk = 2;
  static constexpr std::string_view kPadToken = "[PAD]";
  static constexpr std::string_view kMaskToken = "[MASK]";
  static constexpr std::string_view kUnkToken = "[UNK]";

  Vocabulary();

  /// Builds from whitespace-tokenized texts: tokens seen at least `min_count`
  /// times, most frequent first (ties by token), capped at `max_size` entries
  /// including specials (0 = no cap).
  static Vocabulary build(std::span<const std::string> texts, std::size_t min_count = 1,
                          std::size_t max_size = 0);
  static Vocabulary from_tokens(std::span<const std::string> tokens);

  /// Newline-delimited token list, one token per line, line number = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int add(std::string_view token);
  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Lowercased whitespace tokenization.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace diva
