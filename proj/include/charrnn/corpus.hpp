#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charrnn/rng.hpp"

namespace charrnn {

using Index = std::int32_t;

/// Reads a UTF-8 file and returns its code points. Invalid sequences raise an
/// encoding error naming the byte offset.
std::u32string load_corpus(const std::filesystem::path& path);

std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view text);

/// Bijective character <-> index map, ordered by code point.
class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(std::u32string_view text);
  /// Rebuilds from an index-ordered list (e.g. a checkpoint header). The list
  /// must be strictly increasing.
  static Vocabulary from_chars(std::vector<char32_t> chars);

  std::size_t size() const noexcept { return idx2char_.size(); }
  bool contains(char32_t c) const { return char2idx_.count(c) != 0; }
  Index index_of(char32_t c) const;
  char32_t char_at(Index i) const;
  const std::vector<char32_t>& chars() const noexcept { return idx2char_; }

  std::vector<Index> encode(std::u32string_view text) const;
  std::u32string decode(std::span<const Index> indices) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.idx2char_ == b.idx2char_;
  }

 private:
  std::unordered_map<char32_t, Index> char2idx_;
  std::vector<char32_t> idx2char_;
};

struct CorpusPlan {
  std::size_t seq_len = 100;
  std::size_t batch_size = 64;
  std::uint64_t shuffle_seed = 0;
};

struct SequencePair {
  std::vector<Index> input;
  std::vector<Index> target;

  friend bool operator==(const SequencePair&, const SequencePair&) = default;
  friend auto operator<=>(const SequencePair&, const SequencePair&) = default;
};

/// Row-major integer matrix [batch x length] of inputs and shifted targets.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<Index> inputs;
  std::vector<Index> targets;

  Index input(std::size_t b, std::size_t t) const {
    return inputs[b * length + t];
  }
  Index target(std::size_t b, std::size_t t) const {
    return targets[b * length + t];
  }
};

/// Cuts the stream into consecutive non-overlapping chunks of seq_len + 1;
/// each chunk gives input = chunk[0..L) and target = chunk[1..L]. A short tail
/// is dropped.
std::vector<SequencePair> make_sequences(std::span<const Index> indices,
                                         const CorpusPlan& plan);

/// Fisher-Yates permutation with `rng`, then grouping into full batches. The
/// final partial batch is dropped.
std::vector<SequenceBatch> shuffle_batches(std::vector<SequencePair> pairs,
                                           const CorpusPlan& plan, Rng& rng);

/// Readable form of a character: \n, \t, \r, \\ and other control
/// characters are escaped.
std::string escape_char(char32_t c);

}  // namespace charrnn
