#include "charrnn/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "charrnn/error.hpp"

namespace charrnn {

std::u32string decode_utf8(std::string_view bytes) {
  std::u32string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const auto fail = [&](const char* why) {
    throw Error(ErrorCode::encoding, std::string("invalid UTF-8 at byte offset ") +
                                         std::to_string(i) + ": " + why);
  };
  while (i < bytes.size()) {
    const auto b0 = static_cast<unsigned char>(bytes[i]);
    std::size_t len;
    char32_t cp;
    if (b0 < 0x80) {
      out.push_back(b0);
      ++i;
      continue;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    } else {
      fail("bad lead byte");
    }
    if (i + len > bytes.size()) fail("truncated sequence");
    for (std::size_t k = 1; k < len; ++k) {
      const auto bk = static_cast<unsigned char>(bytes[i + k]);
      if ((bk & 0xC0) != 0x80) fail("bad continuation byte");
      cp = (cp << 6) | (bk & 0x3F);
    }
    const char32_t min_for_len[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < min_for_len[len]) fail("overlong encoding");
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      fail("code point out of range");
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

std::u32string load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot open corpus file '" + path.string() + "'");
  }
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) {
    throw Error(ErrorCode::io, "failed reading corpus file '" + path.string() + "'");
  }
  return decode_utf8(bytes);
}

Vocabulary Vocabulary::build(std::u32string_view text) {
  if (text.empty()) {
    throw Error(ErrorCode::corpus, "cannot build a vocabulary from empty text");
  }
  std::set<char32_t> distinct(text.begin(), text.end());
  return from_chars(std::vector<char32_t>(distinct.begin(), distinct.end()));
}

Vocabulary Vocabulary::from_chars(std::vector<char32_t> chars) {
  if (chars.empty()) throw Error(ErrorCode::vocabulary, "vocabulary is empty");
  Vocabulary v;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (i > 0 && chars[i] <= chars[i - 1]) {
      throw Error(ErrorCode::vocabulary,
                  "vocabulary characters must be strictly increasing (index " +
                      std::to_string(i) + ")");
    }
    v.char2idx_.emplace(chars[i], static_cast<Index>(i));
  }
  v.idx2char_ = std::move(chars);
  return v;
}

Index Vocabulary::index_of(char32_t c) const {
  const auto it = char2idx_.find(c);
  if (it == char2idx_.end()) {
    throw Error(ErrorCode::vocabulary,
                "character '" + escape_char(c) + "' is not in the vocabulary");
  }
  return it->second;
}

char32_t Vocabulary::char_at(Index i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= idx2char_.size()) {
    throw Error(ErrorCode::vocabulary,
                "index " + std::to_string(i) + " is outside vocabulary of size " +
                    std::to_string(idx2char_.size()));
  }
  return idx2char_[static_cast<std::size_t>(i)];
}

std::vector<Index> Vocabulary::encode(std::u32string_view text) const {
  std::vector<Index> out;
  out.reserve(text.size());
  for (std::size_t pos = 0; pos < text.size(); ++pos) {
    const auto it = char2idx_.find(text[pos]);
    if (it == char2idx_.end()) {
      throw Error(ErrorCode::vocabulary,
                  "character '" + escape_char(text[pos]) + "' at position " +
                      std::to_string(pos) + " is not in the vocabulary");
    }
    out.push_back(it->second);
  }
  return out;
}

std::u32string Vocabulary::decode(std::span<const Index> indices) const {
  std::u32string out;
  out.reserve(indices.size());
  for (std::size_t pos = 0; pos < indices.size(); ++pos) {
    const Index i = indices[pos];
    if (i < 0 || static_cast<std::size_t>(i) >= idx2char_.size()) {
      throw Error(ErrorCode::vocabulary,
                  "index " + std::to_string(i) + " at position " +
                      std::to_string(pos) + " is outside vocabulary of size " +
                      std::to_string(idx2char_.size()));
    }
    out.push_back(idx2char_[static_cast<std::size_t>(i)]);
  }
  return out;
}

std::vector<SequencePair> make_sequences(std::span<const Index> indices,
                                         const CorpusPlan& plan) {
  if (plan.seq_len == 0) {
    throw Error(ErrorCode::config, "sequence length must be at least 1");
  }
  const std::size_t chunk = plan.seq_len + 1;
  if (indices.size() < chunk) {
    throw Error(ErrorCode::corpus,
                "corpus has " + std::to_string(indices.size()) +
                    " characters; at least " + std::to_string(chunk) +
                    " are required for sequence length " +
                    std::to_string(plan.seq_len));
  }
  std::vector<SequencePair> pairs;
  pairs.reserve(indices.size() / chunk);
  for (std::size_t start = 0; start + chunk <= indices.size(); start += chunk) {
    const auto window = indices.subspan(start, chunk);
    pairs.push_back({{window.begin(), window.end() - 1},
                     {window.begin() + 1, window.end()}});
  }
  return pairs;
}

std::vector<SequenceBatch> shuffle_batches(std::vector<SequencePair> pairs,
                                           const CorpusPlan& plan, Rng& rng) {
  if (plan.batch_size == 0) {
    throw Error(ErrorCode::config, "batch size must be at least 1");
  }
  for (std::size_t i = pairs.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(pairs[i - 1], pairs[j]);
  }
  const std::size_t full = pairs.size() / plan.batch_size;
  if (full == 0) {
    throw Error(ErrorCode::corpus,
                std::to_string(pairs.size()) +
                    " sequences cannot fill one batch of " +
                    std::to_string(plan.batch_size));
  }
  std::vector<SequenceBatch> batches;
  batches.reserve(full);
  for (std::size_t n = 0; n < full; ++n) {
    SequenceBatch batch;
    batch.batch = plan.batch_size;
    batch.length = pairs[n * plan.batch_size].input.size();
    batch.inputs.reserve(batch.batch * batch.length);
    batch.targets.reserve(batch.batch * batch.length);
    for (std::size_t b = 0; b < plan.batch_size; ++b) {
      const SequencePair& p = pairs[n * plan.batch_size + b];
      batch.inputs.insert(batch.inputs.end(), p.input.begin(), p.input.end());
      batch.targets.insert(batch.targets.end(), p.target.begin(), p.target.end());
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::string escape_char(char32_t c) {
  switch (c) {
    case U'\n': return "\\n";
    case U'\t': return "\\t";
    case U'\r': return "\\r";
    case U'\\': return "\\\\";
    default: break;
  }
  if (c < 0x20 || c == 0x7F) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "\\x%02X", static_cast<unsigned>(c));
    return buf;
  }
  return encode_utf8(std::u32string_view(&c, 1));
}

}  // namespace charrnn
