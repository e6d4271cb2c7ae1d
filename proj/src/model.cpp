#include "charrnn/model.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <system_error>

#include <json.hpp>

#include "charrnn/error.hpp"

namespace charrnn {

const char* to_string(CellKind kind) noexcept {
  switch (kind) {
    case CellKind::lstm: return "lstm";
    case CellKind::gru: return "gru";
    case CellKind::birnn: return "birnn";
  }
  return "?";
}

CellKind parse_cell_kind(std::string_view name) {
  if (name == "lstm") return CellKind::lstm;
  if (name == "gru") return CellKind::gru;
  if (name == "birnn") return CellKind::birnn;
  throw Error(ErrorCode::config, "unknown model kind '" + std::string(name) +
                                     "' (expected lstm, gru or birnn)");
}

std::vector<std::size_t> preset_widths(std::string_view preset, double scale) {
  std::vector<std::size_t> widths;
  if (preset == "uni") {
    widths = {1024};
  } else if (preset == "bi") {
    widths = {512, 256};
  } else if (preset == "quad") {
    widths = {512, 256, 128, 64};
  } else {
    throw Error(ErrorCode::config, "unknown preset '" + std::string(preset) +
                                       "' (valid presets: uni, bi, quad)");
  }
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw Error(ErrorCode::config, "preset scale must be in (0, 1]");
  }
  for (std::size_t& w : widths) {
    w = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(w) * scale)));
  }
  return widths;
}

void ModelConfig::validate() const {
  const auto fail = [](const std::string& what) {
    throw Error(ErrorCode::config, what);
  };
  if (layer_widths.empty()) fail("at least one recurrent layer is required");
  for (std::size_t w : layer_widths) {
    if (w == 0) fail("layer widths must be positive");
  }
  if (embed_dim == 0) fail("embedding dimension must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    fail("dropout must be in [0, 1), got " + std::to_string(dropout));
  }
  if (seq_len == 0) fail("sequence length must be positive");
  if (batch_size == 0) fail("batch size must be positive");
  if (vocab_size == 0) fail("vocabulary size must be positive");
}

std::size_t parameter_count(const ModelConfig& config) {
  const std::size_t V = config.vocab_size;
  std::size_t total = V * config.embed_dim;
  std::size_t in = config.embed_dim;
  for (std::size_t H : config.layer_widths) {
    switch (config.kind) {
      case CellKind::lstm:
        total += 4 * H * (in + H + 1);
        in = H;
        break;
      case CellKind::gru:
        total += 3 * H * (in + H + 1);
        in = H;
        break;
      case CellKind::birnn:
        total += 2 * 4 * H * (in + H + 1);
        in = 2 * H;
        break;
    }
  }
  return total + in * V + V;
}

Model::Model(ModelConfig config, Vocabulary vocab)
    : config_(std::move(config)), vocab_(std::move(vocab)) {
  config_.vocab_size = vocab_.size();
  config_.validate();

  const std::size_t V = config_.vocab_size;
  net_.embedding = Tensor({V, config_.embed_dim});
  std::size_t in = config_.embed_dim;
  for (std::size_t H : config_.layer_widths) {
    switch (config_.kind) {
      case CellKind::lstm:
        net_.layers.emplace_back(LstmLayer(in, H));
        in = H;
        break;
      case CellKind::gru:
        net_.layers.emplace_back(GruLayer(in, H));
        in = H;
        break;
      case CellKind::birnn:
        net_.layers.emplace_back(BidirectionalLayer(in, H));
        in = 2 * H;
        break;
    }
  }
  net_.dense_w = Tensor({in, V});
  net_.dense_b = Tensor({V});
  net_.dropout = config_.dropout;

  Rng rng(config_.init_seed);
  net_.initialize(rng, config_.forget_bias);
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->size();
  return n;
}

ForwardPass Model::forward(const SequenceBatch& batch, Mode mode,
                           Rng* dropout_rng) const {
  if (mode == Mode::train && batch.batch != config_.batch_size) {
    throw Error(ErrorCode::shape, "train-mode batch has " +
                                      std::to_string(batch.batch) +
                                      " rows, model is configured for " +
                                      std::to_string(config_.batch_size));
  }
  return net_.forward(batch.inputs, batch.batch, batch.length, mode, dropout_rng);
}

Model rebuild_for_generation(const Model& trained) {
  Model m = trained;
  m.set_batch_size(1);
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint format

namespace {

constexpr char kMagic[4] = {'C', 'R', 'N', 'F'};
constexpr std::size_t kPrefix = 8;  // magic + version

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(std::string_view in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - off, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off),
                  static_cast<uInt>(n));
    off += n;
  }
  return static_cast<std::uint32_t>(crc);
}

nlohmann::json header_json(const Model& model) {
  const ModelConfig& c = model.config();
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  j["layer_widths"] = c.layer_widths;
  j["embed_dim"] = c.embed_dim;
  j["dropout"] = c.dropout;
  j["seq_len"] = c.seq_len;
  j["batch_size"] = c.batch_size;
  j["vocab_size"] = c.vocab_size;
  j["init_seed"] = c.init_seed;
  j["forget_bias"] = c.forget_bias;
  std::vector<std::uint32_t> cps;
  for (char32_t ch : model.vocab().chars()) cps.push_back(static_cast<std::uint32_t>(ch));
  j["vocab"] = cps;
  return j;
}

[[noreturn]] void format_error(const std::string& what, std::size_t offset) {
  throw Error(ErrorCode::format,
              "checkpoint " + what + " at byte offset " + std::to_string(offset));
}

// Tensor count implied by a header, or nothing if it does not parse.
std::optional<std::size_t> expected_tensor_count(std::string_view header) {
  try {
    const auto j = nlohmann::json::parse(header);
    const auto kind = parse_cell_kind(j.at("kind").get<std::string>());
    const std::size_t layers = j.at("layer_widths").size();
    return 3 + layers * (kind == CellKind::birnn ? 6 : 3);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string checkpoint_header(const Model& model) {
  return header_json(model).dump();
}

std::string serialize_checkpoint(const Model& model) {
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  const std::string header = checkpoint_header(model);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;
  for (const Tensor* p : model.parameters()) {
    put_u32(out, static_cast<std::uint32_t>(p->rank()));
    for (std::size_t d : p->dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->data()) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  put_u32(out, crc32_of(std::string_view(out).substr(kPrefix)));
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    format_error("has bad magic (expected \"CRNF\")", 0);
  }
  if (bytes.size() < kPrefix + 4 + 4) format_error("is truncated", bytes.size());
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    format_error("has unsupported version " + std::to_string(version), 4);
  }
  const std::size_t body_end = bytes.size() - 4;

  // Structural walk first so truncation is reported as such, then the CRC.
  std::size_t off = kPrefix;
  const std::uint32_t header_len = get_u32(bytes, off);
  off += 4;
  if (header_len > body_end - off) format_error("header is truncated", off);
  const std::size_t header_at = off;
  off += header_len;
  struct Slice {
    std::vector<std::size_t> dims;
    std::size_t values_at;
  };
  std::vector<Slice> slices;
  while (off < body_end) {
    if (body_end - off < 4) format_error("tensor record is truncated", off);
    const std::uint32_t rank = get_u32(bytes, off);
    if (rank == 0 || rank > 3) {
      format_error("has invalid tensor rank " + std::to_string(rank), off);
    }
    off += 4;
    if (body_end - off < 4ull * rank) format_error("tensor dims are truncated", off);
    Slice s;
    std::size_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const std::uint32_t d = get_u32(bytes, off);
      if (d == 0) format_error("has a zero tensor dimension", off);
      s.dims.push_back(d);
      count *= d;
      if (count > body_end) format_error("tensor is truncated", off);
      off += 4;
    }
    if (body_end - off < 4 * count) format_error("tensor values are truncated", off);
    s.values_at = off;
    off += 4 * count;
    slices.push_back(std::move(s));
  }

  const std::uint32_t stored = get_u32(bytes, body_end);
  const std::uint32_t actual = crc32_of(bytes.substr(kPrefix, body_end - kPrefix));
  if (stored != actual) {
    // A cut on a record boundary walks cleanly; the header tells how many
    // tensors should have followed.
    if (const auto expected = expected_tensor_count(bytes.substr(header_at, header_len));
        expected && *expected > slices.size()) {
      format_error("is truncated after " + std::to_string(slices.size()) + " of " +
                       std::to_string(*expected) + " tensors",
                   bytes.size());
    }
    throw Error(ErrorCode::integrity, "checkpoint CRC-32 mismatch (stored " +
                                          std::to_string(stored) + ", computed " +
                                          std::to_string(actual) + ")");
  }

  ModelConfig config;
  Vocabulary vocab;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(header_at, header_len));
    config.kind = parse_cell_kind(j.at("kind").get<std::string>());
    config.layer_widths = j.at("layer_widths").get<std::vector<std::size_t>>();
    config.embed_dim = j.at("embed_dim").get<std::size_t>();
    config.dropout = j.at("dropout").get<double>();
    config.seq_len = j.at("seq_len").get<std::size_t>();
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.vocab_size = j.at("vocab_size").get<std::size_t>();
    config.init_seed = j.at("init_seed").get<std::uint64_t>();
    config.forget_bias = j.at("forget_bias").get<bool>();
    std::vector<char32_t> chars;
    for (std::uint32_t cp : j.at("vocab").get<std::vector<std::uint32_t>>()) {
      chars.push_back(static_cast<char32_t>(cp));
    }
    vocab = Vocabulary::from_chars(std::move(chars));
  } catch (const nlohmann::json::exception& e) {
    format_error(std::string("header is malformed (") + e.what() + ")", header_at);
  } catch (const Error& e) {
    throw Error(ErrorCode::integrity, std::string("checkpoint header: ") + e.what());
  }
  if (vocab.size() != config.vocab_size) {
    throw Error(ErrorCode::integrity,
                "checkpoint vocabulary has " + std::to_string(vocab.size()) +
                    " characters but config says " +
                    std::to_string(config.vocab_size));
  }

  Model model = [&] {
    try {
      return Model(config, vocab);
    } catch (const Error& e) {
      throw Error(ErrorCode::integrity, std::string("checkpoint config: ") + e.what());
    }
  }();
  auto params = model.parameters();
  if (params.size() != slices.size()) {
    throw Error(ErrorCode::integrity,
                "checkpoint holds " + std::to_string(slices.size()) +
                    " tensors, config implies " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& t = *params[k].value;
    if (t.dims() != slices[k].dims) {
      throw Error(ErrorCode::integrity,
                  "checkpoint tensor '" + params[k].name + "' has dims " +
                      format_dims(slices[k].dims) + ", config implies " +
                      format_dims(t.dims()));
    }
    auto data = t.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      data[i] = static_cast<double>(
          std::bit_cast<float>(get_u32(bytes, slices[k].values_at + 4 * i)));
    }
  }
  return model;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      out.close();
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(ErrorCode::io, "failed writing '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::io, "cannot move output into '" + path.string() + "'");
  }
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace charrnn
