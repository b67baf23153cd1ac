#include "knight/corpus_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>

#include <json.hpp>

#include "knight/error.hpp"
#include "knight/tokenizer.hpp"

namespace knight {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    auto c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }

  void flush_to(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
  }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> data, std::string source)
      : data_(std::move(data)), source_(std::move(source)) {}

  static ByteReader open(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw Error(ErrorCode::kTruncatedPayload, source_ + ": needed " + std::to_string(n) +
                                                    " bytes at offset " + std::to_string(pos_));
    }
  }
  std::string chars(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  void f32s(std::vector<float>& out, std::size_t n) {
    if (n > (data_.size() - pos_) / 4) need(n * 4);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(data_[pos_ + b]) << (8 * b);
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& source() const noexcept { return source_; }

 private:
  std::vector<unsigned char> data_;
  std::string source_;
  std::size_t pos_ = 0;
};

template <typename V>
EmbeddingMatrix matrix_from(std::span<const V> vectors, std::uint32_t dim_if_empty) {
  EmbeddingMatrix m;
  m.dim = vectors.empty() ? dim_if_empty : static_cast<std::uint32_t>(vectors.front().dim());
  m.data.reserve(vectors.size() * m.dim);
  for (const auto& v : vectors) {
    if (v.dim() != m.dim) {
      throw Error(ErrorCode::kDimMismatch,
                  "vector dim " + std::to_string(v.dim()) + ", expected " + std::to_string(m.dim));
    }
    auto vals = v.values();
    m.data.insert(m.data.end(), vals.begin(), vals.end());
  }
  return m;
}

// Calls `fn(line_number, parsed_object)` for every line of a JSONL file.
void for_each_json_line(const fs::path& path, const std::function<void(std::size_t, const json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": not an object");
    }
    try {
      fn(line_no, obj);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

CaptionId read_id(const json& obj) {
  const json& id = obj.at("id");
  if (!id.is_number_integer() || (!id.is_number_unsigned() && id.get<std::int64_t>() < 0)) {
    throw std::invalid_argument("\"id\" must be a non-negative integer");
  }
  return id.get<CaptionId>();
}

void write_json_lines(const std::vector<json>& objs, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
  for (const auto& o : objs) out << o.dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace

EmbeddingMatrix EmbeddingMatrix::from_vectors(std::span<const EmbeddingVector> vectors, std::uint32_t dim_if_empty) {
  return matrix_from(vectors, dim_if_empty);
}
EmbeddingMatrix EmbeddingMatrix::from_vectors(std::span<const NormalizedEmbedding> vectors,
                                              std::uint32_t dim_if_empty) {
  return matrix_from(vectors, dim_if_empty);
}

void write_embeddings(const EmbeddingMatrix& m, const fs::path& path) {
  if (m.dim == 0 && !m.data.empty()) throw Error(ErrorCode::kDimMismatch, "dim 0 with nonempty payload");
  if (m.dim != 0 && m.data.size() % m.dim != 0) {
    throw Error(ErrorCode::kDimMismatch, "payload size is not a multiple of dim");
  }
  ByteWriter w;
  w.bytes("KNEM", 4);
  w.u32(kKnemVersion);
  w.u64(m.count());
  w.u32(m.dim);
  w.u32(0);
  for (float f : m.data) w.f32(f);
  w.flush_to(path);
}

EmbeddingMatrix read_embeddings(const fs::path& path) {
  ByteReader r = ByteReader::open(path);
  if (r.remaining() < 4 || r.chars(4) != "KNEM") throw Error(ErrorCode::kBadMagic, path.string());
  const std::uint32_t version = r.u32();
  if (version != kKnemVersion) {
    throw Error(ErrorCode::kBadVersion, path.string() + ": version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  EmbeddingMatrix m;
  m.dim = r.u32();
  r.u32();  // reserved
  if (count != 0 && m.dim == 0) throw Error(ErrorCode::kDimMismatch, path.string() + ": dim 0");
  if (m.dim != 0 && count > r.remaining() / 4 / m.dim) {
    throw Error(ErrorCode::kTruncatedPayload, path.string() + ": header promises " + std::to_string(count) +
                                                  " rows of dim " + std::to_string(m.dim));
  }
  r.f32s(m.data, static_cast<std::size_t>(count) * m.dim);
  return m;
}

std::vector<NormalizedEmbedding> normalized_rows(const EmbeddingMatrix& m) {
  std::vector<NormalizedEmbedding> out;
  out.reserve(m.count());
  for (std::size_t i = 0; i < m.count(); ++i) out.push_back(normalize(m.row(i)));
  return out;
}

std::vector<CaptionLine> read_captions(const fs::path& path) {
  std::vector<CaptionLine> lines;
  for_each_json_line(path, [&](std::size_t line_no, const json& obj) {
    CaptionLine line{read_id(obj), obj.at("text").get<std::string>()};
    if (!has_content(line.text)) {
      throw Error(ErrorCode::kMalformedLine, path.string() + ":" + std::to_string(line_no) + ": empty text");
    }
    lines.push_back(std::move(line));
  });
  return lines;
}

void write_captions(std::span<const CaptionLine> lines, const fs::path& path) {
  std::vector<json> objs;
  for (const auto& l : lines) objs.push_back({{"id", l.id}, {"text", l.text}});
  write_json_lines(objs, path);
}

std::vector<CaptionRecord> load_corpus(const fs::path& captions_path, const fs::path& embeddings_path) {
  auto lines = read_captions(captions_path);
  auto matrix = read_embeddings(embeddings_path);
  if (lines.size() != matrix.count()) {
    throw Error(ErrorCode::kCountMismatch, captions_path.string() + " has " + std::to_string(lines.size()) +
                                               " lines, " + embeddings_path.string() + " has " +
                                               std::to_string(matrix.count()) + " rows");
  }
  std::vector<CaptionRecord> records;
  records.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    records.push_back(CaptionRecord{lines[i].id, std::move(lines[i].text), normalize(matrix.row(i))});
  }
  return records;
}

std::size_t Tensor::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void save_checkpoint(const NamedTensors& tensors, const fs::path& path) {
  std::set<std::string> seen;
  ByteWriter w;
  w.bytes("KNCK", 4);
  w.u32(kKnckVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!seen.insert(name).second) throw Error(ErrorCode::kDuplicateTensor, name);
    if (t.element_count() != t.data.size()) {
      throw Error(ErrorCode::kShapeMismatch, name + ": payload does not match dims");
    }
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u32(d);
    for (float f : t.data) w.f32(f);
  }
  w.flush_to(path);
}

NamedTensors load_checkpoint(const fs::path& path) {
  ByteReader r = ByteReader::open(path);
  if (r.remaining() < 4 || r.chars(4) != "KNCK") throw Error(ErrorCode::kBadMagic, path.string());
  const std::uint32_t version = r.u32();
  if (version != kKnckVersion) {
    throw Error(ErrorCode::kBadVersion, path.string() + ": version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  NamedTensors out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.chars(r.u32());
    if (!seen.insert(name).second) throw Error(ErrorCode::kDuplicateTensor, name);
    Tensor t;
    t.dims.resize(r.u32());
    for (auto& d : t.dims) d = r.u32();
    r.f32s(t.data, t.element_count());
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

std::vector<CandidateLine> read_candidates(const fs::path& path) {
  std::vector<CandidateLine> out;
  for_each_json_line(path, [&](std::size_t, const json& obj) {
    out.push_back(CandidateLine{read_id(obj), obj.at("caption").get<std::string>()});
  });
  return out;
}

std::vector<ReferenceLine> read_references(const fs::path& path) {
  std::vector<ReferenceLine> out;
  for_each_json_line(path, [&](std::size_t line_no, const json& obj) {
    ReferenceLine line{read_id(obj), obj.at("captions").get<std::vector<std::string>>()};
    if (line.captions.empty()) {
      throw Error(ErrorCode::kMalformedLine,
                  path.string() + ":" + std::to_string(line_no) + ": \"captions\" is empty");
    }
    out.push_back(std::move(line));
  });
  return out;
}

void write_candidates(std::span<const CandidateLine> lines, const fs::path& path) {
  std::vector<json> objs;
  for (const auto& l : lines) objs.push_back({{"id", l.id}, {"caption", l.caption}});
  write_json_lines(objs, path);
}

void write_references(std::span<const ReferenceLine> lines, const fs::path& path) {
  std::vector<json> objs;
  for (const auto& l : lines) objs.push_back({{"id", l.id}, {"captions", l.captions}});
  write_json_lines(objs, path);
}

}  // namespace knight
