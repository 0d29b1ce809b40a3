#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmeasures/binary_io.hpp"
#include "tmeasures/core.hpp"
#include "tmeasures/data.hpp"
#include "tmeasures/error.hpp"

namespace tmeasures {

inline nlohmann::json manifest_to_json(const ActivationManifest& manifest) {
  auto out = nlohmann::json::array();
  for (const auto& e : manifest.entries()) {
    out.push_back({{"name", e.name}, {"layer_index", e.layer_index}, {"shape", e.shape}, {"kind", to_string(e.kind)}});
  }
  return out;
}

inline ActivationManifest manifest_from_json(const nlohmann::json& j) {
  std::vector<ManifestEntry> entries;
  try {
    for (const auto& ej : j) {
      ManifestEntry e;
      e.name = ej.at("name").get<std::string>();
      e.layer_index = ej.at("layer_index").get<std::size_t>();
      e.shape = ej.at("shape").get<std::vector<std::size_t>>();
      e.kind = parse_activation_kind(ej.at("kind").get<std::string>());
      entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error("format-error", std::string("malformed activation manifest: ") + e.what());
  }
  try {
    return ActivationManifest(std::move(entries));
  } catch (const Error& e) {
    throw Error("format-error", e.what());
  }
}

/// STDUMP v1 container:
///   "STDM" | u32 LE version (1) | u64 LE metadata length | JSON metadata |
///   n·m records of k little-endian f32 values in the declared order.
struct StDumpHeader {
  ActivationManifest manifest;
  std::size_t n = 0;
  std::size_t m = 0;
  PassOrder order = PassOrder::sample_major;
  // Optional metadata (transformations, identity_index, provenance, ...).
  nlohmann::json extra = nlohmann::json::object();

  STShape shape() const { return {n, m, manifest.activation_count()}; }
  std::size_t record_bytes() const { return 4 * manifest.activation_count(); }

  nlohmann::json metadata() const {
    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["n"] = n;
    meta["m"] = m;
    meta["k_entries"] = manifest_to_json(manifest);
    meta["order"] = to_string(order);
    meta["dtype"] = "f32le";
    return meta;
  }

  std::size_t record_index(const Cell& c) const {
    return order == PassOrder::sample_major ? c.sample * m + c.transformation : c.transformation * n + c.sample;
  }

  Cell cell_at(std::size_t index) const {
    return order == PassOrder::sample_major ? Cell{index / m, index % m} : Cell{index % n, index / n};
  }
};

inline constexpr std::uint32_t kStDumpVersion = 1;

inline std::string encode_stdump_header(const StDumpHeader& header) {
  const std::string meta = header.metadata().dump();
  std::string out = "STDM";
  io::append_u32_le(out, kStDumpVersion);
  io::append_u64_le(out, meta.size());
  out += meta;
  return out;
}

inline StDumpHeader parse_stdump_metadata(const nlohmann::json& meta) {
  StDumpHeader h;
  try {
    if (meta.at("dtype").get<std::string>() != "f32le") throw Error("format-error", "unsupported dtype");
    h.n = meta.at("n").get<std::size_t>();
    h.m = meta.at("m").get<std::size_t>();
    h.order = parse_pass_order(meta.at("order").get<std::string>());
    h.manifest = manifest_from_json(meta.at("k_entries"));
  } catch (const nlohmann::json::exception& e) {
    throw Error("format-error", std::string("malformed STDUMP metadata: ") + e.what());
  }
  if (h.manifest.empty()) throw Error("format-error", "STDUMP declares no activations");
  h.extra = meta;
  for (const char* key : {"n", "m", "k_entries", "order", "dtype"}) h.extra.erase(key);
  return h;
}

/// Streams records to an STDUMP file; records must arrive in the declared order.
class StDumpWriter {
 public:
  StDumpWriter(const std::filesystem::path& path, StDumpHeader header)
      : header_(std::move(header)), out_(path, std::ios::binary), path_(path) {
    if (!out_) throw Error("write-error", "cannot create '" + path.string() + "'");
    const auto head = encode_stdump_header(header_);
    out_.write(head.data(), static_cast<std::streamsize>(head.size()));
    buffer_.reserve(header_.record_bytes());
  }

  void write(const STRecord& record) {
    if (written_ >= header_.n * header_.m) throw Error("format-error", "more records than n·m");
    const Cell expected = header_.cell_at(written_);
    if (record.sample_index != expected.sample || record.transformation_index != expected.transformation) {
      throw Error("format-error", "record out of declared order");
    }
    if (record.values.size() != header_.manifest.activation_count()) throw Error("shape-error", "record has the wrong number of values");
    buffer_.clear();
    for (double v : record.values) io::append_f32_le(buffer_, static_cast<float>(v));
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    ++written_;
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    out_.flush();
    if (!out_) throw Error("write-error", "failed writing '" + path_.string() + "'");
    if (written_ != header_.n * header_.m) throw Error("truncated-file", "wrote " + std::to_string(written_) + " of n·m records");
    out_.close();
  }

  ~StDumpWriter() {
    if (!closed_) out_.close();
  }

  std::size_t written() const { return written_; }

 private:
  StDumpHeader header_;
  std::ofstream out_;
  std::filesystem::path path_;
  std::string buffer_;
  std::size_t written_ = 0;
  bool closed_ = false;
};

/// Sequential cursor over an STDUMP file with optional random access.
class StDumpReader {
 public:
  explicit StDumpReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("io-error", "cannot open '" + path.string() + "'");
    unsigned char head[16];
    io::read_exact(in_, head, 4, "STDUMP magic");
    if (std::string(reinterpret_cast<char*>(head), 4) != "STDM") throw Error("format-error", "bad STDUMP magic");
    io::read_exact(in_, head + 4, 12, "STDUMP header");
    if (io::load_u32_le(head + 4) != kStDumpVersion) throw Error("format-error", "unsupported STDUMP version");
    const std::uint64_t meta_len = io::load_u64_le(head + 8);

    in_.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::uint64_t>(in_.tellg());
    if (file_size < 16 || file_size - 16 < meta_len) throw Error("truncated-file", "STDUMP metadata");
    in_.seekg(16);
    std::string meta(meta_len, '\0');
    io::read_exact(in_, reinterpret_cast<unsigned char*>(meta.data()), meta_len, "STDUMP metadata");
    try {
      header_ = parse_stdump_metadata(nlohmann::json::parse(meta));
    } catch (const nlohmann::json::parse_error& e) {
      throw Error("format-error", std::string("STDUMP metadata is not valid JSON: ") + e.what());
    }
    data_start_ = 16 + meta_len;
    const std::uint64_t expected = data_start_ + static_cast<std::uint64_t>(header_.n) * header_.m * header_.record_bytes();
    if (file_size != expected) {
      throw Error("truncated-file", "STDUMP holds " + std::to_string((file_size - data_start_) / std::max<std::size_t>(1, header_.record_bytes())) +
                                        " records, expected n·m = " + std::to_string(header_.n * header_.m));
    }
    bytes_.resize(header_.record_bytes());
  }

  const StDumpHeader& header() const { return header_; }
  STShape shape() const { return header_.shape(); }
  std::size_t position() const { return position_; }

  /// Reads the next record in file order; returns false at the end.
  bool next(STRecord& record) {
    if (position_ >= header_.n * header_.m) return false;
    io::read_exact(in_, bytes_.data(), bytes_.size(), "STDUMP record");
    const Cell c = header_.cell_at(position_);
    record.sample_index = c.sample;
    record.transformation_index = c.transformation;
    record.values.resize(header_.manifest.activation_count());
    io::decode_f32_le(bytes_, record.values);
    ++position_;
    return true;
  }

  void seek(std::size_t record_index) {
    if (record_index > header_.n * header_.m) throw Error("invalid-argument", "seek past the end of the dump");
    if (record_index == position_) return;
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(data_start_ + record_index * header_.record_bytes()));
    position_ = record_index;
  }

  void read(const Cell& cell, STRecord& record) {
    seek(header_.record_index(cell));
    next(record);
  }

 private:
  std::ifstream in_;
  StDumpHeader header_;
  std::uint64_t data_start_ = 0;
  std::size_t position_ = 0;
  std::vector<unsigned char> bytes_;
};

}  // namespace tmeasures
