#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmeasures/core.hpp"
#include "tmeasures/data.hpp"
#include "tmeasures/engine.hpp"
#include "tmeasures/error.hpp"
#include "tmeasures/network.hpp"
#include "tmeasures/stdump.hpp"
#include "tmeasures/transforms.hpp"

namespace tmeasures {

namespace detail {
inline std::string cell_context(const Cell& c) {
  return " at sample " + std::to_string(c.sample) + ", transformation " + std::to_string(c.transformation);
}
}  // namespace detail

/// Whole cube in memory, values laid out [sample][transformation][activation].
class CubeProvider : public ActivationProvider {
 public:
  CubeProvider(ActivationManifest manifest, std::size_t n, std::size_t m, std::vector<double> values,
               std::size_t identity = 0)
      : manifest_(std::move(manifest)), n_(n), m_(m), values_(std::move(values)), identity_(identity) {
    if (values_.size() != n_ * m_ * manifest_.activation_count()) throw Error("shape-error", "cube size does not match n·m·k");
  }

  /// Single scalar activation named "a" from an n×m matrix.
  static CubeProvider from_matrix(const STMatrix& st, std::size_t identity = 0) {
    ActivationManifest manifest({ManifestEntry{"a", 0, {1}, ActivationKind::scalar_vector}});
    return {std::move(manifest), st.n, st.m, st.values, identity};
  }

  const ActivationManifest& manifest() const override { return manifest_; }
  STShape shape() const override { return {n_, m_, manifest_.activation_count()}; }
  std::size_t identity_index() const override { return identity_; }

  void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool&) override {
    const std::size_t k = manifest_.activation_count();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.sample >= n_ || c.transformation >= m_) throw Error("invalid-argument", "cell out of range" + detail::cell_context(c));
      out[i].sample_index = c.sample;
      out[i].transformation_index = c.transformation;
      const double* src = values_.data() + (c.sample * m_ + c.transformation) * k;
      out[i].values.assign(src, src + k);
    }
  }


 private:
  ActivationManifest manifest_;
  std::size_t n_, m_;
  std::vector<double> values_;
  std::size_t identity_;
};

/// Computes each record on demand from a callback.
class GeneratorProvider : public ActivationProvider {
 public:
  using Generator = std::function<void(const Cell&, std::span<double>)>;

  GeneratorProvider(ActivationManifest manifest, std::size_t n, std::size_t m, Generator gen, std::size_t identity = 0)
      : manifest_(std::move(manifest)), n_(n), m_(m), gen_(std::move(gen)), identity_(identity) {}

  const ActivationManifest& manifest() const override { return manifest_; }
  STShape shape() const override { return {n_, m_, manifest_.activation_count()}; }
  std::size_t identity_index() const override { return identity_; }

  void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool& pool) override {
    const std::size_t k = manifest_.activation_count();
    pool.parallel_for(cells.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        out[i].sample_index = cells[i].sample;
        out[i].transformation_index = cells[i].transformation;
        out[i].values.resize(k);
        gen_(cells[i], out[i].values);
      }
    });
  }

 private:
  ActivationManifest manifest_;
  std::size_t n_, m_;
  Generator gen_;
  std::size_t identity_;
};

/// Built-in network over a dataset and transformation set; transformed images
/// are produced on the fly for every request.
class ModelProvider : public ActivationProvider {
 public:
  ModelProvider(std::shared_ptr<const Network> network, Dataset dataset, TransformationSet transforms,
                std::string model_id = "")
      : network_(std::move(network)), dataset_(std::move(dataset)), transforms_(std::move(transforms)),
        model_id_(std::move(model_id)) {
    const auto& in = network_->spec().input;
    if (dataset_.height != in.height || dataset_.width != in.width || dataset_.channels != in.channels) {
      throw Error("shape-error", "dataset images are " + std::to_string(dataset_.height) + "x" + std::to_string(dataset_.width) +
                                     "x" + std::to_string(dataset_.channels) + " but the network expects " +
                                     std::to_string(in.height) + "x" + std::to_string(in.width) + "x" + std::to_string(in.channels));
    }
  }

  const ActivationManifest& manifest() const override { return network_->manifest(); }
  STShape shape() const override { return {dataset_.size(), transforms_.size(), manifest().activation_count()}; }
  std::size_t identity_index() const override { return transforms_.identity_index(); }

  void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool& pool) override {
    const std::size_t k = manifest().activation_count();
    pool.parallel_for(cells.size(), [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) {
        const auto& c = cells[i];
        try {
          const ImageF img = apply(transforms_[c.transformation], dataset_.image(c.sample));
          out[i].sample_index = c.sample;
          out[i].transformation_index = c.transformation;
          out[i].values.resize(k);
          network_->forward(img, out[i].values);
        } catch (const Error& e) {
          throw Error(e.code(), std::string(e.what()) + detail::cell_context(c));
        }
      }
    });
  }

  nlohmann::json provenance() const override {
    return {{"dataset", dataset_.name}, {"transformations", transforms_.label()}, {"model", model_id_}};
  }

  const TransformationSet& transforms() const { return transforms_; }
  const Dataset& dataset() const { return dataset_; }

 private:
  std::shared_ptr<const Network> network_;
  Dataset dataset_;
  TransformationSet transforms_;
  std::string model_id_;
};

/// STDUMP file reader. Streams sequentially when requests follow file order
/// and seeks otherwise.
class DumpProvider : public ActivationProvider {
 public:
  explicit DumpProvider(const std::filesystem::path& path) : reader_(path), path_(path) {
    const auto& extra = reader_.header().extra;
    if (extra.contains("identity_index") && extra["identity_index"].is_number_unsigned()) {
      identity_ = extra["identity_index"].get<std::size_t>();
    }
  }

  const ActivationManifest& manifest() const override { return reader_.header().manifest; }
  STShape shape() const override { return reader_.shape(); }
  std::size_t identity_index() const override { return identity_; }
  std::optional<PassOrder> native_order() const override { return reader_.header().order; }

  void fetch(std::span<const Cell> cells, std::span<STRecord> out, const WorkerPool&) override {
    const auto& h = reader_.header();
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& c = cells[i];
      if (c.sample >= h.n || c.transformation >= h.m) throw Error("invalid-argument", "cell out of range" + detail::cell_context(c));
      const std::size_t index = h.record_index(c);
      if (index != reader_.position()) {
        reader_.seek(index);
        ++seeks_;
      }
      reader_.next(out[i]);
    }
  }

  nlohmann::json provenance() const override {
    nlohmann::json p = reader_.header().extra;
    p["dump"] = path_.filename().string();
    return p;
  }

  std::size_t seeks() const { return seeks_; }

 private:
  StDumpReader reader_;
  std::filesystem::path path_;
  std::size_t identity_ = 0;
  std::size_t seeks_ = 0;
};

/// Streams every record of a provider into an STDUMP file in the given order.
inline void write_dump(ActivationProvider& provider, const std::filesystem::path& path,
                       PassOrder order = PassOrder::sample_major, std::size_t batch_size = 64,
                       nlohmann::json extra = nlohmann::json::object(), const WorkerPool& pool = WorkerPool{}) {
  const STShape s = provider.shape();
  StDumpHeader header{provider.manifest(), s.n, s.m, order, std::move(extra)};
  if (!header.extra.contains("identity_index")) header.extra["identity_index"] = provider.identity_index();
  StDumpWriter writer(path, header);
  std::vector<Cell> cells;
  std::vector<STRecord> records;
  const std::size_t total = s.n * s.m;
  for (std::size_t start = 0; start < total; start += batch_size) {
    const std::size_t end = std::min(total, start + batch_size);
    cells.clear();
    for (std::size_t idx = start; idx < end; ++idx) cells.push_back(header.cell_at(idx));
    records.resize(cells.size());
    provider.fetch(cells, records, pool);
    for (const auto& r : records) writer.write(r);
  }
  writer.close();
}

}  // namespace tmeasures
