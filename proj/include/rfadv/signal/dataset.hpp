#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rfadv/binary_io.hpp"
#include "rfadv/error.hpp"
#include "rfadv/nn/tensor.hpp"
#include "rfadv/rng.hpp"
#include "rfadv/signal/iq_frame.hpp"

namespace rfadv {

/// Labeled I/Q frames of a fixed length, stored contiguously.
class LabeledDataset {
 public:
  LabeledDataset() = default;
  LabeledDataset(std::size_t samples_per_frame, std::vector<std::string> class_names, double snr_db)
      : p_(samples_per_frame), class_names_(std::move(class_names)), snr_db_(snr_db) {
    if (p_ == 0) throw ConfigError("frames need at least one sample");
    if (class_names_.empty()) throw ConfigError("dataset needs at least one class");
  }

  void add(std::span<const float> iq, std::uint16_t label) {
    if (iq.size() != 2 * p_) throw ShapeError("frame has " + std::to_string(iq.size()) + " values, expected " + std::to_string(2 * p_));
    if (label >= class_names_.size()) throw ConfigError("label " + std::to_string(label) + " out of range");
    for (float v : iq) {
      if (!std::isfinite(v)) throw DomainError("frames must be finite");
    }
    iq_.insert(iq_.end(), iq.begin(), iq.end());
    labels_.push_back(label);
  }

  void add(const IQFrame& frame, std::uint16_t label) { add(frame.values(), label); }

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t samples_per_frame() const noexcept { return p_; }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  double snr_db() const noexcept { return snr_db_; }

  std::span<const float> frame(std::size_t i) const { return std::span<const float>(iq_).subspan(i * 2 * p_, 2 * p_); }
  IQFrame frame_copy(std::size_t i) const {
    auto f = frame(i);
    return IQFrame(std::vector<float>(f.begin(), f.end()));
  }
  std::uint16_t label(std::size_t i) const { return labels_.at(i); }
  const std::vector<std::uint16_t>& labels() const noexcept { return labels_; }

  LabeledDataset subset(std::span<const std::size_t> indices) const {
    LabeledDataset out(p_, class_names_, snr_db_);
    out.iq_.reserve(indices.size() * 2 * p_);
    for (std::size_t i : indices) {
      auto f = frame(i);
      out.iq_.insert(out.iq_.end(), f.begin(), f.end());
      out.labels_.push_back(labels_.at(i));
    }
    return out;
  }

  /// Classifier input of shape {N, 1, 2, p} for the given frames.
  nn::Tensor<float> tensor(std::span<const std::size_t> indices) const {
    nn::Tensor<float> t({indices.size(), 1, 2, p_});
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto f = frame(indices[k]);
      std::copy(f.begin(), f.end(), t.row(k).begin());
    }
    return t;
  }

  std::vector<int> int_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t k = 0; k < indices.size(); ++k) out[k] = labels_.at(indices[k]);
    return out;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

 private:
  std::size_t p_ = 0;
  std::vector<std::string> class_names_;
  double snr_db_ = 0.0;
  std::vector<float> iq_;
  std::vector<std::uint16_t> labels_;
};

// ---------------------------------------------------------------------------
// Portable dataset file (RFDS)
//   "RFDS" | u16 version | u32 frame count | u16 p | u16 class count |
//   class names (u16 length + bytes each) | i16 snr_db |
//   frames: 2p float32 (I row then Q row) + u16 label | u32 CRC32.
// snr_db 32767 marks a noiseless dataset.

inline constexpr std::string_view kDatasetMagic = "RFDS";
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::int16_t kNoiselessSnr = std::numeric_limits<std::int16_t>::max();

inline std::string encode_portable(const LabeledDataset& ds) {
  io::ByteWriter w;
  w.raw(kDatasetMagic);
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u16(static_cast<std::uint16_t>(ds.samples_per_frame()));
  w.u16(static_cast<std::uint16_t>(ds.num_classes()));
  for (const auto& name : ds.class_names()) w.str16(name);
  const double snr = ds.snr_db();
  if (std::isinf(snr) && snr > 0) {
    w.i16(kNoiselessSnr);
  } else {
    if (snr != std::round(snr) || std::abs(snr) >= kNoiselessSnr) {
      throw ConfigError("portable datasets store integer snr_db, got " + std::to_string(snr));
    }
    w.i16(static_cast<std::int16_t>(snr));
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    w.f32s(ds.frame(i));
    w.u16(ds.label(i));
  }
  w.seal();
  return w.take();
}

/// Parses an RFDS byte stream. With `snr_filter` set, a file recorded at a
/// different SNR is rejected.
inline LabeledDataset decode_portable(std::string_view bytes, std::optional<int> snr_filter = std::nullopt) {
  io::ByteReader r(bytes, "dataset file");
  if (bytes.substr(0, 4) != kDatasetMagic) r.fail("bad magic");
  r.verify_crc();
  r.raw(4);
  if (const auto version = r.u16(); version != kDatasetVersion) r.fail("unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  const std::uint16_t p = r.u16();
  const std::uint16_t classes = r.u16();
  if (p == 0) r.fail("zero samples per frame");
  if (classes == 0) r.fail("no classes");
  std::vector<std::string> names(classes);
  for (auto& n : names) n = r.str16();
  const std::int16_t snr_raw = r.i16();
  const double snr = snr_raw == kNoiselessSnr ? std::numeric_limits<double>::infinity() : snr_raw;
  if (snr_filter && (snr_raw == kNoiselessSnr || *snr_filter != snr_raw)) {
    throw ConfigError("dataset recorded at snr " + std::to_string(snr_raw) + " dB, requested " +
                      std::to_string(*snr_filter) + " dB");
  }
  const std::size_t record = 8ull * p + 2;
  if (r.remaining() != static_cast<std::size_t>(count) * record) r.fail("frame records truncated or oversized");
  LabeledDataset ds(p, std::move(names), snr);
  std::vector<float> frame(2ull * p);
  for (std::uint32_t i = 0; i < count; ++i) {
    r.f32s(frame);
    const std::uint16_t label = r.u16();
    if (label >= classes) r.fail("label " + std::to_string(label) + " out of range in frame " + std::to_string(i));
    try {
      ds.add(frame, label);
    } catch (const Error& e) {
      r.fail(std::string("frame ") + std::to_string(i) + ": " + e.what());
    }
  }
  r.expect_end();
  return ds;
}

inline void save_portable(const LabeledDataset& ds, const std::filesystem::path& path) {
  io::write_file(path, encode_portable(ds));
}

inline LabeledDataset load_portable(const std::filesystem::path& path, std::optional<int> snr_filter = std::nullopt) {
  return decode_portable(io::read_file(path), snr_filter);
}

// ---------------------------------------------------------------------------
// Splits and batches

/// Label-stratified split: each class contributes round(fraction * count) frames to train.
inline std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                       std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.label(i)].push_back(i);
  Rng rng = make_rng(seed, "split");
  std::vector<std::size_t> train, test;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    train.insert(train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

struct Batch {
  nn::Tensor<float> inputs;  // {B, 1, 2, p}
  std::vector<int> labels;
  std::vector<std::size_t> indices;  // positions in the source dataset
};

/// Seeded permutation of a dataset cut into batches; the last short batch is kept.
class BatchSequence {
 public:
  BatchSequence(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t seed) : ds_(&ds), batch_size_(batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    order_ = ds.all_indices();
    Rng rng(seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }

  std::size_t size() const noexcept { return (order_.size() + batch_size_ - 1) / batch_size_; }

  std::span<const std::size_t> indices(std::size_t b) const {
    const std::size_t start = b * batch_size_;
    return std::span<const std::size_t>(order_).subspan(start, std::min(batch_size_, order_.size() - start));
  }

  Batch operator[](std::size_t b) const {
    auto idx = indices(b);
    return {ds_->tensor(idx), ds_->int_labels(idx), std::vector<std::size_t>(idx.begin(), idx.end())};
  }

  class iterator {
   public:
    using value_type = Batch;
    using difference_type = std::ptrdiff_t;
    iterator(const BatchSequence* seq, std::size_t b) : seq_(seq), b_(b) {}
    Batch operator*() const { return (*seq_)[b_]; }
    iterator& operator++() {
      ++b_;
      return *this;
    }
    bool operator==(const iterator& o) const { return b_ == o.b_; }

   private:
    const BatchSequence* seq_;
    std::size_t b_;
  };

  iterator begin() const { return {this, 0}; }
  iterator end() const { return {this, size()}; }

 private:
  const LabeledDataset* ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
};

inline BatchSequence batches(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t seed) {
  return BatchSequence(ds, batch_size, seed);
}

}  // namespace rfadv
