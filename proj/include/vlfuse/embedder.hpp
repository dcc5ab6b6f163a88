#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "vlfuse/io/vlf.hpp"

namespace vlfuse {

/// Text -> unit vector in the scene's language feature space.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual int dim() const = 0;
  virtual std::vector<float> embed(std::string_view text) const = 0;
};

inline void normalize_in_place(std::vector<float>& v) {
  double n2 = 0.0;
  for (float x : v) n2 += static_cast<double>(x) * x;
  if (n2 <= 0.0) return;
  const double inv = 1.0 / std::sqrt(n2);
  for (float& x : v) x = static_cast<float>(x * inv);
}

/// Deterministic stand-in: a Gaussian direction seeded by a stable hash of the
/// text. Identical text always maps to the identical vector on every platform
/// that shares the standard library's normal_distribution.
class HashEmbedder final : public TextEmbedder {
 public:
  explicit HashEmbedder(int dim) : dim_(dim) { require(dim >= 1, "embedding dim must be positive"); }

  int dim() const override { return dim_; }

  std::vector<float> embed(std::string_view text) const override {
    // FNV-1a, 64-bit.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
      h ^= c;
      h *= 1099511628211ull;
    }
    std::mt19937_64 rng(h);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<float> v(static_cast<std::size_t>(dim_));
    for (auto& x : v) x = static_cast<float>(normal(rng));
    normalize_in_place(v);
    return v;
  }

 private:
  int dim_;
};

/// Lookup in a keyed ".vlk" file of precomputed text embeddings, optionally
/// falling back to another embedder for unknown text.
class FileEmbedder final : public TextEmbedder {
 public:
  FileEmbedder(io::KeyedVectors entries, int dim, std::shared_ptr<const TextEmbedder> fallback = nullptr)
      : entries_(std::move(entries)), dim_(dim), fallback_(std::move(fallback)) {
    for (auto& [key, vec] : entries_) {
      require(static_cast<int>(vec.size()) == dim_, "embedding '" + key + "' has wrong dimension");
      normalize_in_place(vec);
    }
    if (fallback_) require(fallback_->dim() == dim_, "fallback embedder dim mismatch");
  }

  static FileEmbedder load(const std::filesystem::path& path, std::shared_ptr<const TextEmbedder> fallback = nullptr) {
    auto bytes = io::read_file(path);
    std::uint32_t dim = 0;
    auto entries = io::decode_vlk(bytes, path.string(), &dim);
    return FileEmbedder(std::move(entries), static_cast<int>(dim), std::move(fallback));
  }

  int dim() const override { return dim_; }

  bool contains(std::string_view text) const { return entries_.count(std::string(text)) > 0; }

  std::vector<float> embed(std::string_view text) const override {
    if (auto it = entries_.find(std::string(text)); it != entries_.end()) return it->second;
    if (fallback_) return fallback_->embed(text);
    fail(ErrorKind::kNotFound, "no embedding for text '" + std::string(text) + "'");
  }

 private:
  io::KeyedVectors entries_;
  int dim_;
  std::shared_ptr<const TextEmbedder> fallback_;
};

}  // namespace vlfuse

namespace vlfuse {

/// Embedder for queries against a scene: its stored text embeddings when
/// present, falling back to the hash embedder for any other text.
inline std::shared_ptr<const TextEmbedder> scene_embedder(std::optional<io::KeyedVectors> entries, int dim) {
  auto hash = std::make_shared<HashEmbedder>(dim);
  if (!entries || entries->empty()) return hash;
  return std::make_shared<FileEmbedder>(std::move(*entries), dim, hash);
}

}  // namespace vlfuse
