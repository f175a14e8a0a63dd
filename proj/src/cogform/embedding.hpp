#pragma once

// Text embeddings for rule-name similarity.

#include <memory>
#include <string>
#include <vector>

#include "cogform/llm_gateway.hpp"

namespace cogform {

using Vector = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Unit-norm embedding of text.
  virtual Vector embed(const std::string& text) = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string name() const = 0;
};

/// Hashed character-trigram counts, L2-normalized. Pure and deterministic.
class HashedTrigramEmbedding final : public EmbeddingProvider {
 public:
  explicit HashedTrigramEmbedding(std::size_t dimension = 256);
  Vector embed(const std::string& text) override;
  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "hashed-trigram"; }

 private:
  std::size_t dim_;
};

/// OpenAI-compatible /v1/embeddings client. Transport or protocol failures
/// fall back to the hashed embedding with a logged warning.
class HttpEmbedding final : public EmbeddingProvider {
 public:
  HttpEmbedding(llm::BackendSpec spec, llm::HttpPost post = {});
  Vector embed(const std::string& text) override;
  std::size_t dimension() const override { return dim_; }
  std::string name() const override { return "http:" + spec_.model; }

 private:
  llm::BackendSpec spec_;
  llm::HttpPost post_;
  HashedTrigramEmbedding fallback_;
  std::size_t dim_ = 256;
};

double cosine(const Vector& a, const Vector& b);
void normalize(Vector& v);

}  // namespace cogform
