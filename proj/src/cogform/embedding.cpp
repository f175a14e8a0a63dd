#include "cogform/embedding.hpp"

#include <cmath>
#include <cstdlib>

#include "cogform/rng.hpp"

namespace cogform {

void normalize(Vector& v) {
  double s = 0;
  for (double x : v) s += x * x;
  if (s == 0) {
    if (!v.empty()) v[0] = 1.0;
    return;
  }
  const double n = std::sqrt(s);
  for (double& x : v) x /= n;
}

double cosine(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

HashedTrigramEmbedding::HashedTrigramEmbedding(std::size_t dimension) : dim_(dimension) {
  if (dim_ == 0) throw std::invalid_argument("embedding dimension must be positive");
}

Vector HashedTrigramEmbedding::embed(const std::string& text) {
  Vector v(dim_, 0.0);
  if (text.size() < 3) {
    v[fnv1a64(text) % dim_] += 1;
  } else {
    for (std::size_t i = 0; i + 3 <= text.size(); ++i) v[fnv1a64(std::string_view(text).substr(i, 3)) % dim_] += 1;
  }
  normalize(v);
  return v;
}

HttpEmbedding::HttpEmbedding(llm::BackendSpec spec, llm::HttpPost post)
    : spec_(std::move(spec)), post_(post ? std::move(post) : llm::HttpPost(llm::http_post)) {}

Vector HttpEmbedding::embed(const std::string& text) {
  try {
    const char* key = spec_.api_key_env.empty() ? nullptr : std::getenv(spec_.api_key_env.c_str());
    // "http://host:port/prefix" -> ("http://host:port", "/prefix/v1/embeddings")
    const auto scheme = spec_.endpoint.find("://");
    const auto cut = spec_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string base = spec_.endpoint.substr(0, cut);
    std::string path = cut == std::string::npos ? std::string() : spec_.endpoint.substr(cut);
    while (!path.empty() && path.back() == '/') path.pop_back();
    const bool has_version = path.size() >= 3 && path.compare(path.size() - 3, 3, "/v1") == 0;
    path += has_version ? "/embeddings" : "/v1/embeddings";
    const nlohmann::json body = {{"model", spec_.model}, {"input", text}};
    const auto res = post_(base, path, body.dump(), key ? key : "", spec_.timeout_ms);
    if (res.status != 200) throw llm::TransportError("embedding request failed with status " + std::to_string(res.status));
    auto v = nlohmann::json::parse(res.body).at("data").at(0).at("embedding").get<Vector>();
    if (v.empty()) throw llm::ProtocolError("empty embedding");
    dim_ = v.size();
    normalize(v);
    return v;
  } catch (const std::exception& e) {
    log_warning(std::string("embedding service unavailable, using hashed trigrams: ") + e.what());
    dim_ = fallback_.dimension();
    return fallback_.embed(text);
  }
}

}  // namespace cogform
