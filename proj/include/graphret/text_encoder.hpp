#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace graphret {

// Lowercases and splits on runs of non-alphanumeric characters. Shared by the
// feature encoder and the BM25 index so lexical and dense views agree.
std::vector<std::string> tokenize(std::string_view text);

struct EncoderConfig {
    std::size_t dim = 32;
    bool normalize = true;
    std::uint64_t seed = 0;
};

class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<double> encode(std::string_view text) const = 0;
};

// Signed hashed bag-of-words. FNV-1a over (seed, token) picks the bucket; the
// parity of a second FNV pass picks the sign. Deterministic and platform
// independent. Empty text maps to the zero vector.
class HashingEncoder : public TextEncoder {
public:
    explicit HashingEncoder(EncoderConfig cfg);
    std::size_t dim() const override { return cfg_.dim; }
    std::vector<double> encode(std::string_view text) const override;

private:
    EncoderConfig cfg_;
};

// Looks up precomputed vectors from a line-delimited JSON file of
// {"text": ..., "vector": [...]} records; falls back to a hashing encoder
// for texts absent from the table.
class TableEncoder : public TextEncoder {
public:
    TableEncoder(const std::string& path, EncoderConfig fallback_cfg);
    std::size_t dim() const override;
    std::vector<double> encode(std::string_view text) const override;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

}  // namespace graphret
