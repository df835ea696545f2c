#include "graphret/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace graphret {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char ch : text) {
        unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xCBF29CE484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001B3ull;

std::uint64_t fnv1a(std::uint64_t h, std::string_view data) {
    for (char c : data) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    return h;
}

std::uint64_t fnv1a_u64(std::uint64_t h, std::uint64_t x) {
    for (int i = 0; i < 8; ++i) {
        h ^= x & 0xFF;
        h *= kFnvPrime;
        x >>= 8;
    }
    return h;
}

}  // namespace

HashingEncoder::HashingEncoder(EncoderConfig cfg) : cfg_(cfg) {
    if (cfg_.dim == 0) throw std::invalid_argument("HashingEncoder: dim must be positive");
}

std::vector<double> HashingEncoder::encode(std::string_view text) const {
    std::vector<double> out(cfg_.dim, 0.0);
    bool any = false;
    for (const std::string& tok : tokenize(text)) {
        std::uint64_t h = fnv1a(fnv1a_u64(kFnvOffset, cfg_.seed), tok);
        std::uint64_t s = fnv1a_u64(h, 1);
        out[h % cfg_.dim] += (s & 1) ? 1.0 : -1.0;
        any = true;
    }
    if (cfg_.normalize && any) {
        double norm = 0.0;
        for (double x : out) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& x : out) x /= norm;
    }
    return out;
}

struct TableEncoder::Impl {
    std::unordered_map<std::string, std::vector<double>> table;
    HashingEncoder fallback;

    explicit Impl(EncoderConfig cfg) : fallback(cfg) {}
};

TableEncoder::TableEncoder(const std::string& path, EncoderConfig fallback_cfg) {
    auto impl = std::make_shared<Impl>(fallback_cfg);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("TableEncoder: cannot open " + path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json rec = nlohmann::json::parse(line);
        std::vector<double> vec = rec.at("vector").get<std::vector<double>>();
        if (vec.size() != fallback_cfg.dim) {
            throw std::runtime_error("TableEncoder: " + path + ":" + std::to_string(lineno) +
                                     ": vector length " + std::to_string(vec.size()) +
                                     " does not match dim " + std::to_string(fallback_cfg.dim));
        }
        impl->table[rec.at("text").get<std::string>()] = std::move(vec);
    }
    impl_ = std::move(impl);
}

std::size_t TableEncoder::dim() const { return impl_->fallback.dim(); }

std::vector<double> TableEncoder::encode(std::string_view text) const {
    auto it = impl_->table.find(std::string(text));
    if (it != impl_->table.end()) return it->second;
    return impl_->fallback.encode(text);
}

}  // namespace graphret
