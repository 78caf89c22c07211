#pragma once

// Bit-exact model checkpoints: a text header of key=value metadata, a
// manifest of `name shape offset` lines, then raw little-endian float32
// blocks.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentmol/tensor.hpp"

namespace latentmol {

struct BadCheckpoint : std::runtime_error {
    explicit BadCheckpoint(const std::string& m) : std::runtime_error(m) {}
};

struct Checkpoint {
    std::map<std::string, std::string> meta;  // arch tag, dims, vocab hash, seed, ...
    std::vector<std::pair<std::string, Tensor>> tensors;

    void put(const std::string& name, const Tensor& t);
    Tensor get(const std::string& name) const;  // throws BadCheckpoint if absent
    bool has(const std::string& name) const;

    long meta_long(const std::string& key) const;
    double meta_double(const std::string& key) const;
    std::string meta_str(const std::string& key) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace latentmol
