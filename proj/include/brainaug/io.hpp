#pragma once

#include "brainaug/types.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace brainaug::io {

/// FNV-1a over a byte string; used for config hashes and artifact manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& s);
std::string hash_hex(std::uint64_t h);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);
std::string file_hash(const std::string& path);

/// Binary feature-matrix file: 16-byte header ("BAF1", u32 rows, u32 cols,
/// u32 reserved, little-endian) followed by row-major 32-bit floats.
void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

/// CSV fallback for feature matrices: one row per line, comma separated.
Matrix read_matrix_csv(const std::string& path);

/// Checkpoint container shared by the language model, the brain decoder and
/// the PCA model: a JSON header (kind tag, tensor shapes, vocab hash, seed)
/// followed by the concatenated tensors as little-endian f32.
struct Checkpoint {
    std::string kind;
    std::uint64_t vocab_hash = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> names;
    std::vector<Matrix> tensors;

    void add(const std::string& name, const Matrix& t);
    void add(const std::string& name, const Vector& t);
    const Matrix& tensor(const std::string& name) const;
    Vector vector_tensor(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace brainaug::io
