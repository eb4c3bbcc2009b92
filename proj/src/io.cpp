#include "brainaug/io.hpp"

#include "json.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace brainaug::io {

std::uint64_t fnv1a64(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

std::string file_hash(const std::string& path) {
    return hash_hex(fnv1a64(read_file(path)));
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& s, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + i])) << (8 * i);
    return v;
}

void append_f32_blob(std::string& out, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const float f = static_cast<float>(m(r, c));
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
}

Matrix read_f32_blob(const std::string& s, std::size_t& off, Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
            const std::uint32_t bits = get_u32(s, off);
            off += 4;
            float f;
            std::memcpy(&f, &bits, 4);
            m(r, c) = static_cast<double>(f);
        }
    return m;
}

}  // namespace

void write_matrix(const std::string& path, const Matrix& m) {
    std::string out;
    out.reserve(16 + static_cast<std::size_t>(m.size()) * 4);
    out += "BAF1";
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    put_u32(out, 0);  // reserved
    append_f32_blob(out, m);
    write_file(path, out);
}

Matrix read_matrix(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 16 || s.compare(0, 4, "BAF1") != 0)
        throw std::runtime_error("bad matrix file header: " + path);
    const auto rows = static_cast<Eigen::Index>(get_u32(s, 4));
    const auto cols = static_cast<Eigen::Index>(get_u32(s, 8));
    if (s.size() != 16 + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4)
        throw std::runtime_error("truncated matrix file: " + path);
    std::size_t off = 16;
    return read_f32_blob(s, off, rows, cols);
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error("ragged csv matrix: " + path);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("empty csv matrix: " + path);
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
    return m;
}

void Checkpoint::add(const std::string& name, const Matrix& t) {
    names.push_back(name);
    tensors.push_back(t);
}

void Checkpoint::add(const std::string& name, const Vector& t) {
    names.push_back(name);
    tensors.push_back(Matrix(t));
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return tensors[i];
    throw std::runtime_error("checkpoint tensor not found: " + name);
}

Vector Checkpoint::vector_tensor(const std::string& name) const {
    const Matrix& m = tensor(name);
    if (m.cols() != 1) throw std::runtime_error("checkpoint tensor is not a vector: " + name);
    return m.col(0);
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["kind"] = ckpt.kind;
    header["vocab_hash"] = ckpt.vocab_hash;
    header["seed"] = ckpt.seed;
    auto shapes = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.names.size(); ++i) {
        shapes.push_back({{"name", ckpt.names[i]},
                          {"rows", ckpt.tensors[i].rows()},
                          {"cols", ckpt.tensors[i].cols()}});
    }
    header["tensors"] = shapes;
    const std::string hs = header.dump();

    std::string out;
    put_u32(out, static_cast<std::uint32_t>(hs.size()));
    out += hs;
    for (const auto& t : ckpt.tensors) append_f32_blob(out, t);
    write_file(path, out);
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 4) throw std::runtime_error("truncated checkpoint: " + path);
    const std::uint32_t hlen = get_u32(s, 0);
    if (s.size() < 4 + hlen) throw std::runtime_error("truncated checkpoint: " + path);
    const nlohmann::json header = nlohmann::json::parse(s.substr(4, hlen));

    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.vocab_hash = header.at("vocab_hash").get<std::uint64_t>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    std::size_t off = 4 + hlen;
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        if (s.size() < off + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 4)
            throw std::runtime_error("truncated checkpoint blob: " + path);
        ckpt.names.push_back(t.at("name").get<std::string>());
        ckpt.tensors.push_back(read_f32_blob(s, off, rows, cols));
    }
    return ckpt;
}

}  // namespace brainaug::io
