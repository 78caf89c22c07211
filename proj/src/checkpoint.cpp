#include "latentmol/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace latentmol {

namespace {

constexpr const char* kMagic = "latentmol-ckpt v1";

void write_le32(std::ostream& os, const float* data, size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
    } else {
        for (size_t i = 0; i < n; ++i) {
            uint32_t u;
            std::memcpy(&u, &data[i], 4);
            char b[4] = {static_cast<char>(u), static_cast<char>(u >> 8),
                         static_cast<char>(u >> 16), static_cast<char>(u >> 24)};
            os.write(b, 4);
        }
    }
}

void read_le32(std::istream& is, float* data, size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
    } else {
        for (size_t i = 0; i < n; ++i) {
            unsigned char b[4];
            is.read(reinterpret_cast<char*>(b), 4);
            uint32_t u = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
            std::memcpy(&data[i], &u, 4);
        }
    }
    if (!is) throw BadCheckpoint("truncated tensor block");
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor& t) {
    for (auto& [n, _] : tensors)
        if (n == name) throw BadCheckpoint("duplicate tensor name: " + name);
    tensors.emplace_back(name, t);
}

Tensor Checkpoint::get(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw BadCheckpoint("missing tensor: " + name);
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& [n, _] : tensors)
        if (n == name) return true;
    return false;
}

long Checkpoint::meta_long(const std::string& key) const {
    return std::stol(meta_str(key));
}

double Checkpoint::meta_double(const std::string& key) const {
    return std::stod(meta_str(key));
}

std::string Checkpoint::meta_str(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw BadCheckpoint("missing metadata key: " + key);
    return it->second;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw BadCheckpoint("cannot open for write: " + path);
    os << kMagic << "\n";
    os << "meta " << meta.size() << "\n";
    for (const auto& [k, v] : meta) os << k << "=" << v << "\n";
    os << "manifest " << tensors.size() << "\n";
    int64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        os << name;
        for (int d : t.shape()) os << " " << d;
        os << " @" << offset << "\n";
        offset += t.numel() * 4;
    }
    os << "blocks\n";
    for (const auto& [name, t] : tensors) write_le32(os, t.data().data(), t.data().size());
    if (!os) throw BadCheckpoint("write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw BadCheckpoint("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != kMagic) throw BadCheckpoint("bad magic in " + path);

    Checkpoint ck;
    if (!std::getline(is, line)) throw BadCheckpoint("truncated header");
    std::istringstream hs(line);
    std::string word;
    size_t n = 0;
    hs >> word >> n;
    if (word != "meta") throw BadCheckpoint("expected meta count");
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw BadCheckpoint("truncated metadata");
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw BadCheckpoint("bad metadata line: " + line);
        ck.meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
    if (!std::getline(is, line)) throw BadCheckpoint("truncated header");
    std::istringstream ms(line);
    ms >> word >> n;
    if (word != "manifest") throw BadCheckpoint("expected manifest count");
    struct Entry {
        std::string name;
        std::vector<int> shape;
        int64_t offset;
    };
    std::vector<Entry> entries;
    for (size_t i = 0; i < n; ++i) {
        if (!std::getline(is, line)) throw BadCheckpoint("truncated manifest");
        std::istringstream ls(line);
        Entry e;
        ls >> e.name;
        std::string tok;
        e.offset = -1;
        while (ls >> tok) {
            if (tok[0] == '@') {
                e.offset = std::stoll(tok.substr(1));
                break;
            }
            e.shape.push_back(std::stoi(tok));
        }
        if (e.name.empty() || e.offset < 0) throw BadCheckpoint("bad manifest line: " + line);
        entries.push_back(std::move(e));
    }
    if (!std::getline(is, line) || line != "blocks") throw BadCheckpoint("expected blocks marker");
    std::streampos base = is.tellg();
    for (const Entry& e : entries) {
        Tensor t = Tensor::zeros(e.shape);
        is.seekg(base + static_cast<std::streamoff>(e.offset));
        read_le32(is, t.data().data(), t.data().size());
        ck.tensors.emplace_back(e.name, t);
    }
    return ck;
}

}  // namespace latentmol
