#include "pgan/checkpoint.hpp"

#include "pgan/error.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

namespace pgan {

namespace {

template <class T>
void put_le(std::ostream& os, T value) {
    static_assert(std::is_unsigned_v<T>);
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
    os.write(bytes, sizeof(T));
}

class Reader {
public:
    Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

    template <class T>
    T get_le() {
        unsigned char bytes[sizeof(T)];
        read(reinterpret_cast<char*>(bytes), sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
        return v;
    }

    void read(char* dst, std::size_t n) {
        is_.read(dst, static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw FormatError("checkpoint " + path_ + ": truncated");
        }
    }

private:
    std::istream& is_;
    std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_le<std::uint32_t>(os, kCheckpointVersion);
    put_le<std::uint64_t>(os, records.size());
    for (const auto& r : records) {
        if (shape_numel(r.shape) != r.data.size()) {
            throw ShapeError("checkpoint record '" + r.name + "': shape " + shape_str(r.shape) + " vs " +
                             std::to_string(r.data.size()) + " values");
        }
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.name.size()));
        os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(r.shape.size()));
        for (auto d : r.shape) put_le<std::uint64_t>(os, d);
        for (double v : r.data) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw IoError("write failed: " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    Reader in(is, path.string());
    char magic[sizeof(kCheckpointMagic)];
    in.read(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        throw FormatError("checkpoint " + path.string() + ": bad magic");
    }
    const auto version = in.get_le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint " + path.string() + ": unsupported version " + std::to_string(version));
    }
    const auto count = in.get_le<std::uint64_t>();
    std::vector<NamedTensor> out;
    for (std::uint64_t k = 0; k < count; ++k) {
        NamedTensor r;
        r.name.resize(in.get_le<std::uint32_t>());
        in.read(r.name.data(), r.name.size());
        const auto rank = in.get_le<std::uint32_t>();
        for (std::uint32_t i = 0; i < rank; ++i) r.shape.push_back(in.get_le<std::uint64_t>());
        r.data.resize(shape_numel(r.shape));
        for (auto& v : r.data) v = std::bit_cast<double>(in.get_le<std::uint64_t>());
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<NamedTensor> collect_tensors(const NetParams& params, const std::string& prefix) {
    std::vector<NamedTensor> out;
    for (const auto* list : {&params.params(), &params.buffers()})
        for (const auto& e : *list) {
            const auto d = e.tensor.data();
            out.push_back({prefix + e.name, e.tensor.shape(), {d.begin(), d.end()}});
        }
    return out;
}

void restore_tensors(NetParams& params, const std::vector<NamedTensor>& records, const std::string& prefix) {
    for (const auto* list : {&params.params(), &params.buffers()})
        for (const auto& e : *list) {
            const auto name = prefix + e.name;
            auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.name == name; });
            if (it == records.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
            if (it->shape != e.tensor.shape()) {
                throw ShapeError("checkpoint tensor '" + name + "' has shape " + shape_str(it->shape) +
                                 ", expected " + shape_str(e.tensor.shape()));
            }
            Tensor t = e.tensor;
            std::copy(it->data.begin(), it->data.end(), t.mutable_data().begin());
        }
}

}  // namespace pgan
