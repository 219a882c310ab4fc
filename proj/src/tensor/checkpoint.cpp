#include "spat/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "spat/errors.hpp"

namespace spat {

namespace {

template <typename U>
void put_le(std::string& out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    bool done() const { return pos_ == bytes_.size(); }

    template <typename U>
    U get_le() {
        need(sizeof(U));
        U value = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) {
            value |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(U);
        return value;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw DataError("checkpoint truncated");
    }

    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const std::vector<NamedTensor>& params) {
    std::string out(kCheckpointMagic);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    for (const auto& [name, tensor] : params) {
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
        for (auto d : tensor.shape()) put_le<std::uint64_t>(out, d);
        for (float v : tensor.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

std::vector<NamedTensor> decode_checkpoint(std::string_view bytes) {
    Reader r(bytes);
    if (r.take(kCheckpointMagic.size()) != kCheckpointMagic) {
        throw DataError("not a parameter checkpoint (bad magic)");
    }
    const auto version = r.get_le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    std::vector<NamedTensor> params;
    while (!r.done()) {
        const auto name_len = r.get_le<std::uint32_t>();
        std::string name(r.take(name_len));
        const auto rank = r.get_le<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(r.get_le<std::uint64_t>());
        std::vector<float> values(shape_numel(shape));
        for (auto& v : values) v = std::bit_cast<float>(r.get_le<std::uint32_t>());
        params.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
    }
    return params;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace spat
