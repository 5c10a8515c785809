#include "pointloc/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace pointloc {

namespace {

constexpr char kMagic[4] = {'P', 'L', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
    const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated record header");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

double get_f64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw DataError(path + ": truncated float payload");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

}  // namespace

void write_records(const std::string& path, const std::vector<NamedTensor>& records) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("write_records: cannot open '" + path + "'");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(records.size()));
    for (const NamedTensor& rec : records) {
        put_u32(os, static_cast<std::uint32_t>(rec.name.size()));
        os.write(rec.name.data(), static_cast<std::streamsize>(rec.name.size()));
        put_u32(os, static_cast<std::uint32_t>(rec.tensor.shape.size()));
        for (std::size_t d : rec.tensor.shape) put_u32(os, static_cast<std::uint32_t>(d));
        for (double v : rec.tensor.data) put_f64(os, v);
    }
    if (!os) throw DataError("write_records: write failed for '" + path + "'");
}

std::vector<NamedTensor> read_records(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("read_records: cannot open '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path + ": bad magic, not a checkpoint file");
    const std::uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw DataError(path + ": unsupported format version " + std::to_string(version));
    const std::uint32_t count = get_u32(is, path);

    std::vector<NamedTensor> records;
    records.reserve(count);
    for (std::uint32_t r = 0; r < count; ++r) {
        const std::uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError(path + ": truncated record name");
        const std::uint32_t rank = get_u32(is, path);
        std::vector<std::size_t> shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) shape[d] = get_u32(is, path);
        const std::size_t n = Tensor::numel(shape);
        std::vector<double> data(n);
        for (std::size_t i = 0; i < n; ++i) data[i] = get_f64(is, path);
        records.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
    }
    return records;
}

void save_params(const std::string& path, const ModelParams& params,
                 const std::vector<NamedTensor>& extra) {
    std::vector<NamedTensor> records;
    records.reserve(params.count() + extra.size());
    for (std::size_t i = 0; i < params.count(); ++i) {
        Tensor t = params.tensor(i);
        t.requires_grad = false;
        t.grad.clear();
        records.push_back({params.name(i), std::move(t)});
    }
    for (const NamedTensor& rec : extra) records.push_back(rec);
    write_records(path, records);
}

std::vector<NamedTensor> load_params(const std::string& path, ModelParams& params) {
    std::vector<NamedTensor> rest;
    std::size_t matched = 0;
    for (NamedTensor& rec : read_records(path)) {
        if (params.has(rec.name)) {
            Tensor& dst = params.at(rec.name);
            if (dst.shape != rec.tensor.shape)
                throw DataError(path + ": tensor '" + rec.name + "' has shape " +
                                Tensor::shape_str(rec.tensor.shape) + ", expected " +
                                Tensor::shape_str(dst.shape));
            dst.data = std::move(rec.tensor.data);
            ++matched;
        } else {
            rest.push_back(std::move(rec));
        }
    }
    if (matched != params.count())
        throw DataError(path + ": checkpoint covers " + std::to_string(matched) + " of " +
                        std::to_string(params.count()) + " parameters");
    return rest;
}

}  // namespace pointloc
