#include "desmil/checkpoint.hpp"

#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace desmil {
namespace {

constexpr std::array<std::string_view, 4> kTensorOrder = {
    "item_embeddings", "position_embeddings", "attention_w1", "attention_w2"};

Matrix& tensor_by_name(ModelParams& params, std::string_view name) {
    if (name == "item_embeddings") return params.item_embeddings;
    if (name == "position_embeddings") return params.position_embeddings;
    if (name == "attention_w1") return params.attention_w1;
    if (name == "attention_w2") return params.attention_w2;
    throw std::invalid_argument("checkpoint: unknown tensor name '" + std::string(name) + "'");
}

const Matrix& tensor_by_name(const ModelParams& params, std::string_view name) {
    return tensor_by_name(const_cast<ModelParams&>(params), name);
}

std::size_t parse_size(std::string_view field, const std::string& context) {
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size())
        throw std::runtime_error("checkpoint manifest: bad number in " + context);
    return value;
}

} // namespace

void save_checkpoint(const ModelParams& params, const std::string& binary_path,
                     const std::string& manifest_path) {
    params.validate();

    std::ofstream bin(binary_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + binary_path + " for writing");
    std::ofstream manifest(manifest_path, std::ios::trunc);
    if (!manifest)
        throw std::runtime_error("checkpoint: cannot open " + manifest_path + " for writing");

    std::size_t offset = 0;
    for (std::string_view name : kTensorOrder) {
        const Matrix& m = tensor_by_name(params, name);
        const std::size_t bytes = m.size() * sizeof(double);
        bin.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(bytes));
        manifest << name << '\t' << m.rows() << '\t' << m.cols() << '\t' << offset << '\n';
        offset += bytes;
    }
    if (!bin || !manifest)
        throw std::runtime_error("checkpoint: write failed for " + binary_path);
}

ModelParams load_checkpoint(const std::string& binary_path, const std::string& manifest_path) {
    std::ifstream manifest(manifest_path);
    if (!manifest) throw std::runtime_error("checkpoint: cannot open " + manifest_path);
    std::ifstream bin(binary_path, std::ios::binary);
    if (!bin) throw std::runtime_error("checkpoint: cannot open " + binary_path);
    bin.seekg(0, std::ios::end);
    const std::size_t file_bytes = static_cast<std::size_t>(bin.tellg());

    ModelParams params;
    std::size_t seen = 0;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        if (seen >= kTensorOrder.size())
            throw std::runtime_error("checkpoint manifest: more than four tensor lines");

        std::array<std::string_view, 4> fields;
        std::string_view rest = line;
        for (std::size_t f = 0; f < 4; ++f) {
            const std::size_t tab = rest.find('\t');
            if (f < 3 && tab == std::string_view::npos)
                throw std::runtime_error("checkpoint manifest: expected 4 tab-separated fields, got '" +
                                         line + "'");
            fields[f] = rest.substr(0, tab);
            rest = (tab == std::string_view::npos) ? std::string_view{} : rest.substr(tab + 1);
        }

        if (fields[0] != kTensorOrder[seen])
            throw std::runtime_error("checkpoint manifest: expected tensor '" +
                                     std::string(kTensorOrder[seen]) + "', got '" +
                                     std::string(fields[0]) + "'");
        const std::size_t rows = parse_size(fields[1], "rows of " + std::string(fields[0]));
        const std::size_t cols = parse_size(fields[2], "cols of " + std::string(fields[0]));
        const std::size_t offset = parse_size(fields[3], "offset of " + std::string(fields[0]));
        if (rows == 0 || cols == 0)
            throw std::runtime_error("checkpoint manifest: zero-sized tensor " +
                                     std::string(fields[0]));

        const std::size_t bytes = rows * cols * sizeof(double);
        if (offset + bytes > file_bytes) {
            std::ostringstream msg;
            msg << "checkpoint: tensor " << fields[0] << " needs bytes [" << offset << ", "
                << offset + bytes << ") but " << binary_path << " holds " << file_bytes;
            throw std::runtime_error(msg.str());
        }

        Matrix m(rows, cols);
        bin.seekg(static_cast<std::streamoff>(offset));
        bin.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(bytes));
        if (!bin) throw std::runtime_error("checkpoint: short read from " + binary_path);

        tensor_by_name(params, fields[0]) = std::move(m);
        ++seen;
    }
    if (seen != kTensorOrder.size())
        throw std::runtime_error("checkpoint manifest: expected 4 tensor lines, found " +
                                 std::to_string(seen));
    params.validate();
    return params;
}

} // namespace desmil
