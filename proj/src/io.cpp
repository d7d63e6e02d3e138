#include "cdp/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace cdp::io {

namespace {

using ordered_json = nlohmann::ordered_json;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* field) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw load_error(path + ": truncated header while reading " + field);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void write_f32_block(std::ostream& out, const float* data, std::size_t count) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    } else {
        for (std::size_t i = 0; i < count; ++i) put_f32(out, data[i]);
    }
}

void read_f32_block(std::istream& in, float* data, std::size_t count, const std::string& path) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4))) {
            throw load_error(path + ": truncated payload");
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = get_u32(in, path, "payload");
            std::memcpy(&data[i], &bits, 4);
        }
    }
}

void check_magic(std::istream& in, const char* expected, const std::string& path) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, expected, 4) != 0) {
        throw load_error(path + ": magic mismatch, expected " + expected);
    }
    char version = 0;
    if (!in.get(version) || version != 1) {
        throw load_error(path + ": unsupported version " + std::to_string(int(version)));
    }
}

void expect_eof(std::istream& in, const std::string& path) {
    char extra;
    if (in.get(extra)) {
        throw load_error(path + ": payload longer than header dims imply");
    }
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw load_error(path + ": cannot open for writing");
    }
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw load_error(path + ": cannot open for reading");
    }
    return in;
}

ordered_json parse_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw load_error(path + ": cannot open for reading");
    }
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw load_error(path + ": invalid sidecar JSON: " + e.what());
    }
}

std::vector<std::string> string_list(const ordered_json& j, const std::string& path,
                                     const char* field) {
    if (!j.contains(field) || !j[field].is_array()) {
        throw load_error(path + ": sidecar missing string array '" + field + "'");
    }
    std::vector<std::string> out;
    for (const auto& item : j[field]) {
        if (!item.is_string()) {
            throw load_error(path + ": sidecar field '" + field + "' must contain strings");
        }
        out.push_back(item.get<std::string>());
    }
    return out;
}

}  // namespace

void write_tensor(const std::string& path, const SimilarityTensor& tensor) {
    auto out = open_out(path);
    out.write("CDPT", 4);
    out.put(1);
    put_u32(out, static_cast<std::uint32_t>(tensor.n_clips()));
    put_u32(out, static_cast<std::uint32_t>(tensor.n_prompts()));
    put_u32(out, static_cast<std::uint32_t>(tensor.n_advances()));
    put_u32(out, 0);  // reserved; the second N dim is implied
    write_f32_block(out, tensor.values().data(), tensor.values().size());
    if (!out) {
        throw load_error(path + ": write failed");
    }
}

SimilarityTensor read_tensor(const std::string& path) {
    auto in = open_in(path);
    check_magic(in, "CDPT", path);
    const auto n = get_u32(in, path, "n_clips");
    const auto p = get_u32(in, path, "n_prompts");
    const auto t = get_u32(in, path, "n_advances");
    const auto reserved = get_u32(in, path, "reserved");
    if (reserved != 0) {
        throw load_error(path + ": reserved dim must be 0, got " + std::to_string(reserved));
    }
    if (n < 1 || p < 1 || t < 1) {
        throw load_error(path + ": dims must all be >= 1");
    }
    SimilarityTensor tensor(static_cast<Index>(n), static_cast<Index>(p), static_cast<Index>(t),
                            Provenance::exact);
    read_f32_block(in, tensor.values().data(), tensor.values().size(), path);
    expect_eof(in, path);
    return tensor;
}

void write_tensor_sidecar(const std::string& path, const TensorSidecar& sidecar) {
    ordered_json j;
    j["clip_ids"] = sidecar.clip_ids;
    j["prompts"] = sidecar.prompts;
    j["provenance"] = sidecar.provenance == Provenance::exact ? "exact" : "surrogate";
    if (!sidecar.captions.empty()) {
        j["captions"] = sidecar.captions;
    }
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

TensorSidecar read_tensor_sidecar(const std::string& path) {
    const auto j = parse_json_file(path);
    TensorSidecar sidecar;
    sidecar.clip_ids = string_list(j, path, "clip_ids");
    sidecar.prompts = string_list(j, path, "prompts");
    if (!j.contains("provenance") || !j["provenance"].is_string()) {
        throw load_error(path + ": sidecar missing 'provenance'");
    }
    const auto prov = j["provenance"].get<std::string>();
    if (prov == "exact") {
        sidecar.provenance = Provenance::exact;
    } else if (prov == "surrogate") {
        sidecar.provenance = Provenance::surrogate;
    } else {
        throw load_error(path + ": unknown provenance '" + prov + "'");
    }
    if (j.contains("captions")) {
        sidecar.captions = string_list(j, path, "captions");
    }
    return sidecar;
}

void write_embeddings(const std::string& path, const ClipSet& clips) {
    auto out = open_out(path);
    out.write("CDPE", 4);
    out.put(1);
    put_u32(out, static_cast<std::uint32_t>(clips.n_clips()));
    put_u32(out, static_cast<std::uint32_t>(clips.n_advances()));
    put_u32(out, static_cast<std::uint32_t>(clips.dim()));
    for (Index c = 0; c < clips.n_clips(); ++c) {
        for (Index t = 0; t < clips.n_advances(); ++t) {
            const Vecf& v = clips.embedding(c, t).values();
            write_f32_block(out, v.data(), static_cast<std::size_t>(v.size()));
        }
    }
    if (!out) {
        throw load_error(path + ": write failed");
    }
}

ClipSet read_embeddings(const std::string& path, const std::string& sidecar_path) {
    auto in = open_in(path);
    check_magic(in, "CDPE", path);
    const auto n = get_u32(in, path, "n_clips");
    const auto t = get_u32(in, path, "n_advances");
    const auto dim = get_u32(in, path, "dim");
    if (n < 1 || t < 1 || dim < 1) {
        throw load_error(path + ": dims must all be >= 1");
    }
    auto sidecar = read_embedding_sidecar(sidecar_path);
    if (sidecar.clip_ids.size() != n) {
        throw load_error(sidecar_path + ": clip_ids count " + std::to_string(sidecar.clip_ids.size()) +
                         " does not match payload n_clips " + std::to_string(n));
    }
    std::vector<Embedding> embeddings;
    embeddings.reserve(static_cast<std::size_t>(n) * t);
    for (std::uint32_t c = 0; c < n; ++c) {
        for (std::uint32_t a = 0; a < t; ++a) {
            Vecf v(static_cast<Index>(dim));
            read_f32_block(in, v.data(), dim, path);
            try {
                embeddings.push_back(Embedding::prenormalized(std::move(v)));
            } catch (const invalid_embedding& e) {
                throw load_error(path + ": clip " + std::to_string(c) + " advance " +
                                 std::to_string(a) + ": " + e.what());
            }
        }
    }
    expect_eof(in, path);
    return ClipSet(std::move(sidecar.clip_ids), static_cast<Index>(t), std::move(embeddings));
}

void write_embedding_sidecar(const std::string& path, const EmbeddingSidecar& sidecar) {
    ordered_json j;
    j["clip_ids"] = sidecar.clip_ids;
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

EmbeddingSidecar read_embedding_sidecar(const std::string& path) {
    const auto j = parse_json_file(path);
    EmbeddingSidecar sidecar;
    sidecar.clip_ids = string_list(j, path, "clip_ids");
    return sidecar;
}

}  // namespace cdp::io
