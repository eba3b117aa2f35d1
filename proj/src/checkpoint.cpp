#include <bit>
#include <cstring>

#include "dki/encoder_model.hpp"
#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::model {

namespace {

void put_u32_le(std::string& out, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

std::uint32_t get_u32_le(std::string_view in, std::size_t at)
{
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
    }
    return v;
}

std::string format_version() { return "1." + std::to_string(kCheckpointMinorVersion); }

} // namespace

std::string serialize_checkpoint(const EncoderParams& params, const EncoderConfig& cfg)
{
    nlohmann::json manifest = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& [name, m] : params.named_tensors()) {
        manifest.push_back({{"name", name}, {"shape", {m->rows(), m->cols()}}, {"offset", offset}});
        offset += m->size() * sizeof(float);
    }
    nlohmann::json header = {
        {"format_version", format_version()},
        {"config", cfg.to_json()},
        {"tensors", manifest},
    };
    auto header_text = header.dump();

    std::string out;
    out.reserve(8 + header_text.size() + offset);
    out.append(kCheckpointMagic);
    put_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
    out.append(header_text);
    for (const auto& [name, m] : params.named_tensors()) {
        for (float f : m->flat()) {
            put_u32_le(out, std::bit_cast<std::uint32_t>(f));
        }
    }
    return out;
}

std::pair<EncoderParams, EncoderConfig> deserialize_checkpoint(std::string_view bytes)
{
    if (bytes.size() < 8 || bytes.substr(0, 4) != kCheckpointMagic) {
        throw CorruptCheckpoint("bad checkpoint magic");
    }
    const std::size_t header_len = get_u32_le(bytes, 4);
    if (8 + header_len > bytes.size()) {
        throw CorruptCheckpoint("checkpoint header truncated");
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(8, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw CorruptCheckpoint(std::string("unreadable checkpoint header: ") + e.what());
    }
    if (!header.is_object() || !header.contains("config") || !header.contains("tensors")
        || !header["format_version"].is_string()) {
        throw CorruptCheckpoint("checkpoint header lacks config, tensors or format_version");
    }
    auto version = header["format_version"].get<std::string>();
    if (version.rfind("1.", 0) != 0) {
        throw CorruptCheckpoint("unsupported checkpoint format version " + version);
    }

    EncoderConfig cfg;
    EncoderParams params;
    try {
        cfg = EncoderConfig::from_json(header.at("config"));
        params = EncoderParams::zeros(cfg);
    } catch (const std::exception& e) {
        throw CorruptCheckpoint(std::string("invalid checkpoint config: ") + e.what());
    }

    const auto data = bytes.substr(8 + header_len);
    const auto& manifest = header.at("tensors");
    auto tensors = params.named_tensors();
    if (!manifest.is_array() || manifest.size() != tensors.size()) {
        throw CorruptCheckpoint("tensor manifest does not match the configuration");
    }
    std::size_t expected_offset = 0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& [name, m] = tensors[t];
        const auto& entry = manifest[t];
        std::size_t rows = 0, cols = 0, offset = 0;
        try {
            if (entry.at("name").get<std::string>() != name) {
                throw CorruptCheckpoint("expected tensor '" + name + "' at manifest slot "
                                        + std::to_string(t));
            }
            rows = entry.at("shape").at(0).get<std::size_t>();
            cols = entry.at("shape").at(1).get<std::size_t>();
            offset = entry.at("offset").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw CorruptCheckpoint(std::string("bad manifest entry: ") + e.what());
        }
        if (rows != m->rows() || cols != m->cols() || offset != expected_offset) {
            throw CorruptCheckpoint("tensor '" + name + "' has unexpected shape or offset");
        }
        const std::size_t nbytes = m->size() * sizeof(float);
        if (offset + nbytes > data.size()) {
            throw CorruptCheckpoint("tensor data truncated in '" + name + "'");
        }
        auto flat = m->flat();
        for (std::size_t i = 0; i < flat.size(); ++i) {
            flat[i] = std::bit_cast<float>(get_u32_le(data, offset + 4 * i));
        }
        expected_offset += nbytes;
    }
    if (expected_offset != data.size()) {
        throw CorruptCheckpoint("trailing bytes after tensor data");
    }
    return {std::move(params), cfg};
}

void save_checkpoint(const EncoderParams& params, const EncoderConfig& cfg, const std::string& path)
{
    text::write_file_atomic(path, serialize_checkpoint(params, cfg));
}

std::pair<EncoderParams, EncoderConfig> load_checkpoint(const std::string& path)
{
    return deserialize_checkpoint(text::read_file(path));
}

} // namespace dki::model
