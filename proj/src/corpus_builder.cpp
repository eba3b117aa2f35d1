#include "dki/corpus_builder.hpp"

#include <algorithm>
#include <random>

#include <json.hpp>

#include "dki/error.hpp"
#include "dki/text.hpp"

namespace dki::corpus {

namespace {

using tok::TokenId;
using tok::TokenSeq;

struct AuxSpan {
    TokenSeq tokens;
    std::vector<std::size_t> aspect; // offsets within tokens
    std::vector<std::size_t> disease;
};

AuxSpan tokenize_auxiliary(std::string_view disease, wiki::Aspect aspect,
                           std::string_view template_text, const tok::SubwordVocab& vocab)
{
    AuxSpan span;
    std::size_t pos = 0;
    while (pos < template_text.size()) {
        auto a = template_text.find("{aspect}", pos);
        auto d = template_text.find("{disease}", pos);
        auto next = std::min(a, d);
        span.tokens.append(tok::wordpiece_tokenize(template_text.substr(pos, next - pos), vocab));
        if (next == std::string_view::npos) {
            break;
        }
        bool is_aspect = next == a;
        auto filler = tok::wordpiece_tokenize(is_aspect ? wiki::surface_word(aspect) : disease, vocab);
        auto& slots = is_aspect ? span.aspect : span.disease;
        for (std::size_t i = 0; i < filler.size(); ++i) {
            slots.push_back(span.tokens.size() + i);
        }
        span.tokens.append(filler);
        pos = next + (is_aspect ? 8 : 9);
    }
    return span;
}

// First token-aligned occurrence of `needle` in `hay`, skipping positions in `taken`.
std::vector<std::size_t> find_aligned(const TokenSeq& hay, std::size_t begin, std::size_t end,
                                      const TokenSeq& needle, const std::vector<std::size_t>& taken)
{
    if (needle.size() == 0 || end - begin < needle.size()) {
        return {};
    }
    for (std::size_t s = begin; s + needle.size() <= end; ++s) {
        if (s > begin && hay.surface[s].rfind("##", 0) == 0) {
            continue; // would start mid-word
        }
        if (!std::equal(needle.ids.begin(), needle.ids.end(), hay.ids.begin() + static_cast<std::ptrdiff_t>(s))) {
            continue;
        }
        auto after = s + needle.size();
        if (after < end && hay.surface[after].rfind("##", 0) == 0) {
            continue; // would end mid-word
        }
        std::vector<std::size_t> hit(needle.size());
        for (std::size_t i = 0; i < needle.size(); ++i) {
            hit[i] = s + i;
        }
        bool overlaps = std::any_of(hit.begin(), hit.end(), [&](std::size_t p) {
            return std::find(taken.begin(), taken.end(), p) != taken.end();
        });
        if (!overlaps) {
            return hit;
        }
    }
    return {};
}

void apply_masks(InfusionExample& ex)
{
    auto& mp = ex.mask_positions;
    mp = ex.disease_positions;
    mp.insert(mp.end(), ex.aspect_positions.begin(), ex.aspect_positions.end());
    std::sort(mp.begin(), mp.end());
    mp.erase(std::unique(mp.begin(), mp.end()), mp.end());
    ex.labels.clear();
    for (auto p : mp) {
        ex.labels.push_back(ex.ids[p]);
        ex.ids[p] = tok::kMask;
    }
}

std::vector<std::size_t> json_positions(const nlohmann::json& j, const char* key, std::size_t line)
{
    if (!j.contains(key)) {
        throw SchemaError(std::string("missing field '") + key + "'", line);
    }
    const auto& arr = j.at(key);
    if (!arr.is_array()) {
        throw SchemaError(std::string("field '") + key + "' must be an array", line);
    }
    std::vector<std::size_t> out;
    for (const auto& v : arr) {
        if (!v.is_number_unsigned()) {
            throw SchemaError(std::string("field '") + key + "' must hold non-negative integers", line);
        }
        out.push_back(v.get<std::size_t>());
    }
    return out;
}

} // namespace

std::string_view mode_name(MaskMode m)
{
    switch (m) {
    case MaskMode::Default: return "default";
    case MaskMode::NoAuxiliary: return "no_aux";
    case MaskMode::NoAspect: return "no_aspect";
    case MaskMode::NoDisease: return "no_disease";
    case MaskMode::RandomMLM15: return "mlm15";
    }
    return "default";
}

MaskMode parse_mode(std::string_view name)
{
    for (auto m : {MaskMode::Default, MaskMode::NoAuxiliary, MaskMode::NoAspect,
                   MaskMode::NoDisease, MaskMode::RandomMLM15}) {
        if (mode_name(m) == name) {
            return m;
        }
    }
    throw ValidationError("unknown mask mode '" + std::string(name) + "'");
}

void BuildConfig::validate() const
{
    if (!(mask_rate > 0.0 && mask_rate < 1.0)) {
        throw ValidationError("mask_rate must lie in (0, 1)");
    }
    if (max_seq_len < 16) {
        throw ValidationError("max_seq_len must be at least 16");
    }
}

TokenId InfusionExample::label_at(std::size_t position) const
{
    auto it = std::lower_bound(mask_positions.begin(), mask_positions.end(), position);
    if (it == mask_positions.end() || *it != position) {
        throw ValidationError("position " + std::to_string(position) + " is not masked");
    }
    return labels[static_cast<std::size_t>(it - mask_positions.begin())];
}

std::string make_auxiliary_sentence(std::string_view disease, wiki::Aspect aspect,
                                    std::string_view template_text)
{
    std::string out;
    std::size_t pos = 0;
    while (pos < template_text.size()) {
        auto a = template_text.find("{aspect}", pos);
        auto d = template_text.find("{disease}", pos);
        auto next = std::min(a, d);
        out.append(template_text.substr(pos, next - pos));
        if (next == std::string_view::npos) {
            break;
        }
        if (next == a) {
            out.append(wiki::surface_word(aspect));
            pos = next + 8;
        } else {
            out.append(disease);
            pos = next + 9;
        }
    }
    return out;
}

InfusionExample build_example(const wiki::KnowledgePassage& passage, const tok::SubwordVocab& vocab,
                              const BuildConfig& cfg, MaskMode mode, std::size_t index)
{
    cfg.validate();
    if (text::collapse_whitespace(passage.text).empty()) {
        throw ValidationError("passage for '" + passage.disease + "' has empty text");
    }
    if (passage.disease.empty()) {
        throw ValidationError("passage has empty disease name");
    }
    auto body = tok::wordpiece_tokenize(passage.text, vocab);
    if (body.size() == 0) {
        throw ValidationError("passage for '" + passage.disease + "' produced no tokens");
    }

    InfusionExample ex;
    ex.mode = mode;
    ex.ids.push_back(tok::kCls);
    TokenSeq framed;
    framed.ids.push_back(tok::kCls);
    framed.surface.emplace_back("[CLS]");

    bool with_aux = mode == MaskMode::Default || mode == MaskMode::NoAspect
                    || mode == MaskMode::NoDisease;
    AuxSpan aux;
    if (with_aux) {
        auto it = cfg.templates.find(passage.aspect);
        std::string_view tmpl = it == cfg.templates.end() ? kDefaultTemplate : it->second;
        aux = tokenize_auxiliary(passage.disease, passage.aspect, tmpl, vocab);
        if (aux.tokens.size() + 2 > cfg.max_seq_len) {
            throw ValidationError("auxiliary sentence does not fit in max_seq_len");
        }
        framed.append(aux.tokens);
    }
    std::size_t body_begin = framed.size();
    std::size_t budget = cfg.max_seq_len - framed.size() - 1;
    std::size_t keep = std::min(budget, body.size());
    ex.truncated = body.size() - keep;
    framed.ids.insert(framed.ids.end(), body.ids.begin(), body.ids.begin() + static_cast<std::ptrdiff_t>(keep));
    framed.surface.insert(framed.surface.end(), body.surface.begin(),
                          body.surface.begin() + static_cast<std::ptrdiff_t>(keep));
    std::size_t body_end = framed.size();
    framed.ids.push_back(tok::kSep);
    framed.surface.emplace_back("[SEP]");
    ex.ids = framed.ids;

    switch (mode) {
    case MaskMode::Default:
    case MaskMode::NoAspect:
    case MaskMode::NoDisease:
        if (mode != MaskMode::NoDisease) {
            for (auto off : aux.disease) {
                ex.disease_positions.push_back(off + 1);
            }
        }
        if (mode != MaskMode::NoAspect) {
            for (auto off : aux.aspect) {
                ex.aspect_positions.push_back(off + 1);
            }
        }
        apply_masks(ex);
        break;
    case MaskMode::NoAuxiliary: {
        auto disease_toks = tok::wordpiece_tokenize(passage.disease, vocab);
        auto aspect_toks = tok::wordpiece_tokenize(wiki::surface_word(passage.aspect), vocab);
        ex.disease_positions = find_aligned(framed, body_begin, body_end, disease_toks, {});
        ex.aspect_positions =
            find_aligned(framed, body_begin, body_end, aspect_toks, ex.disease_positions);
        apply_masks(ex);
        break;
    }
    case MaskMode::RandomMLM15: {
        std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                          static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
        std::mt19937_64 rng(seq);
        for (std::size_t p = body_begin; p < body_end; ++p) {
            double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            if (u < cfg.mask_rate) {
                ex.mask_positions.push_back(p);
                ex.labels.push_back(ex.ids[p]);
                ex.ids[p] = tok::kMask;
            }
        }
        break;
    }
    }
    return ex;
}

std::vector<InfusionExample> build_corpus(const std::vector<wiki::KnowledgePassage>& passages,
                                          const tok::SubwordVocab& vocab, const BuildConfig& cfg,
                                          MaskMode mode)
{
    std::vector<InfusionExample> out;
    out.reserve(passages.size());
    for (std::size_t i = 0; i < passages.size(); ++i) {
        out.push_back(build_example(passages[i], vocab, cfg, mode, i));
    }
    return out;
}

std::vector<TokenId> unmasked_ids(const InfusionExample& ex)
{
    auto ids = ex.ids;
    for (std::size_t i = 0; i < ex.mask_positions.size(); ++i) {
        ids[ex.mask_positions[i]] = ex.labels[i];
    }
    return ids;
}

std::string write_examples(const std::vector<InfusionExample>& examples)
{
    std::string out;
    for (const auto& ex : examples) {
        nlohmann::ordered_json j;
        j["ids"] = ex.ids;
        j["mask_positions"] = ex.mask_positions;
        j["labels"] = ex.labels;
        j["aspect_positions"] = ex.aspect_positions;
        j["disease_positions"] = ex.disease_positions;
        j["mode"] = std::string(mode_name(ex.mode));
        if (ex.truncated != 0) {
            j["truncated"] = ex.truncated;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<InfusionExample> read_examples(std::string_view jsonl)
{
    std::vector<InfusionExample> out;
    std::size_t line_no = 0;
    for (const auto& line : text::split(jsonl, '\n')) {
        ++line_no;
        if (text::collapse_whitespace(line).empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(e.what(), line_no);
        }
        if (!j.is_object()) {
            throw SchemaError("expected a JSON object", line_no);
        }
        InfusionExample ex;
        for (auto id : json_positions(j, "ids", line_no)) {
            ex.ids.push_back(static_cast<TokenId>(id));
        }
        ex.mask_positions = json_positions(j, "mask_positions", line_no);
        for (auto id : json_positions(j, "labels", line_no)) {
            ex.labels.push_back(static_cast<TokenId>(id));
        }
        ex.aspect_positions = json_positions(j, "aspect_positions", line_no);
        ex.disease_positions = json_positions(j, "disease_positions", line_no);
        if (!j.contains("mode") || !j["mode"].is_string()) {
            throw SchemaError("missing field 'mode'", line_no);
        }
        try {
            ex.mode = parse_mode(j["mode"].get<std::string>());
        } catch (const ValidationError& e) {
            throw SchemaError(e.what(), line_no);
        }
        if (j.contains("truncated")) {
            ex.truncated = j["truncated"].get<std::size_t>();
        }
        if (ex.labels.size() != ex.mask_positions.size()) {
            throw SchemaError("labels and mask_positions differ in length", line_no);
        }
        for (auto p : ex.mask_positions) {
            if (p >= ex.ids.size()) {
                throw SchemaError("mask position out of range", line_no);
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace dki::corpus
