#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dki/corpus_builder.hpp"
#include "dki/downstream.hpp"
#include "dki/encoder_model.hpp"
#include "dki/infusion_trainer.hpp"

namespace dki::cli {

inline constexpr std::string_view kVersion = "1.0.0";

struct PipelineConfig {
    std::string preset = "desk";
    corpus::BuildConfig build;
    train::TrainConfig train;
    model::EncoderConfig encoder;
    downstream::FineTuneConfig fine_tune;
    unsigned workers = 1;

    /// desk: small model, lr 1e-3. paper: lr 1e-5, batch 16, beta 10, 512 tokens.
    static PipelineConfig for_preset(std::string_view preset);

    /// Sections "build", "train", "encoder", "fine_tune" plus top-level
    /// "seed" and "workers". Keys that are absent keep their value.
    void apply_json(const nlohmann::json& j);
    void set_seed(std::uint64_t seed);
};

/// Runs one subcommand. Returns 0 on success, 1 on invalid input or usage,
/// 2 on I/O failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace dki::cli
