#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "dki/encoder_model.hpp"
#include "dki/infusion_trainer.hpp"
#include "dki/tokenizer.hpp"

namespace dki::downstream {

struct QaPair {
    std::string question;
    std::string answer;
    int reference_score = 1; // 1..11
    int reference_rank = 1;  // 1..4
    int m = 1;               // candidate answers for this question
};

enum class NliLabel { Entailment, Contradiction, Neutral };

struct NliPair {
    std::string premise;
    std::string hypothesis;
    NliLabel label = NliLabel::Neutral;
};

enum class Tag { B, I, O };

struct TaggedSentence {
    std::vector<std::string> tokens;
    std::vector<Tag> tags;
};

std::string_view nli_label_name(NliLabel l);
NliLabel parse_nli_label(std::string_view s);
char tag_char(Tag t);
Tag parse_tag(std::string_view s);

/// Reference score minus (reference rank - 1) / m.
double qa_target_score(int reference_score, int reference_rank, int m);

enum class HeadKind { Regression, Classify3, Tag3 };

HeadKind parse_head_kind(std::string_view s);

struct TaskModel {
    model::EncoderParams encoder;
    model::EncoderConfig config;
    HeadKind kind = HeadKind::Regression;
    Matrix<float> head_weight; // d x outputs
    Matrix<float> head_bias;   // 1 x outputs
    /// Regression output = raw head value * target_scale + target_shift.
    /// fine_tune fits both to the first training set it sees.
    double target_shift = 0.0;
    double target_scale = 1.0;
    bool target_fitted = false;

    std::size_t outputs() const { return head_weight.cols(); }
};

/// Fresh linear head: 1 output for regression, 3 for classify3 and tag3.
TaskModel attach_head(model::EncoderParams encoder, const model::EncoderConfig& cfg, HeadKind kind,
                      std::uint64_t seed = 7);

struct TaskOutput {
    model::EncoderTrace trace;
    /// regression: 1 x 1, classify3: 1 x 3 (both read [CLS]); tag3: n x 3.
    Matrix<double> values;
};

TaskOutput task_forward(const TaskModel& model, std::span<const tok::TokenId> ids);

/// [CLS] a [SEP] b [SEP] (or [CLS] a [SEP] when b is empty), trimming the
/// longer side one token at a time until the sequence fits.
tok::TokenSeq pack_pair(std::string_view text_a, std::string_view text_b,
                        const tok::SubwordVocab& vocab, std::size_t max_len);

struct FineTuneConfig {
    std::size_t epochs = 3;
    std::size_t batch_size = 16;
    double learning_rate = 1e-5;
    train::AdamConfig adam;
    std::uint64_t seed = 13;
    std::size_t max_len = 128;
    /// QA answers whose target score reaches this count as relevant.
    double relevance_threshold = 6.0;

    /// Full-scale values per task (QA 16/1e-5, NLI 32/1e-5, NER 32/5e-5).
    static FineTuneConfig paper(HeadKind kind);
    static FineTuneConfig from_json(const nlohmann::json& j, FineTuneConfig base);
};

using Dataset = std::variant<std::vector<QaPair>, std::vector<NliPair>, std::vector<TaggedSentence>>;

struct FineTuneReport {
    std::vector<double> epoch_loss; // mean training loss per epoch
    std::map<std::string, double> metrics;
};

/// Trains head and encoder in place. Metrics are computed on `eval` when
/// given, otherwise on the training data.
FineTuneReport fine_tune(TaskModel& model, const Dataset& data, const tok::SubwordVocab& vocab,
                         const FineTuneConfig& cfg, const Dataset* eval = nullptr);

/// Metrics of an already-trained model on a dataset.
std::map<std::string, double> evaluate_task(const TaskModel& model, const Dataset& data,
                                            const tok::SubwordVocab& vocab, const FineTuneConfig& cfg);

// Metrics

template <typename T>
double accuracy(const std::vector<T>& preds, const std::vector<T>& golds);

/// Each list holds relevance flags in predicted order.
double mrr(const std::vector<std::vector<bool>>& ranked);
double precision_at_k(const std::vector<std::vector<bool>>& ranked, std::size_t k);

/// Half-open [start, end) spans. A stray I (after O or at the start) opens a span.
std::vector<std::pair<std::size_t, std::size_t>> bio_decode(const std::vector<Tag>& tags);
std::vector<Tag> bio_encode(const std::vector<std::pair<std::size_t, std::size_t>>& spans,
                            std::size_t length);

/// Exact-match span F1 pooled over sentences; 1.0 when both sides have no spans.
double span_f1(const std::vector<std::vector<Tag>>& pred, const std::vector<std::vector<Tag>>& gold);
double span_f1(const std::vector<Tag>& pred, const std::vector<Tag>& gold);

// JSONL fixture formats
Dataset read_dataset(HeadKind kind, std::string_view jsonl);
std::string write_dataset(const Dataset& data);

} // namespace dki::downstream
