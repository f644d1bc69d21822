#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "segline/corpus.hpp"
#include "segline/embedder.hpp"
#include "segline/error.hpp"
#include "segline/model.hpp"
#include "segline/sampler.hpp"
#include "segline/segmenter.hpp"

namespace segline {

enum class LrSchedule { constant, linear_decay };
enum class Optimizer { sgd, sgd_momentum };

struct TrainConfig {
    std::size_t batch_size = 48;
    std::size_t max_epochs = 14;
    double lr0 = 1e-2;
    LrSchedule lr_schedule = LrSchedule::linear_decay;
    std::uint64_t seed = 0;
    LossWeights weights;
    Optimizer optimizer = Optimizer::sgd;
    double momentum = 0.9;
    // Width of the optional tanh layer in the NSP and STP heads (0 = linear).
    std::size_t hidden = 0;
    // Document split applied by the command-line driver.
    SplitRatios split;
    std::uint64_t split_seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    // Missing keys keep their defaults; unknown keys are a ConfigError.
    static TrainConfig from_json(const nlohmann::json& j);
    // 16 hex digits of FNV-1a over the canonical JSON form.
    std::string hash() const;
};

// constant: lr0. linear_decay: lr0 * (1 - 0.9 * step / total_steps).
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config);

struct Checkpoint {
    HeadParams params;
    std::size_t epoch = 0;
    double validation_pk = 1.0;
    std::string config_hash;
    LossWeights weights;
    nlohmann::json config;  // full TrainConfig JSON, for traceability
};

// One JSON header line, then the parameters as little-endian float32 in
// ParamLayout order.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_pk = 0.0;
    double val_wd = 0.0;
    double lr = 0.0;

    nlohmann::json to_json() const;
};

struct TrainResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
};

class TrainingDiverged : public NumericalError {
public:
    using NumericalError::NumericalError;
};

struct OptimizerState {
    std::vector<double> velocity;
};

// One SGD (optionally momentum) update.
void sgd_step(HeadParams& params, const std::vector<double>& grad, double lr, const TrainConfig& config,
              OptimizerState& state);

// Xavier-uniform weights and zero biases drawn from rng.
HeadParams init_params(std::size_t dim, std::size_t topics, std::size_t hidden, Rng& rng);

// STP scoring when the STP head is trained, TC-only otherwise.
SegmentMode validation_mode(const LossWeights& weights);

// Validation Pk/WindowDiff of params on docs (k from the docs' gold).
std::pair<double, double> validation_scores(const HeadParams& params, const std::vector<Document>& docs,
                                            const EmbeddingMatrix& embeddings, SegmentMode mode);

// Mini-batch training; after every epoch the validation documents are
// segmented and the parameters with the lowest Pk (earliest on ties) are kept.
TrainResult train(const TrainConfig& config, const std::vector<PairExample>& train_pairs,
                  const std::vector<Document>& valid_docs, const EmbeddingMatrix& embeddings, std::size_t topics);

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace segline
