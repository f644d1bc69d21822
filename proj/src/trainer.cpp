#include "segline/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <spdlog/spdlog.h>

#include "segline/metrics.hpp"
#include "segline/rng.hpp"

namespace segline {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "segline-checkpoint/1";

const char* schedule_name(LrSchedule s) {
    return s == LrSchedule::constant ? "constant" : "linear_decay";
}

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::sgd ? "sgd" : "sgd_momentum";
}

json weights_json(const LossWeights& w) {
    return {{"stp", w.stp}, {"tc", w.tc}, {"nsp", w.nsp}};
}

LossWeights weights_from_json(const json& j) {
    LossWeights w;
    if (j.is_array()) {
        if (j.size() != 3) throw ConfigError("weights array must be [stp, tc, nsp]");
        w = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    } else if (j.is_object()) {
        for (const auto& [key, value] : j.items()) {
            if (key == "stp")
                w.stp = value.get<double>();
            else if (key == "tc")
                w.tc = value.get<double>();
            else if (key == "nsp")
                w.nsp = value.get<double>();
            else
                throw ConfigError("unknown weights key: " + key);
        }
    } else {
        throw ConfigError("weights must be an object or a 3-element array");
    }
    return w;
}

}  // namespace

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    weights.validate();
    if (split.train < 0 || split.valid < 0 || split.test < 0 ||
        std::abs(split.train + split.valid + split.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must be nonnegative and sum to 1");
}

json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"lr0", lr0},
            {"lr_schedule", schedule_name(lr_schedule)},
            {"seed", seed},
            {"weights", weights_json(weights)},
            {"optimizer", optimizer_name(optimizer)},
            {"momentum", momentum},
            {"hidden", hidden},
            {"split", {{"train", split.train}, {"valid", split.valid}, {"test", split.test}, {"seed", split_seed}}}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    TrainConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "batch_size") {
                c.batch_size = value.get<std::size_t>();
            } else if (key == "max_epochs") {
                c.max_epochs = value.get<std::size_t>();
            } else if (key == "lr0") {
                c.lr0 = value.get<double>();
            } else if (key == "lr_schedule") {
                const auto s = value.get<std::string>();
                if (s == "constant")
                    c.lr_schedule = LrSchedule::constant;
                else if (s == "linear_decay")
                    c.lr_schedule = LrSchedule::linear_decay;
                else
                    throw ConfigError("unknown lr_schedule: " + s);
            } else if (key == "seed") {
                c.seed = value.get<std::uint64_t>();
            } else if (key == "weights") {
                c.weights = weights_from_json(value);
            } else if (key == "optimizer") {
                const auto s = value.get<std::string>();
                if (s == "sgd")
                    c.optimizer = Optimizer::sgd;
                else if (s == "sgd_momentum")
                    c.optimizer = Optimizer::sgd_momentum;
                else
                    throw ConfigError("unknown optimizer: " + s);
            } else if (key == "momentum") {
                c.momentum = value.get<double>();
            } else if (key == "hidden") {
                c.hidden = value.get<std::size_t>();
            } else if (key == "split") {
                for (const auto& [sk, sv] : value.items()) {
                    if (sk == "train")
                        c.split.train = sv.get<double>();
                    else if (sk == "valid")
                        c.split.valid = sv.get<double>();
                    else if (sk == "test")
                        c.split.test = sv.get<double>();
                    else if (sk == "seed")
                        c.split_seed = sv.get<std::uint64_t>();
                    else
                        throw ConfigError("unknown split key: " + sk);
                }
            } else {
                throw ConfigError("unknown train config key: " + key);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string TrainConfig::hash() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_json().dump());
    return os.str();
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& config) {
    if (config.lr_schedule == LrSchedule::constant || total_steps == 0) return config.lr0;
    return config.lr0 * (1.0 - 0.9 * static_cast<double>(step) / static_cast<double>(total_steps));
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const ParamLayout& layout = ckpt.params.layout();
    json tensors = json::array();
    for (const auto& t : tensor_table(layout)) tensors.push_back({{"name", t.name}, {"shape", {t.rows, t.cols}}});
    const json header = {{"format", kCheckpointFormat},
                         {"d", layout.dim},
                         {"K", layout.topics},
                         {"hidden", layout.hidden},
                         {"weights", weights_json(ckpt.weights)},
                         {"config_hash", ckpt.config_hash},
                         {"epoch", ckpt.epoch},
                         {"validation_pk", ckpt.validation_pk},
                         {"config", ckpt.config},
                         {"tensors", tensors},
                         {"param_count", layout.total()}};

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + path.string());
    out << header.dump() << '\n';
    for (float x : ckpt.params.values()) {
        auto bits = std::bit_cast<std::array<char, 4>>(x);
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        out.write(bits.data(), 4);
    }
    if (!out) throw Error("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open checkpoint: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ParseError("checkpoint " + path.string() + ": missing header");
    Checkpoint ckpt;
    std::size_t count = 0;
    try {
        const auto header = json::parse(line);
        if (header.at("format").get<std::string>() != kCheckpointFormat)
            throw ParseError("checkpoint " + path.string() + ": unsupported format");
        ckpt.params = HeadParams(header.at("d").get<std::size_t>(), header.at("K").get<std::size_t>(),
                                 header.value("hidden", std::size_t{0}));
        ckpt.weights = weights_from_json(header.at("weights"));
        ckpt.config_hash = header.at("config_hash").get<std::string>();
        ckpt.epoch = header.at("epoch").get<std::size_t>();
        ckpt.validation_pk = header.at("validation_pk").get<double>();
        ckpt.config = header.value("config", json::object());
        count = header.at("param_count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ParseError("checkpoint " + path.string() + ": " + e.what());
    }
    if (count != ckpt.params.values().size())
        throw ParseError("checkpoint " + path.string() + ": param_count does not match d and K");

    for (float& x : ckpt.params.values()) {
        std::array<char, 4> bits;
        if (!in.read(bits.data(), 4)) throw ParseError("checkpoint " + path.string() + ": truncated parameters");
        if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
        x = std::bit_cast<float>(bits);
    }
    if (in.peek() != std::char_traits<char>::eof())
        throw ParseError("checkpoint " + path.string() + ": trailing bytes");
    ckpt.params.check_finite();
    return ckpt;
}

json EpochRecord::to_json() const {
    return {{"epoch", epoch}, {"train_loss", train_loss}, {"val_pk", val_pk}, {"val_wd", val_wd}, {"lr", lr}};
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write training log: " + path.string());
    for (const auto& r : history) out << r.to_json().dump() << '\n';
}

// ---------------------------------------------------------------------------
// Training

void sgd_step(HeadParams& params, const std::vector<double>& grad, double lr, const TrainConfig& config,
              OptimizerState& state) {
    auto& values = params.values();
    if (grad.size() != values.size()) throw ShapeError("gradient size does not match parameters");
    if (config.optimizer == Optimizer::sgd_momentum) {
        if (state.velocity.size() != values.size()) state.velocity.assign(values.size(), 0.0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            state.velocity[i] = config.momentum * state.velocity[i] + grad[i];
            values[i] = static_cast<float>(static_cast<double>(values[i]) - lr * state.velocity[i]);
        }
    } else {
        for (std::size_t i = 0; i < values.size(); ++i)
            values[i] = static_cast<float>(static_cast<double>(values[i]) - lr * grad[i]);
    }
}

HeadParams init_params(std::size_t dim, std::size_t topics, std::size_t hidden, Rng& rng) {
    HeadParams p(dim, topics, hidden);
    auto xavier = [&](std::span<float> w, std::size_t fan_in, std::size_t fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (float& x : w) x = static_cast<float>(uniform_real(rng, -a, a));
    };
    xavier(p.tc_weight(), dim, topics);
    xavier(p.nsp_weight(), p.layout().pair_input(), 2);
    xavier(p.stp_weight(), p.layout().pair_input(), 2);
    if (hidden > 0) {
        xavier(p.nsp_hidden_weight(), 3 * dim, hidden);
        xavier(p.stp_hidden_weight(), 3 * dim, hidden);
    }
    return p;
}

SegmentMode validation_mode(const LossWeights& weights) {
    return weights.stp > 0.0 ? SegmentMode::stp : SegmentMode::tc_only;
}

std::pair<double, double> validation_scores(const HeadParams& params, const std::vector<Document>& docs,
                                            const EmbeddingMatrix& embeddings, SegmentMode mode) {
    std::vector<Segmentation> gold;
    gold.reserve(docs.size());
    for (const auto& d : docs) gold.push_back(derive_gold(d));
    const auto hyp = segment_all(params, docs, embeddings, mode);
    const auto report = evaluate(gold, hyp);
    return {report.pk, report.windowdiff};
}

TrainResult train(const TrainConfig& config, const std::vector<PairExample>& train_pairs,
                  const std::vector<Document>& valid_docs, const EmbeddingMatrix& embeddings, std::size_t topics) {
    config.validate();
    if (train_pairs.empty()) throw ConfigError("train: no training pairs");
    if (valid_docs.empty()) throw ConfigError("train: no validation documents");

    Rng rng(config.seed);
    HeadParams params = init_params(embeddings.dim(), topics, config.hidden, rng);
    OptimizerState opt;
    const SegmentMode mode = validation_mode(config.weights);

    const std::size_t n = train_pairs.size();
    const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const std::size_t total_steps = steps_per_epoch * config.max_epochs;

    TrainResult result;
    result.best.config_hash = config.hash();
    result.best.config = config.to_json();
    result.best.weights = config.weights;
    bool have_best = false;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<PairExample> batch;
    batch.reserve(config.batch_size);
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle(std::span(order), rng);
        double loss_sum = 0.0;
        const double epoch_lr = lr_at(step, total_steps, config);
        for (std::size_t start = 0; start < n; start += config.batch_size, ++step) {
            batch.clear();
            for (std::size_t k = start; k < std::min(n, start + config.batch_size); ++k)
                batch.push_back(train_pairs[order[k]]);
            LossResult lr;
            try {
                lr = multitask_loss(params, batch, embeddings, config.weights);
            } catch (const NumericalError& e) {
                throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step) + ": " + e.what());
            }
            loss_sum += lr.loss * static_cast<double>(batch.size());
            sgd_step(params, lr.grad, lr_at(step, total_steps, config), config, opt);
        }
        try {
            params.check_finite();
        } catch (const NumericalError& e) {
            throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch) + ": " + e.what());
        }

        const auto [val_pk, val_wd] = validation_scores(params, valid_docs, embeddings, mode);
        EpochRecord rec{epoch, loss_sum / static_cast<double>(n), val_pk, val_wd, epoch_lr};
        spdlog::debug("epoch {} loss {:.6f} val_pk {:.4f} val_wd {:.4f} lr {:.3g}", epoch, rec.train_loss, val_pk,
                      val_wd, epoch_lr);
        result.history.push_back(rec);

        if (!have_best || val_pk < result.best.validation_pk) {
            have_best = true;
            result.best.params = params;
            result.best.epoch = epoch;
            result.best.validation_pk = val_pk;
        }
    }
    return result;
}

}  // namespace segline
