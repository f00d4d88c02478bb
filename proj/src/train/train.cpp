#include <cmath>
#include <fstream>

#include "dunet/errors.hpp"
#include "dunet/retinex.hpp"
#include "dunet/rng.hpp"
#include "dunet/train.hpp"

namespace dunet {

void TrainConfig::validate(std::size_t train_size) const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be positive");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be positive");
    if (static_cast<std::size_t>(batch_size) > train_size)
        throw std::invalid_argument("TrainConfig: batch_size " + std::to_string(batch_size) +
                                    " exceeds train-set size " + std::to_string(train_size));
    if (lr < 0.0) throw std::invalid_argument("TrainConfig: lr must be non-negative");
    if (!(rms_decay > 0.0 && rms_decay < 1.0))
        throw std::invalid_argument("TrainConfig: rms_decay must lie in (0,1)");
    if (rms_eps <= 0.0) throw std::invalid_argument("TrainConfig: rms_eps must be positive");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be positive");
}

namespace {

Tensor<float> mask_to_target(const Tensor<std::uint8_t>& mask) {
    Tensor<float> t(Shape{1, mask.shape[0], mask.shape[1]});
    for (std::size_t i = 0; i < mask.data.size(); ++i) t.data[i] = mask.data[i] ? 1.0f : 0.0f;
    return t;
}

} // namespace

void restore_params(Model& model, const std::vector<Tensor<float>>& params) {
    const auto bank = model.parameters();
    if (bank.size() != params.size())
        throw std::invalid_argument("restore_params: parameter count mismatch");
    for (std::size_t i = 0; i < bank.size(); ++i) {
        if (bank[i]->value.shape != params[i].shape)
            throw std::invalid_argument("restore_params: shape mismatch at tensor " + std::to_string(i));
        bank[i]->value = params[i];
    }
}

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    if (train_set.empty()) throw std::invalid_argument("train: empty train set");
    if (val_set.empty()) throw std::invalid_argument("train: empty validation set");
    cfg.validate(train_set.size());
    for (const Sample& s : train_set)
        if (s.image.shape[1] != model.config().in_h || s.image.shape[2] != model.config().in_w)
            throw std::invalid_argument("train: sample '" + s.id + "' size " + s.image.shape.str() +
                                        " does not match the model input " +
                                        std::to_string(model.config().in_h) + "x" +
                                        std::to_string(model.config().in_w));

    const auto params = model.parameters();
    const bool dvsfn = model.config().variant == Variant::dvsfn;
    std::vector<Tensor<float>> corrected;
    if (dvsfn) {
        corrected.reserve(train_set.size());
        for (const Sample& s : train_set) corrected.push_back(correct(s.image, model.config().illum));
    }

    TrainResult result;
    Rng shuffle_rng(cfg.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    const float inv_batch = 1.0f / static_cast<float>(cfg.batch_size);
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        const std::size_t n_batches = train_set.size() / static_cast<std::size_t>(cfg.batch_size);
        double loss_sum = 0.0;
        std::int64_t loss_count = 0;

        for (std::size_t b = 0; b < n_batches; ++b) {
            for (int k = 0; k < cfg.batch_size; ++k) {
                const std::size_t si = order[b * static_cast<std::size_t>(cfg.batch_size) +
                                             static_cast<std::size_t>(k)];
                const Sample& s = train_set[si];
                try {
                    Tape<float> tape;
                    const auto orig = tape.leaf(s.image, false, "input");
                    std::optional<Tape<float>::Var> corr;
                    if (dvsfn) corr = tape.leaf(corrected[si], false, "input-corrected");
                    const auto logits = model.forward_graph(tape, orig, corr);
                    const auto loss = tape.bce_with_logits(logits, mask_to_target(s.mask), "loss");
                    const float loss_v = tape.value(loss).data[0];
                    if (!std::isfinite(loss_v))
                        throw NumericError("non-finite loss " + std::to_string(loss_v));
                    loss_sum += static_cast<double>(loss_v);
                    ++loss_count;
                    tape.backward(tape.scale(loss, inv_batch, "loss-mean"));
                } catch (const NumericError& e) {
                    throw NumericError("train: epoch " + std::to_string(epoch) + " step " +
                                       std::to_string(step + 1) + " sample '" + s.id + "': " + e.what());
                }
            }
            rmsprop_step(params, static_cast<float>(cfg.lr), static_cast<float>(cfg.rms_decay),
                         static_cast<float>(cfg.rms_eps));
            ++step;
        }

        TrainLogRow row;
        row.epoch = epoch;
        row.step = step;
        row.mean_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
        if (DynamicIllumModule* m = model.illum()) {
            row.has_ksums = true;
            row.kernel_sums = m->kernel_sums();
        }
        if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
            const EvalReport rep = evaluate(model, val_set, cfg.threshold);
            row.has_val = true;
            row.val_miou = rep.miou;
            if (result.best_params.empty() || rep.miou > result.best_val_miou) {
                result.best_val_miou = rep.miou;
                result.best_params.clear();
                for (const Parameter<float>* p : params) result.best_params.push_back(p->value);
            }
        }
        result.log.push_back(row);
    }
    result.steps = step;
    return result;
}

void write_train_log(const TrainResult& result, const TrainConfig& cfg, const DUNetConfig& mcfg,
                     std::int64_t param_count, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "# dunet train log v1\n";
    out << "# variant: " << to_string(mcfg.variant) << " base: " << mcfg.base_channels
        << " depth: " << mcfg.depth << " input: " << mcfg.in_h << "x" << mcfg.in_w
        << " parameters: " << param_count << "\n";
    out << "# epochs: " << cfg.epochs << " batch: " << cfg.batch_size << " lr: " << cfg.lr
        << " rms_decay: " << cfg.rms_decay << " rms_eps: " << cfg.rms_eps << " seed: " << cfg.seed
        << "\n";
    out << "# best_val_miou: " << result.best_val_miou << "\n";
    out << "# columns: epoch step mean_loss val_miou ksum0 ksum1 ksum2\n";
    char buf[64];
    for (const TrainLogRow& r : result.log) {
        out << r.epoch << " " << r.step << " ";
        std::snprintf(buf, sizeof buf, "%.6f", r.mean_loss);
        out << buf << " ";
        if (r.has_val) {
            std::snprintf(buf, sizeof buf, "%.6f", r.val_miou);
            out << buf;
        } else {
            out << "-";
        }
        if (r.has_ksums) {
            for (double s : r.kernel_sums) {
                std::snprintf(buf, sizeof buf, " %.6f", s);
                out << buf;
            }
        } else {
            out << " - - -";
        }
        out << "\n";
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

} // namespace dunet
