#include "dunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "dunet/errors.hpp"
#include "dunet/retinex.hpp"

namespace dunet {

double iou(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt) {
    if (pred.shape != gt.shape)
        throw std::invalid_argument("iou: shape mismatch " + pred.shape.str() + " vs " + gt.shape.str());
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] != 0, g = gt.data[i] != 0;
        if (p && g) ++tp;
        else if (p) ++fp;
        else if (g) ++fn;
    }
    if (tp + fp + fn == 0) return 1.0; // both empty: degenerate agreement
    return static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
}

Tensor<std::uint8_t> mask_from_logits(const Tensor<float>& logits, double threshold) {
    if (logits.shape.nd != 3 || logits.shape[0] != 1)
        throw std::invalid_argument("mask_from_logits: expected [1,H,W]");
    Tensor<std::uint8_t> out(Shape{logits.shape[1], logits.shape[2]});
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double z = static_cast<double>(logits.data[i]);
        const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        out.data[i] = s > threshold ? 1 : 0;
    }
    return out;
}

Tensor<std::uint8_t> predict_mask(Model& model, const Sample& sample, double threshold) {
    Tensor<float> logits;
    if (model.config().variant == Variant::dvsfn) {
        const Tensor<float> corrected = correct(sample.image, model.config().illum);
        logits = model.forward(sample.image, &corrected);
    } else {
        logits = model.forward(sample.image);
    }
    return mask_from_logits(logits, threshold);
}

EvalReport evaluate(Model& model, const std::vector<Sample>& test_set, double threshold,
                    const std::string& model_id) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    EvalReport rep;
    rep.threshold = threshold;
    rep.model_id = model_id;
    for (const Sample& s : test_set) {
        if (s.image.shape[1] != model.config().in_h || s.image.shape[2] != model.config().in_w)
            throw std::invalid_argument("evaluate: sample '" + s.id + "' is " +
                                        s.image.shape.str() + " but the model expects " +
                                        std::to_string(model.config().in_h) + "x" +
                                        std::to_string(model.config().in_w));
        rep.records.push_back({s.id, iou(predict_mask(model, s, threshold), s.mask)});
    }
    std::sort(rep.records.begin(), rep.records.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.id < b.id; });
    double sum = 0.0;
    for (const EvalRecord& r : rep.records) sum += r.iou;
    rep.miou = sum / static_cast<double>(rep.records.size());
    rep.max_iou = rep.miou;
    return rep;
}

double exceed_rate(const EvalReport& report, const EvalReport& baseline) {
    if (report.records.size() != baseline.records.size())
        throw DataError("exceed_rate: reports have different sizes");
    std::map<std::string, double> base;
    for (const EvalRecord& r : baseline.records) base[r.id] = r.iou;
    std::int64_t wins = 0;
    for (const EvalRecord& r : report.records) {
        const auto it = base.find(r.id);
        if (it == base.end()) throw DataError("exceed_rate: id '" + r.id + "' missing from baseline");
        if (r.iou > it->second) ++wins;
    }
    return static_cast<double>(wins) / static_cast<double>(report.records.size());
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    char buf[64];
    out << "# dunet eval report v1\n";
    out << "# model: " << report.model_id << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", report.threshold);
    out << "# threshold: " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.9f", report.miou);
    out << "# miou: " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.9f", report.max_iou);
    out << "# max_iou: " << buf << "\n";
    for (const EvalRecord& r : report.records) {
        std::snprintf(buf, sizeof buf, "%.9f", r.iou);
        out << r.id << "\t" << buf << "\n";
    }
    if (!out) throw DataError(path.string() + ": write failed");
}

EvalReport load_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError(path.string() + ": cannot open for reading");
    EvalReport rep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ls(line.substr(1));
            std::string key;
            ls >> key;
            if (key == "model:") ls >> rep.model_id;
            else if (key == "threshold:") ls >> rep.threshold;
            else if (key == "miou:") ls >> rep.miou;
            else if (key == "max_iou:") ls >> rep.max_iou;
            continue;
        }
        std::istringstream ls(line);
        EvalRecord r;
        if (!(ls >> r.id >> r.iou)) throw DataError(path.string() + ": malformed record '" + line + "'");
        rep.records.push_back(std::move(r));
    }
    return rep;
}

} // namespace dunet
