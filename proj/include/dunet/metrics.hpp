#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dunet/data.hpp"
#include "dunet/net.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

// TP/(TP+FP+FN) over pixels; two empty masks agree by convention (1.0).
double iou(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& gt);

Tensor<std::uint8_t> mask_from_logits(const Tensor<float>& logits, double threshold);

// sigmoid(logit) > threshold; computes the dvsfn side input when needed
Tensor<std::uint8_t> predict_mask(Model& model, const Sample& sample, double threshold = 0.5);

struct EvalRecord {
    std::string id;
    double iou;
};

struct EvalReport {
    std::vector<EvalRecord> records; // sorted by id
    double miou = 0.0;
    double max_iou = 0.0; // best validation mIoU of the producing run
    double threshold = 0.5;
    std::string model_id;
};

EvalReport evaluate(Model& model, const std::vector<Sample>& test_set, double threshold = 0.5,
                    const std::string& model_id = "");

// fraction of ids whose IoU strictly exceeds the baseline's same-id IoU
double exceed_rate(const EvalReport& report, const EvalReport& baseline);

void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);

} // namespace dunet
