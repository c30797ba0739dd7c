// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fintrec/model.hpp"
#include "fintrec/train.hpp"

namespace fintrec::explain {

enum class ImportanceMethod { attention, grad_sam, averaged };

const char* to_string(ImportanceMethod method);

// Per-position relevance over one input: non-negative, exactly 0 at padded
// positions, and summing to 1 over the rest. uniform_fallback marks the
// degenerate case where every rectified gradient vanished and the scores fell
// back to uniform; downstream consumers should treat such rows as
// uninformative rather than meaningful.
struct VisitImportance {
    std::vector<double> score;
    ImportanceMethod method = ImportanceMethod::attention;
    bool uniform_fallback = false;
};

// Attention received per position: the column-mean of each attention matrix
// restricted to allowed query/key pairs, averaged across heads and layers,
// then normalized into a distribution.
VisitImportance attention_importance(model::FinTRecModel& m, const model::ModelInput& in);

// Gradient-weighted attention: each attention entry is weighted by the
// rectified gradient of the target with respect to that entry, column-summed
// to positions, averaged across heads and layers, and normalized. The target
// is the conversion probability for an encoder model and the logit of the
// labeled clicked item at the last labeled position for a decoder model.
VisitImportance grad_sam_importance(model::FinTRecModel& m, const model::ModelInput& in);

// Mean of two distributions over the same positions; stays a distribution.
VisitImportance averaged_importance(const VisitImportance& a, const VisitImportance& b);

// ---- visit granularity ----
// Tokens group into visits (sessions): session-break tokens open the next
// visit and are counted with it. Padded positions map to -1.

std::vector<int> visit_ids(const model::ModelInput& in);

// Summed importance per visit, index-aligned with the ids from visit_ids.
std::vector<double> visit_scores(const VisitImportance& imp, const std::vector<int>& ids);

// Which visits to keep when truncating a sequence to its important parts.
// The endpoint visit is always kept; a sequence with too few visits for the
// selection keeps everything.
enum class VisitSelection { most_important, second_most, first_two };

const char* to_string(VisitSelection sel);

// Rebuilds the input from only the kept visits' positions (separator included)
// in original order, unpadded. Labels at dropped positions are dropped;
// surviving label positions are re-indexed. The head kind tells the function
// how to slice the daily-embedding block (per position for the click model,
// endpoint-only for the conversion model).
model::ModelInput truncate_to_visits(const model::ModelInput& in, const VisitImportance& imp,
                                     VisitSelection sel,
                                     model::HeadKind head = model::HeadKind::pcvr);

// ---- visit ablation ----

struct AblationRow {
    VisitSelection selection = VisitSelection::most_important;
    double auroc = 0.0;
    double relative = 0.0;  // auroc / full-sequence auroc
};

struct AblationReport {
    double full_auroc = 0.0;
    std::vector<AblationRow> rows;  // most important, second most, first two
};

// Trains a conversion model on the full sequences, then retrains from scratch
// on sequences truncated to each selection of their most important visits, and
// reports validation AUROC relative to the full-sequence model. Importance
// vectors align one-to-one with the inputs.
AblationReport visit_ablation(const model::TransformerConfig& cfg,
                              const std::vector<model::ModelInput>& train_inputs,
                              const std::vector<model::ModelInput>& val_inputs,
                              const std::vector<VisitImportance>& train_importance,
                              const std::vector<VisitImportance>& val_importance,
                              const train::TrainConfig& tc);

// ---- exports ----

struct ImportanceRow {
    int32_t user_id = 0;
    int64_t endpoint_ts = 0;
    int session_rank = 0;  // 0 = endpoint visit, counting backwards in time
    double score = 0.0;
    ImportanceMethod method = ImportanceMethod::attention;
};

std::vector<ImportanceRow> importance_rows(int32_t user_id, int64_t endpoint_ts,
                                           const model::ModelInput& in,
                                           const VisitImportance& imp);

void write_importance_csv(const std::string& path, const std::vector<ImportanceRow>& rows);

}  // namespace fintrec::explain
