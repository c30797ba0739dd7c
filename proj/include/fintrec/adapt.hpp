// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fintrec/events.hpp"
#include "fintrec/model.hpp"
#include "fintrec/pipeline.hpp"
#include "fintrec/train.hpp"

namespace fintrec::adapt {

// How much of the network a product adaptation unfreezes.
enum class FinetuneMode { lora, lp, fft };

const char* to_string(FinetuneMode mode);
FinetuneMode finetune_mode_from_string(const std::string& s);

struct LoraSpec {
    int rank = 4;
    float alpha = 4.0f;  // delta scale = alpha / rank
};

// Attach zero-initialized low-rank paths to the attention query and value
// projections of every block: W x becomes W x + (alpha/rank) * B(A x). A is
// drawn truncated-normal, B starts at zero, so the adapted forward equals the
// base exactly until training moves B.
void apply_lora(model::FinTRecModel& m, const LoraSpec& spec, uint64_t seed);

// Swap the item head for a freshly initialized one sized to the new product's
// item set. Applied in every fine-tuning mode.
void replace_output_adapter(model::FinTRecModel& m, int new_output_dim, uint64_t seed);

// Set per-parameter trainability for the mode and return the names that must
// stay bitwise frozen. Throws when the attached adapters contradict the mode
// (low-rank tensors present iff mode == lora).
std::vector<std::string> apply_mode(model::FinTRecModel& m, FinetuneMode mode);

struct ParamCensus {
    int64_t trainable = 0;   // strategy-specific unfrozen parameters
    int64_t base_total = 0;  // pre-training parameter count
    double ratio = 0.0;      // trainable / base_total
};

// Counts what each strategy unfreezes. The output adapter and the embedding
// extension are left out of the numerator: every strategy trains those
// product-specific additions, so they say nothing about the strategies'
// relative cost. Low-rank tensors do count — they are what the strategy
// trains instead of the base weights.
ParamCensus census(const model::FinTRecModel& m, FinetuneMode mode, const LoraSpec& spec);

// ---- leave-product-out protocol ----

struct ProductSplit {
    std::vector<pipeline::CtrWindow> pretrain;  // labels never touch the product
    std::vector<pipeline::CtrWindow> adapt;     // every window labeling the product
};

// Partition click windows: a window moves to the adapt set when any of its
// labels is an item of the held-out product. Throws on a product id absent
// from the catalog.
ProductSplit leave_product_out(const std::vector<pipeline::CtrWindow>& windows,
                               const Catalog& catalog, int16_t product_id);

// Vocabulary over pre-training events only: the held-out product's events
// contribute no tuples and surface as <unk> during pre-training.
pipeline::TokenVocabulary pretrain_vocab(const pipeline::SessionizedLog& log,
                                         int64_t train_end_ms, int16_t held_out_product);

// Append the held-out product's tuples after the frozen base ids, in the same
// lexicographic order the base vocabulary uses. Base ids never move. Returns
// the number of appended tokens.
int extend_vocab_with_product(pipeline::TokenVocabulary& vocab,
                              const pipeline::SessionizedLog& log, int64_t train_end_ms,
                              int16_t held_out_product);

// ---- fine-tuning driver ----

struct FinetuneConfig {
    FinetuneMode mode = FinetuneMode::lora;
    LoraSpec lora;
    train::TrainConfig trainer;
    int new_tokens = 0;      // vocabulary rows appended for the product
    int new_item_count = 0;  // width of the replaced output adapter
};

struct FinetuneReport {
    double recall1_zero_shot = 0.0;  // replaced-head model before any step
    double recall5_zero_shot = 0.0;
    double recall1 = 0.0;
    double recall5 = 0.0;
    float final_loss = 0.0f;
    int64_t trainable_params = 0;
    uint64_t base_hash = 0;  // frozen base parameters before adaptation
};

// Extends the vocabulary, replaces the output adapter, applies the mode's
// freeze predicate, trains, and reports Recall@{1,5} on the validation
// inputs before and after training. Label items must already be remapped to
// local head indices. The frozen set is snapshotted and verified bitwise; a
// violation throws. trainer.epochs = 0 skips training entirely, so the
// post-training metrics equal the zero-shot metrics by construction.
FinetuneReport finetune(model::FinTRecModel& m,
                        const std::vector<model::ModelInput>& train_inputs,
                        const std::vector<model::ModelInput>& val_inputs,
                        const FinetuneConfig& cfg);

// Adapter persistence. Delta modes (lp, lora) store only the parameters the
// mode trains plus the product additions; fft stores the full parameter set.
// The checkpoint records the hash of the frozen base parameters; loading a
// delta against a base with a different hash is refused.
void save_adapter(const std::string& path, const model::FinTRecModel& m, FinetuneMode mode,
                  uint64_t base_hash);
model::FinTRecModel load_adapter(const std::string& path, const model::FinTRecModel& base);

}  // namespace fintrec::adapt
