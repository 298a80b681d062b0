#pragma once

#include <memory>
#include <string>

#include "fmgan/config.hpp"
#include "fmgan/eval.hpp"
#include "fmgan/trainer.hpp"

namespace fmgan {

// Binary trainer snapshot: format version, the materialized experiment
// config, iteration, RNG state, named parameter/buffer tensors (row-major
// float32, little-endian), optimizer slots, and the center bank.
// save -> load -> save is byte-identical; version mismatches are rejected.
void save_checkpoint(const std::string& path, Trainer& trainer, const std::string& config_text);

// The embedded config text (to rebuild the trainer before loading state).
std::string peek_checkpoint_config(const std::string& path);

// Restores state into a trainer built from the same config.
void load_checkpoint_into(const std::string& path, Trainer& trainer);

struct RestoredRun {
    ExperimentConfig config;
    std::shared_ptr<const Dataset> dataset;
    std::unique_ptr<Trainer> trainer;
};

// Rebuilds config, dataset and trainer from a checkpoint in one step.
RestoredRun restore_run(const std::string& checkpoint_path);

// Frozen reference classifier persistence.
void save_reference(const std::string& path, ReferenceClassifier& ref);
ReferenceClassifier load_reference(const std::string& path);

}  // namespace fmgan
