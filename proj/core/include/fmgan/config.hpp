#pragma once

#include <memory>
#include <string>

#include "fmgan/datasets.hpp"
#include "fmgan/trainer.hpp"

namespace fmgan {

struct DatasetConfig {
    std::string kind = "ring";  // ring | synthetic | directory
    RingDistribution ring;
    int synthetic_per_class = 500;
    std::string path;  // directory root holding manifest.tsv
};

// One experiment, fully described by a flat key = value text file. Parsing
// rejects unknown and duplicate keys; serialize() materializes every key so
// a written-back config reproduces the run exactly.
struct ExperimentConfig {
    std::string name = "experiment";
    std::string out_dir = "runs/experiment";
    TrainRunConfig run;
    ModelConfig model;
    DatasetConfig data;
    bool log_walltime = false;
    int points_count = 2000;

    static ExperimentConfig parse(const std::string& text);
    static ExperimentConfig parse_file(const std::string& path);
    std::string serialize() const;
    std::string digest() const;  // FNV-1a of the serialized form
    void validate() const;
    std::shared_ptr<const Dataset> make_dataset() const;
};

bool config_equal(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace fmgan
