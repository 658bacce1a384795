#pragma once

#include "kinflow/config.hpp"

#include <stdexcept>
#include <string>

namespace kinflow {

// A stage failed; exit_code identifies the stage (parse=2, stats=3,
// features=4, mask=5, inject=6, train=7, sample=8, eval=9, write=10).
struct StageError : std::runtime_error {
    StageError(std::string stage_, int exit_code_, const std::string& msg)
        : std::runtime_error(msg), stage(std::move(stage_)), exit_code(exit_code_) {}
    std::string stage;
    int exit_code;
};

// End-to-end run: parse the trajectory, fit feature stats over the training
// dataset, extract features, build the mask, inject the conditioning latent,
// train the toy velocity model, sample, and evaluate. All artifacts land in
// out_dir (stats.json, feats.tensor, lt.tensor, mask.tensor, xtraj.tensor,
// ckpt/, vid.tensor, audio.wav, report.json, config.json, MANIFEST.json).
// Every byte written is a pure function of (cfg, trajectory file).
void run_pipeline(const RunConfig& cfg, const std::string& traj_path, const std::string& out_dir);

}  // namespace kinflow
