#pragma once

#include <string>
#include <vector>

#include "trb/checkpoint.hpp"
#include "trb/image.hpp"
#include "trb/metrics.hpp"
#include "trb/net.hpp"
#include "trb/synth.hpp"

namespace trb {

struct Sample {
  ImageU8 image;  // grayscale, square
  PersonAnnotation anno;
};

struct TrainSet {
  KeypointSchema schema;
  std::vector<Sample> samples;
};

// Deterministic: sample i is generated from seed + i regardless of n.
TrainSet generate_train_set(int n, std::uint64_t seed, const GenConfig& gcfg,
                            const KeypointSchema& schema);

// Directory layout: images/NNNNNN.pgm, annotations.json, manifest.json.
void write_dataset_dir(const TrainSet& ts, const std::string& dir, std::uint64_t seed,
                       const std::string& config_text);
TrainSet read_dataset_dir(const std::string& dir);

struct BatchTensors {
  TensorF images;   // (B, 3, S, S) in [0, 1]
  TensorF targets;  // (B, K, S/4, S/4)
  TensorF mask01;   // same shape as targets, constant 0/1 channel planes
  std::vector<PersonAnnotation> annos;  // post-augmentation ground truth
};

// Assembles one batch; with augment set, consumes rng draws in sample order.
BatchTensors make_batch(const TrainSet& ts, const std::vector<int>& idx, bool augment, Rng& rng,
                        const AugmentConfig& acfg, float sigma);

struct EpochRow {
  int epoch = 0;
  float l = 0, ls = 0, lc = 0, lp = 0;  // means over the epoch's steps
  float val_pckh = 0;
};

struct TrainingHistory {
  std::vector<EpochRow> rows;
};

// columns: epoch,L,L_S,L_C,L_P,val_pckh
std::string history_csv(const TrainingHistory& h);

struct TrainOptions {
  std::string out_dir;       // empty: write nothing
  std::string config_text;   // stored verbatim in checkpoints
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
  bool save_opt_state = false;
  int log_every = 0;  // steps between progress lines; 0 = quiet
  // checkpoint with optimizer state to continue from; the run picks up at
  // its epoch counter and reproduces an uninterrupted run bit for bit
  std::string resume_from;
};

// Adam on the model registry, seeded shuffling and augmentation, one epoch
// row per epoch. Aborts with a diagnostic naming the offending loss term if
// any component goes non-finite. Bit-deterministic for a fixed seed.
TrainingHistory train_model(Model<float>& m, const TrainSet& train, const TrainSet& val,
                            const TrainOptions& opt);

struct EvalResult {
  EvalReport pckh_final;            // the model's final output (refined when present)
  EvalReport pck_final;
  double auc_pckh = 0.0;
  std::vector<EvalReport> coarse;   // per stack, from the coarse heads
  std::vector<EvalReport> fine;     // per stack, refined maps; empty without pm
};

// limit < 0 evaluates the whole set. Missing-branch keypoints predict (0,0).
EvalResult evaluate_model(Model<float>& m, const TrainSet& data, int limit = -1);

Checkpoint model_checkpoint(const Model<float>& m, const std::string& config_text,
                            const std::string& rng_state, int epoch);
// Strict: names, order, and shapes must match the model registry.
void checkpoint_into_model(Model<float>& m, const Checkpoint& ck);

}  // namespace trb
