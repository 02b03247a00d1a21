#pragma once

#include <string>
#include <vector>

#include "trb/schema.hpp"

namespace trb {

// Keypoint accuracy with per-person relative thresholds. A keypoint counts
// correct iff its Euclidean error is <= alpha * reference (closed bound);
// unlabeled ground-truth keypoints are excluded from both numerator and
// denominator. Persons whose reference keypoints are unlabeled are skipped
// and counted in skipped_persons.
struct EvalReport {
  std::vector<double> per_keypoint;  // percent; 0 when never evaluated
  std::vector<long> counts;          // evaluated instances per keypoint
  double ske = 0, con = 0, mean = 0;  // pooled percents over instance counts
  int skipped_persons = 0;
  std::string threshold;  // human-readable threshold definition
};

enum class RefMetric { Pck, Pckh };

// reference = ||left_shoulder - right_hip|| (torso_pair)
EvalReport pck(const std::vector<PersonAnnotation>& preds,
               const std::vector<PersonAnnotation>& gts, const KeypointSchema& s,
               double alpha = 0.2);

// reference = ||head_top - neck|| (head_pair), the synthetic head size
EvalReport pckh(const std::vector<PersonAnnotation>& preds,
                const std::vector<PersonAnnotation>& gts, const KeypointSchema& s,
                double alpha = 0.5);

// Mean of the pooled overall accuracy across an evenly spaced alpha grid
// [0, alpha_max] with the given step, in [0, 100].
double auc(const std::vector<PersonAnnotation>& preds, const std::vector<PersonAnnotation>& gts,
           const KeypointSchema& s, RefMetric metric, double alpha_max = 0.5,
           double step = 0.01);

// per-keypoint CSV rows: name, count, accuracy
std::string report_csv(const EvalReport& r, const KeypointSchema& s);
// compact table with the Ske. / Con. / Mean summary line
std::string report_table(const EvalReport& r, const std::string& title);

}  // namespace trb
