#include "trb/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace trb {

namespace {

double dist(const Keypoint& a, const Keypoint& b) {
  const double dx = static_cast<double>(a.x) - b.x, dy = static_cast<double>(a.y) - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

EvalReport evaluate(const std::vector<PersonAnnotation>& preds,
                    const std::vector<PersonAnnotation>& gts, const KeypointSchema& s,
                    std::pair<int, int> ref_pair, double alpha, const std::string& threshold) {
  if (preds.size() != gts.size())
    throw std::invalid_argument("evaluate: " + std::to_string(preds.size()) + " predictions vs " +
                                std::to_string(gts.size()) + " ground truths");
  const int K = s.n_keypoints();
  EvalReport r;
  r.per_keypoint.assign(K, 0.0);
  r.counts.assign(K, 0);
  r.threshold = threshold;
  std::vector<long> hits(K, 0);
  for (std::size_t p = 0; p < gts.size(); ++p) {
    const PersonAnnotation& gt = gts[p];
    const PersonAnnotation& pr = preds[p];
    if (gt.keypoints.size() != static_cast<std::size_t>(K) ||
        pr.keypoints.size() != static_cast<std::size_t>(K))
      throw std::invalid_argument("evaluate: keypoint count mismatch at person " +
                                  std::to_string(p));
    const Keypoint& ra = gt.keypoints[ref_pair.first];
    const Keypoint& rb = gt.keypoints[ref_pair.second];
    if (!ra.labeled() || !rb.labeled()) {
      ++r.skipped_persons;
      continue;
    }
    const double thresh = alpha * dist(ra, rb);
    for (int k = 0; k < K; ++k) {
      if (!gt.keypoints[k].labeled()) continue;
      ++r.counts[k];
      if (dist(pr.keypoints[k], gt.keypoints[k]) <= thresh) ++hits[k];
    }
  }
  long ske_n = 0, ske_h = 0, con_n = 0, con_h = 0;
  for (int k = 0; k < K; ++k) {
    if (r.counts[k] > 0) r.per_keypoint[k] = 100.0 * hits[k] / r.counts[k];
    (s.is_skeleton(k) ? ske_n : con_n) += r.counts[k];
    (s.is_skeleton(k) ? ske_h : con_h) += hits[k];
  }
  r.ske = ske_n ? 100.0 * ske_h / ske_n : 0.0;
  r.con = con_n ? 100.0 * con_h / con_n : 0.0;
  r.mean = (ske_n + con_n) ? 100.0 * (ske_h + con_h) / (ske_n + con_n) : 0.0;
  return r;
}

std::pair<int, int> ref_of(const KeypointSchema& s, RefMetric m) {
  return m == RefMetric::Pck ? s.torso_pair : s.head_pair;
}

}  // namespace

EvalReport pck(const std::vector<PersonAnnotation>& preds,
               const std::vector<PersonAnnotation>& gts, const KeypointSchema& s, double alpha) {
  std::ostringstream t;
  t << "err <= " << alpha << " * torso (" << s.names[s.torso_pair.first] << " to "
    << s.names[s.torso_pair.second] << ")";
  return evaluate(preds, gts, s, s.torso_pair, alpha, t.str());
}

EvalReport pckh(const std::vector<PersonAnnotation>& preds,
                const std::vector<PersonAnnotation>& gts, const KeypointSchema& s, double alpha) {
  std::ostringstream t;
  t << "err <= " << alpha << " * head (" << s.names[s.head_pair.first] << " to "
    << s.names[s.head_pair.second] << ")";
  return evaluate(preds, gts, s, s.head_pair, alpha, t.str());
}

double auc(const std::vector<PersonAnnotation>& preds, const std::vector<PersonAnnotation>& gts,
           const KeypointSchema& s, RefMetric metric, double alpha_max, double step) {
  if (step <= 0 || alpha_max < 0) throw std::invalid_argument("auc: bad alpha grid");
  const std::pair<int, int> ref = ref_of(s, metric);
  double sum = 0.0;
  int n = 0;
  // fixed-count grid avoids accumulating the step
  const int last = static_cast<int>(std::llround(alpha_max / step));
  for (int i = 0; i <= last; ++i) {
    sum += evaluate(preds, gts, s, ref, i * step, "").mean;
    ++n;
  }
  return sum / n;
}

std::string report_csv(const EvalReport& r, const KeypointSchema& s) {
  std::ostringstream os;
  os << "keypoint,count,accuracy\n";
  for (std::size_t k = 0; k < r.per_keypoint.size(); ++k)
    os << s.names[k] << "," << r.counts[k] << "," << r.per_keypoint[k] << "\n";
  os << "Ske.,," << r.ske << "\nCon.,," << r.con << "\nMean,," << r.mean << "\n";
  return os.str();
}

std::string report_table(const EvalReport& r, const std::string& title) {
  std::ostringstream os;
  os << title << "  [" << r.threshold << "]\n";
  os.setf(std::ios::fixed);
  os.precision(2);
  os << "  Ske. " << r.ske << "  Con. " << r.con << "  Mean " << r.mean;
  if (r.skipped_persons) os << "  (skipped " << r.skipped_persons << " persons)";
  os << "\n";
  return os.str();
}

}  // namespace trb
