#include "motion/windows.hpp"

#include "motion/errors.hpp"
#include "motion/kernels.hpp"
#include "motion/parallel.hpp"

namespace motion::data {

std::vector<SampleWindow> window(const MotionSequence& seq, int H, int T,
                                 int stride, int source_id) {
  if (H < 1 || T < 1 || stride < 1)
    throw ContractError("window: H, T and stride must all be >= 1");
  std::vector<SampleWindow> out;
  const int F = seq.frame_count();
  for (int start = 0; start + H + T <= F; start += stride) {
    SampleWindow w;
    w.source_id = source_id;
    w.start = start;
    w.past = take_rows(seq.frames, start, start + H);
    w.future = take_rows(seq.frames, start + H, start + H + T);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<SampleWindow> make_windows(std::span<const MotionSequence> seqs,
                                       int H, int T, int stride) {
  std::vector<SampleWindow> out;
  for (int s = 0; s < static_cast<int>(seqs.size()); ++s) {
    auto ws = window(seqs[s], H, T, stride, s);
    out.insert(out.end(), std::make_move_iterator(ws.begin()),
               std::make_move_iterator(ws.end()));
  }
  return out;
}

PseudoGtSet mine_pseudo_gt(const std::vector<SampleWindow>& windows,
                           double threshold) {
  if (threshold <= 0.0)
    throw ContractError("mine_pseudo_gt: threshold must be positive");
  const int n = static_cast<int>(windows.size());
  PseudoGtSet set;
  set.threshold = threshold;
  set.alternatives.resize(n);
  if (n == 0) return set;
  const std::size_t dim = windows[0].past.size() / windows[0].past.rows();
  par::for_each_index(n, [&](int a) {
    const double* pa = windows[a].last_pose();
    auto& alts = set.alternatives[a];
    for (int b = 0; b < n; ++b) {
      const double d = kernels::l2_distance(pa, windows[b].last_pose(), dim);
      if (d <= threshold) alts.push_back(b);
    }
  });
  return set;
}

}  // namespace motion::data
