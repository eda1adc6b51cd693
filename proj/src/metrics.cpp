#include "motion/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "motion/errors.hpp"
#include "motion/kernels.hpp"
#include "motion/parallel.hpp"
#include "motion/rng.hpp"

namespace motion::eval {

double apd(std::span<const Tensor> samples) {
  const int k = static_cast<int>(samples.size());
  if (k < 2) throw ContractError("apd: need at least 2 samples");
  double acc = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j)
      acc += kernels::l2_distance(samples[i].data(), samples[j].data(),
                                  samples[i].size());
  return 2.0 * acc / (static_cast<double>(k) * (k - 1));
}

double ade(std::span<const Tensor> samples, const Tensor& gt) {
  if (samples.empty()) throw ContractError("ade: no samples");
  double best = std::numeric_limits<double>::infinity();
  for (const Tensor& s : samples)
    best = std::min(best,
                    kernels::l2_distance(s.data(), gt.data(), gt.size()));
  return best / gt.rows();
}

double fde(std::span<const Tensor> samples, const Tensor& gt) {
  if (samples.empty()) throw ContractError("fde: no samples");
  const int last = gt.rows() - 1;
  const std::size_t d = gt.cols();
  double best = std::numeric_limits<double>::infinity();
  for (const Tensor& s : samples)
    best = std::min(
        best, kernels::l2_distance(s.data() + static_cast<std::size_t>(last) * d,
                                   gt.data() + static_cast<std::size_t>(last) * d,
                                   d));
  return best;
}

double mmade(std::span<const Tensor> samples, std::span<const Tensor> pseudo) {
  if (pseudo.empty()) throw ContractError("mmade: no pseudo ground truths");
  double acc = 0.0;
  for (const Tensor& p : pseudo) acc += ade(samples, p);
  return acc / pseudo.size();
}

double mmfde(std::span<const Tensor> samples, std::span<const Tensor> pseudo) {
  if (pseudo.empty()) throw ContractError("mmfde: no pseudo ground truths");
  double acc = 0.0;
  for (const Tensor& p : pseudo) acc += fde(samples, p);
  return acc / pseudo.size();
}

Tensor zero_velocity_baseline(const Tensor& past, int T) {
  if (past.rows() < 1) throw ContractError("zero_velocity_baseline: empty past");
  Tensor out(T, past.cols());
  const double* last =
      past.data() + static_cast<std::size_t>(past.rows() - 1) * past.cols();
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < past.cols(); ++c) out(t, c) = last[c];
  return out;
}

std::string EvalReport::table() const {
  char buf[256];
  std::ostringstream out;
  out << "metric      value\n";
  std::snprintf(buf, sizeof(buf), "APD    %10.6f\n", apd);
  out << buf;
  std::snprintf(buf, sizeof(buf), "ADE    %10.6f\n", ade);
  out << buf;
  std::snprintf(buf, sizeof(buf), "FDE    %10.6f\n", fde);
  out << buf;
  std::snprintf(buf, sizeof(buf), "MMADE  %10.6f\n", mmade);
  out << buf;
  std::snprintf(buf, sizeof(buf), "MMFDE  %10.6f\n", mmfde);
  out << buf;
  for (const auto& [name, value] : per_part_apd) {
    std::snprintf(buf, sizeof(buf), "APD[%s]  %10.6f\n", name.c_str(), value);
    out << buf;
  }
  out << "sequences " << sequences << ", samples/sequence "
      << samples_per_sequence;
  if (skipped_mm > 0) out << ", sequences without pseudo GT " << skipped_mm;
  out << "\n";
  return out.str();
}

std::string EvalReport::csv() const {
  std::ostringstream out;
  out << "metric,value\n";
  out << "apd," << apd << "\n";
  out << "ade," << ade << "\n";
  out << "fde," << fde << "\n";
  out << "mmade," << mmade << "\n";
  out << "mmfde," << mmfde << "\n";
  for (const auto& [name, value] : per_part_apd)
    out << "apd_" << name << "," << value << "\n";
  out << "sequences," << sequences << "\n";
  out << "samples_per_sequence," << samples_per_sequence << "\n";
  out << "skipped_mm," << skipped_mm << "\n";
  return out.str();
}

namespace {

std::vector<Tensor> part_slices(const std::vector<Tensor>& samples,
                                const std::vector<int>& coords) {
  std::vector<Tensor> out;
  out.reserve(samples.size());
  for (const Tensor& s : samples) {
    Tensor slice(s.rows(), static_cast<int>(coords.size()));
    for (int r = 0; r < s.rows(); ++r)
      for (std::size_t c = 0; c < coords.size(); ++c)
        slice(r, static_cast<int>(c)) = s(r, coords[c]);
    out.push_back(std::move(slice));
  }
  return out;
}

}  // namespace

EvalReport score_samples(const std::vector<std::vector<Tensor>>& samples,
                         std::span<const data::SampleWindow> windows,
                         const data::PseudoGtSet& pseudo_set,
                         const gen::PartitionSpec* partition) {
  if (samples.size() != windows.size())
    throw ContractError("score_samples: sample/window count mismatch");
  const int n = static_cast<int>(windows.size());
  if (n == 0) throw ContractError("score_samples: no sequences");

  struct Row {
    double apd = 0, ade = 0, fde = 0, mmade = 0, mmfde = 0;
    std::vector<double> part_apd;
    bool has_mm = false;
  };
  std::vector<Row> rows(n);

  std::vector<std::vector<int>> part_coords;
  if (partition)
    for (int p = 0; p < partition->count(); ++p) {
      std::vector<int> coords;
      for (int j : partition->parts[p])
        for (int k = 0; k < 3; ++k) coords.push_back(3 * j + k);
      part_coords.push_back(std::move(coords));
    }

  par::for_each_index(n, [&](int w) {
    Row& row = rows[w];
    const std::vector<Tensor>& s = samples[w];
    row.apd = s.size() >= 2 ? apd(s) : 0.0;
    row.ade = ade(s, windows[w].future);
    row.fde = fde(s, windows[w].future);
    std::vector<Tensor> pseudo;
    if (w < static_cast<int>(pseudo_set.alternatives.size()))
      for (int alt : pseudo_set.alternatives[w])
        pseudo.push_back(windows[alt].future);
    if (!pseudo.empty()) {
      row.mmade = mmade(s, pseudo);
      row.mmfde = mmfde(s, pseudo);
      row.has_mm = true;
    }
    for (const auto& coords : part_coords) {
      auto slices = part_slices(s, coords);
      row.part_apd.push_back(slices.size() >= 2 ? apd(slices) : 0.0);
    }
  });

  EvalReport report;
  report.sequences = n;
  report.samples_per_sequence = static_cast<int>(samples[0].size());
  int mm_count = 0;
  for (const Row& row : rows) {
    report.apd += row.apd;
    report.ade += row.ade;
    report.fde += row.fde;
    if (row.has_mm) {
      report.mmade += row.mmade;
      report.mmfde += row.mmfde;
      ++mm_count;
    }
  }
  report.apd /= n;
  report.ade /= n;
  report.fde /= n;
  report.skipped_mm = n - mm_count;
  if (mm_count > 0) {
    report.mmade /= mm_count;
    report.mmfde /= mm_count;
  }
  if (partition)
    for (int p = 0; p < partition->count(); ++p) {
      double acc = 0.0;
      for (const Row& row : rows) acc += row.part_apd[p];
      report.per_part_apd.emplace_back(partition->names[p], acc / n);
    }
  return report;
}

EvalReport evaluate_model(gen::GeneratorStack& stack,
                          std::span<const data::SampleWindow> windows,
                          const data::PseudoGtSet& pseudo_set,
                          int samples_per_sequence, std::uint64_t seed) {
  const int n = static_cast<int>(windows.size());
  std::vector<std::vector<Tensor>> samples(n);
  for (int w = 0; w < n; ++w)
    samples[w] = gen::sample_paths(stack, windows[w].past, samples_per_sequence,
                                   rng::derive(seed, 0x6576616c, w));
  return score_samples(samples, windows, pseudo_set, &stack.partition);
}

EvalReport evaluate_baseline(std::span<const data::SampleWindow> windows,
                             const data::PseudoGtSet& pseudo_set, int T) {
  std::vector<std::vector<Tensor>> samples(windows.size());
  for (std::size_t w = 0; w < windows.size(); ++w)
    samples[w] = {zero_velocity_baseline(windows[w].past, T)};
  return score_samples(samples, windows, pseudo_set, nullptr);
}

}  // namespace motion::eval
