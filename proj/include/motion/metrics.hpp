#pragma once

#include <span>
#include <string>
#include <vector>

#include "motion/gcn.hpp"
#include "motion/sampler.hpp"
#include "motion/tensor.hpp"
#include "motion/windows.hpp"

// Diversity and accuracy metrics. Every sample and ground truth is a T x D
// future-frame matrix; norms are over the flattened matrix.

namespace motion::eval {

/// Mean pairwise L2 distance between samples. Requires K >= 2.
double apd(std::span<const Tensor> samples);
/// Best-of-K whole-sequence error: (1/T) * min_i ||sample_i - gt||.
double ade(std::span<const Tensor> samples, const Tensor& gt);
/// Best-of-K final-frame error: min_i ||sample_i[T] - gt[T]||.
double fde(std::span<const Tensor> samples, const Tensor& gt);
/// Mean of ade/fde against each pseudo ground truth.
double mmade(std::span<const Tensor> samples, std::span<const Tensor> pseudo);
double mmfde(std::span<const Tensor> samples, std::span<const Tensor> pseudo);

/// Last observed pose repeated T times.
Tensor zero_velocity_baseline(const Tensor& past, int T);

struct EvalReport {
  double apd = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double mmade = 0.0;
  double mmfde = 0.0;
  std::vector<std::pair<std::string, double>> per_part_apd;
  int samples_per_sequence = 0;
  int sequences = 0;
  int skipped_mm = 0;  // sequences with no pseudo ground truth

  std::string table() const;
  std::string csv() const;
};

/// Scores externally-provided samples: samples[w] are the futures for test
/// window w. Pseudo ground truths come from the mined set over the windows
/// themselves. The partition, when non-null, adds per-part APD columns.
EvalReport score_samples(const std::vector<std::vector<Tensor>>& samples,
                         std::span<const data::SampleWindow> windows,
                         const data::PseudoGtSet& pseudo_set,
                         const gen::PartitionSpec* partition = nullptr);

/// Samples `samples_per_sequence` futures per window from the model
/// (independent root-to-leaf paths) and scores them.
EvalReport evaluate_model(gen::GeneratorStack& stack,
                          std::span<const data::SampleWindow> windows,
                          const data::PseudoGtSet& pseudo_set,
                          int samples_per_sequence, std::uint64_t seed);

/// Scores the zero-velocity baseline (one sample per window).
EvalReport evaluate_baseline(std::span<const data::SampleWindow> windows,
                             const data::PseudoGtSet& pseudo_set, int T);

}  // namespace motion::eval
