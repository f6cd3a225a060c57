// Feeds a noisy sinusoid with one spike through the detector one observation
// at a time and prints the alarms.

#include <cstdio>

#include "ldcd/corpus.hpp"
#include "ldcd/detector.hpp"

int main() {
  ldcd::SyntheticSpec spec;
  spec.length = 2000;
  spec.period = 60.0;
  spec.noise_sd = 0.05;
  spec.seed = 42;
  spec.anomalies = {{1500, ldcd::AnomalyKind::Spike, 2.0}};
  const auto series = ldcd::generate_synthetic(spec);

  ldcd::DetectorConfig config;  // 27-NN, 19-dimensional embedding, pruning on
  ldcd::StreamDetector detector(config.resolved(series.size()));

  for (double x : series.values) {
    const auto p = detector.push(x);
    if (p.abnormality > 0.99)
      std::printf("t=%zu value=%.3f abnormality=%.4f\n", p.t, p.value, p.abnormality);
  }
  return 0;
}
