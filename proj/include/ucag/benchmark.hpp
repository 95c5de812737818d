#pragma once

// Base-vs-UCAG evaluation over a labelled sample set.

#include <string>
#include <vector>

#include <json.hpp>

#include "ucag/dataset.hpp"
#include "ucag/metrics.hpp"
#include "ucag/pipeline.hpp"

namespace ucag {

enum class Metric { deletion, insertion, pg, ebpg, density, seg };

std::string to_string(Metric m);
/// Comma-separated names: deletion,insertion,pg,ebpg,density,seg.
std::vector<Metric> parse_metrics(const std::string& csv);
std::vector<Metric> all_metrics();
/// True for metrics that need a ground-truth mask.
bool needs_mask(Metric m);

struct BenchmarkConfig {
  UcagParams ucag;  // ucag.explainer is also the base explainer
  PerturbationConfig perturbation;
  std::vector<Metric> metrics = all_metrics();
  bool run_base = true;
  bool run_ucag = true;
  Index workers = 1;
};

struct BenchmarkReport {
  std::vector<EvalRecord> records;  // sample order, base before ucag
  nlohmann::ordered_json summary;
};

/// Explains every sample for its label class and scores the requested
/// metrics. Samples are processed in parallel; records are reduced in sample
/// order, so the report is independent of `workers`.
BenchmarkReport run_benchmark(const Network& net, const std::vector<Sample>& samples, const BenchmarkConfig& cfg);

/// Per-variant arithmetic means (and counts) of every present field.
nlohmann::ordered_json summarize(const std::vector<EvalRecord>& records);

/// One compact JSON object per line.
std::string to_jsonl(const std::vector<EvalRecord>& records);

}  // namespace ucag
