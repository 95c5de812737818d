#include "ucag/benchmark.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <sstream>

#include "ucag/errors.hpp"
#include "ucag/parallel.hpp"

namespace ucag {
namespace {

constexpr std::array<std::pair<Metric, const char*>, 6> kMetricNames{{
    {Metric::deletion, "deletion"},
    {Metric::insertion, "insertion"},
    {Metric::pg, "pg"},
    {Metric::ebpg, "ebpg"},
    {Metric::density, "density"},
    {Metric::seg, "seg"},
}};

bool wants(const BenchmarkConfig& cfg, Metric m) {
  return std::find(cfg.metrics.begin(), cfg.metrics.end(), m) != cfg.metrics.end();
}

template <typename Fn>
std::optional<double> defined_or_empty(Fn&& fn) {
  try {
    return fn();
  } catch (const UndefinedDensity&) {
    return std::nullopt;
  }
}

EvalRecord score(const Scorer& scorer, const Sample& s, const SaliencyMap& map, const std::string& variant,
                 const BenchmarkConfig& cfg) {
  EvalRecord r;
  r.id = s.id;
  r.variant = variant;
  r.class_k = s.label;
  if (wants(cfg, Metric::deletion) || wants(cfg, Metric::insertion)) {
    const AucPair auc = deletion_insertion(scorer, s.image, map, s.label, cfg.perturbation);
    if (wants(cfg, Metric::deletion)) r.deletion_auc = auc.deletion;
    if (wants(cfg, Metric::insertion)) r.insertion_auc = auc.insertion;
  }
  if (wants(cfg, Metric::pg)) r.pg_hit = pointing_game(map, *s.mask);
  if (wants(cfg, Metric::ebpg)) r.ebpg = energy_pointing_game(map, *s.mask);
  if (wants(cfg, Metric::density)) {
    const Tensor m = normalize_minmax(map.values);
    r.density_pos = defined_or_empty([&] { return positive_density(scorer, s.image, m, s.label); });
    r.density_neg = defined_or_empty([&] { return negative_density(scorer, s.image, m, s.label); });
  }
  if (wants(cfg, Metric::seg)) {
    const SegmentationScores seg = segmentation_scores(map, *s.mask);
    r.ap = seg.ap;
    r.pixel_acc = seg.pixel_acc;
  }
  return r;
}

}  // namespace

std::string to_string(Metric m) {
  for (const auto& [metric, name] : kMetricNames)
    if (metric == m) return name;
  return "unknown";
}

std::vector<Metric> all_metrics() {
  std::vector<Metric> out;
  for (const auto& entry : kMetricNames) out.push_back(entry.first);
  return out;
}

std::vector<Metric> parse_metrics(const std::string& csv) {
  std::vector<Metric> out;
  std::stringstream in(csv);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto it = std::find_if(kMetricNames.begin(), kMetricNames.end(),
                                 [&](const auto& entry) { return item == entry.second; });
    require(it != kMetricNames.end(), "unknown metric '" + item + "'");
    if (std::find(out.begin(), out.end(), it->first) == out.end()) out.push_back(it->first);
  }
  require(!out.empty(), "no metrics selected");
  return out;
}

bool needs_mask(Metric m) { return m == Metric::pg || m == Metric::ebpg || m == Metric::seg; }

BenchmarkReport run_benchmark(const Network& net, const std::vector<Sample>& samples, const BenchmarkConfig& cfg) {
  require(!samples.empty(), "benchmark needs at least one sample");
  require(cfg.run_base || cfg.run_ucag, "benchmark needs at least one variant");
  cfg.perturbation.validate();
  validate(cfg.ucag.explainer);
  for (Metric m : cfg.metrics)
    if (needs_mask(m))
      for (const Sample& s : samples)
        require(s.mask.has_value(), "metric '" + to_string(m) + "' needs a mask but sample " + s.id + " has none");

  const NetworkScorer scorer(net);
  const std::size_t variants = (cfg.run_base ? 1u : 0u) + (cfg.run_ucag ? 1u : 0u);
  std::vector<EvalRecord> records(samples.size() * variants);
  parallel_for(static_cast<Index>(samples.size()), cfg.workers, [&](Index i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    with_context("sample " + s.id, [&] {
      std::size_t slot = static_cast<std::size_t>(i) * variants;
      if (cfg.run_base) records[slot++] = score(scorer, s, explain(cfg.ucag.explainer, net, s.image, s.label), "base", cfg);
      if (cfg.run_ucag) records[slot] = score(scorer, s, ucag_explain(net, cfg.ucag, s.image, s.label).map, "ucag", cfg);
    });
  });
  return {records, summarize(records)};
}

nlohmann::ordered_json summarize(const std::vector<EvalRecord>& records) {
  nlohmann::ordered_json summary = nlohmann::ordered_json::object();
  std::vector<std::string> order;
  std::map<std::string, std::vector<const EvalRecord*>> by_variant;
  for (const EvalRecord& r : records) {
    if (!by_variant.count(r.variant)) order.push_back(r.variant);
    by_variant[r.variant].push_back(&r);
  }
  for (const std::string& variant : order) {
    nlohmann::ordered_json means = nlohmann::ordered_json::object();
    auto mean_of = [&](const char* key, auto field) {
      double sum = 0.0;
      Index count = 0;
      for (const EvalRecord* r : by_variant[variant])
        if (const auto& v = r->*field) {
          sum += static_cast<double>(*v);
          ++count;
        }
      if (count > 0) means[key] = {{"mean", sum / static_cast<double>(count)}, {"count", count}};
    };
    mean_of("deletion_auc", &EvalRecord::deletion_auc);
    mean_of("insertion_auc", &EvalRecord::insertion_auc);
    mean_of("pg_hit", &EvalRecord::pg_hit);
    mean_of("ebpg", &EvalRecord::ebpg);
    mean_of("density_pos", &EvalRecord::density_pos);
    mean_of("density_neg", &EvalRecord::density_neg);
    mean_of("ap", &EvalRecord::ap);
    mean_of("pixel_acc", &EvalRecord::pixel_acc);
    summary[variant] = {{"samples", by_variant[variant].size()}, {"metrics", means}};
  }
  return summary;
}

std::string to_jsonl(const std::vector<EvalRecord>& records) {
  std::string out;
  for (const EvalRecord& r : records) out += r.to_json().dump() + "\n";
  return out;
}

}  // namespace ucag
