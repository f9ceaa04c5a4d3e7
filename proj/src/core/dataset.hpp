#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/types.hpp"

namespace kinscope {

struct DatasetManifest {
  std::vector<LabeledSample> samples;
  FamilyRegistry registry;
  std::string heldout_domain;

  bool operator==(const DatasetManifest&) const = default;
};

struct LoadOptions {
  /// When absent the registry is inferred from family labels in order of
  /// first appearance; an "others" label switches on the extra category.
  std::optional<FamilyRegistry> registry;
  /// When absent it is inferred from test-tagged generated samples.
  std::optional<std::string> heldout_domain;
};

/// Parses a JSON-lines manifest. Malformed lines raise ParseError naming the
/// line; invariant violations raise ValidationError naming the sample id.
DatasetManifest load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});
DatasetManifest parse_dataset(std::string_view jsonl, const LoadOptions& options = {});

/// Checks every manifest invariant (unique ids, label rules, heldout placement).
void validate_manifest(const DatasetManifest& manifest);

std::string serialize_manifest(const DatasetManifest& manifest);
void save_dataset(const DatasetManifest& manifest, const std::filesystem::path& path);

struct Partition {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

/// Stratified by (binary_label, family_label); returns (train, val) with split
/// tags set. Deterministic given the seed.
std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> stratified_split(
    const std::vector<LabeledSample>& samples, double val_fraction, std::uint64_t seed);

/// Generated samples from the held-out domain always land in test. Samples
/// with an explicit split tag keep it. The remaining untagged samples are
/// split into train/val, stratified by (binary_label, family_label).
Partition split_by_unseen_domain(const std::vector<LabeledSample>& samples, const std::string& heldout_domain,
                                 double val_fraction, std::uint64_t seed);

}  // namespace kinscope
