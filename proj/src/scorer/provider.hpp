#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/types.hpp"

namespace kinscope {

enum class ProviderKind : std::uint8_t { file_backed, synthetic, live_adapter };

const char* to_string(ProviderKind kind) noexcept;

/// Produces one log-probability row per registry model, in registry order.
/// Implementations must tolerate concurrent calls on distinct samples.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual ProviderKind kind() const = 0;
  virtual const FamilyRegistry& registry() const = 0;
  virtual TokenProbMatrix score(const LabeledSample& sample) const = 0;
  /// Scores a bare text. The default wraps it in an unlabeled sample.
  virtual TokenProbMatrix score_text(std::string_view sample_id, std::string_view text) const;
};

TokenProbMatrix score_text(std::string_view text, const ScoreProvider& provider, std::string_view sample_id = {});

/// One line of a score file.
struct ScoreRecord {
  std::string sample_id;
  std::string model_id;
  std::vector<double> logprobs;
};

std::vector<ScoreRecord> parse_score_records(std::string_view jsonl);
std::string serialize_score_records(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> to_score_records(const TokenProbMatrix& matrix, const FamilyRegistry& registry);
void write_score_file(const std::vector<TokenProbMatrix>& matrices, const FamilyRegistry& registry,
                      const std::filesystem::path& path);

/// Serves precomputed rows keyed by sample id; values are clipped on ingestion.
class FileScoreProvider final : public ScoreProvider {
 public:
  FileScoreProvider(FamilyRegistry registry, const std::vector<ScoreRecord>& records);
  static FileScoreProvider from_file(FamilyRegistry registry, const std::filesystem::path& path);
  static FileScoreProvider from_matrices(FamilyRegistry registry, const std::vector<TokenProbMatrix>& matrices);

  ProviderKind kind() const override { return ProviderKind::file_backed; }
  const FamilyRegistry& registry() const override { return registry_; }
  TokenProbMatrix score(const LabeledSample& sample) const override;

  bool contains(std::string_view sample_id) const;
  /// Ids whose rows are not complete for every registry model.
  std::vector<std::string> incomplete_ids() const;

 private:
  TokenProbMatrix lookup(const std::string& sample_id) const;

  FamilyRegistry registry_;
  std::map<std::string, std::vector<std::optional<std::vector<double>>>, std::less<>> rows_;
};

/// Live scoring hook: next-token log-probabilities of a text under teacher
/// forcing. No model runtime ships with the library.
class LiveModelAdapter {
 public:
  virtual ~LiveModelAdapter() = default;
  /// Returns nullopt when the call exceeds `timeout`.
  virtual std::optional<std::vector<double>> logprobs(std::string_view text, std::string_view model_id,
                                                      std::chrono::milliseconds timeout) const = 0;
};

class LiveAdapterProvider final : public ScoreProvider {
 public:
  LiveAdapterProvider(FamilyRegistry registry, std::shared_ptr<const LiveModelAdapter> adapter,
                      std::chrono::milliseconds timeout = std::chrono::seconds(30));

  ProviderKind kind() const override { return ProviderKind::live_adapter; }
  const FamilyRegistry& registry() const override { return registry_; }
  TokenProbMatrix score(const LabeledSample& sample) const override;

 private:
  FamilyRegistry registry_;
  std::shared_ptr<const LiveModelAdapter> adapter_;
  std::chrono::milliseconds timeout_;
};

}  // namespace kinscope
