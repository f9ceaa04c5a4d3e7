#include "scorer/provider.hpp"

#include <json.hpp>

#include "core/errors.hpp"
#include "core/io.hpp"

namespace kinscope {

const char* to_string(ProviderKind kind) noexcept {
  switch (kind) {
    case ProviderKind::file_backed: return "file_backed";
    case ProviderKind::synthetic: return "synthetic";
    case ProviderKind::live_adapter: return "live_adapter";
  }
  return "unknown";
}

TokenProbMatrix ScoreProvider::score_text(std::string_view sample_id, std::string_view text) const {
  LabeledSample stub;
  stub.id = std::string(sample_id);
  stub.text = std::string(text);
  return score(stub);
}

TokenProbMatrix score_text(std::string_view text, const ScoreProvider& provider, std::string_view sample_id) {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) throw DataError("cannot score an empty text");
  return provider.score_text(sample_id, text);
}

std::vector<ScoreRecord> parse_score_records(std::string_view jsonl) {
  using nlohmann::json;
  std::vector<ScoreRecord> out;
  std::size_t line_no = 0, pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = "score file line " + std::to_string(line_no) + ": ";
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(where + "malformed JSON (" + e.what() + ")");
    }
    if (!obj.is_object() || !obj.contains("sample_id") || !obj.contains("model_id") || !obj.contains("logprobs"))
      throw ParseError(where + "expected {sample_id, model_id, logprobs}");
    try {
      ScoreRecord r;
      r.sample_id = obj.at("sample_id").get<std::string>();
      r.model_id = obj.at("model_id").get<std::string>();
      r.logprobs = obj.at("logprobs").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    }
  }
  return out;
}

std::string serialize_score_records(const std::vector<ScoreRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += "{\"sample_id\":" + nlohmann::json(r.sample_id).dump() + ",\"model_id\":" + nlohmann::json(r.model_id).dump() +
           ",\"logprobs\":[";
    for (std::size_t i = 0; i < r.logprobs.size(); ++i) {
      if (i) out += ',';
      out += format_double(r.logprobs[i]);
    }
    out += "]}\n";
  }
  return out;
}

std::vector<ScoreRecord> to_score_records(const TokenProbMatrix& matrix, const FamilyRegistry& registry) {
  if (matrix.model_count() != registry.model_count()) throw ShapeError("matrix rows do not match the registry");
  std::vector<ScoreRecord> out;
  for (std::size_t i = 0; i < matrix.model_count(); ++i) {
    ScoreRecord r{matrix.sample_id, registry.models()[i].id, {}};
    for (std::size_t j = 0; j < matrix.logprobs[i].size(); ++j)
      if (matrix.mask.empty() || matrix.mask[i][j]) r.logprobs.push_back(matrix.logprobs[i][j]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_score_file(const std::vector<TokenProbMatrix>& matrices, const FamilyRegistry& registry,
                      const std::filesystem::path& path) {
  std::vector<ScoreRecord> records;
  for (const auto& m : matrices) {
    auto rs = to_score_records(m, registry);
    records.insert(records.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
  }
  write_file_atomic(path, serialize_score_records(records));
}

FileScoreProvider::FileScoreProvider(FamilyRegistry registry, const std::vector<ScoreRecord>& records)
    : registry_(std::move(registry)) {
  for (const auto& r : records) {
    const auto model = registry_.model_index(r.model_id);
    auto& slots = rows_[r.sample_id];
    slots.resize(registry_.model_count());
    if (slots[model])
      throw ValidationError("score file: duplicate row for sample '" + r.sample_id + "' model '" + r.model_id + "'");
    std::vector<double> row;
    row.reserve(r.logprobs.size());
    for (double v : r.logprobs) row.push_back(clip_logprob(v));
    slots[model] = std::move(row);
  }
}

FileScoreProvider FileScoreProvider::from_file(FamilyRegistry registry, const std::filesystem::path& path) {
  return FileScoreProvider(std::move(registry), parse_score_records(read_text_file(path)));
}

FileScoreProvider FileScoreProvider::from_matrices(FamilyRegistry registry, const std::vector<TokenProbMatrix>& matrices) {
  std::vector<ScoreRecord> records;
  for (const auto& m : matrices) {
    auto rs = to_score_records(m, registry);
    records.insert(records.end(), std::make_move_iterator(rs.begin()), std::make_move_iterator(rs.end()));
  }
  return FileScoreProvider(std::move(registry), records);
}

bool FileScoreProvider::contains(std::string_view sample_id) const { return rows_.find(sample_id) != rows_.end(); }

std::vector<std::string> FileScoreProvider::incomplete_ids() const {
  std::vector<std::string> out;
  for (const auto& [id, slots] : rows_)
    for (const auto& s : slots)
      if (!s) {
        out.push_back(id);
        break;
      }
  return out;
}

TokenProbMatrix FileScoreProvider::lookup(const std::string& sample_id) const {
  auto it = rows_.find(sample_id);
  if (it == rows_.end()) throw LookupError("no scores for sample '" + sample_id + "'");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < it->second.size(); ++i) {
    if (!it->second[i])
      throw LookupError("sample '" + sample_id + "' has no row for model '" + registry_.models()[i].id + "'");
    rows.push_back(*it->second[i]);
  }
  return TokenProbMatrix::from_rows(sample_id, std::move(rows));
}

TokenProbMatrix FileScoreProvider::score(const LabeledSample& sample) const { return lookup(sample.id); }

LiveAdapterProvider::LiveAdapterProvider(FamilyRegistry registry, std::shared_ptr<const LiveModelAdapter> adapter,
                                         std::chrono::milliseconds timeout)
    : registry_(std::move(registry)), adapter_(std::move(adapter)), timeout_(timeout) {
  if (!adapter_) throw ConfigError("live provider needs an adapter");
}

TokenProbMatrix LiveAdapterProvider::score(const LabeledSample& sample) const {
  std::vector<std::vector<double>> rows;
  for (const auto& model : registry_.models()) {
    auto result = adapter_->logprobs(sample.text, model.id, timeout_);
    if (!result)
      throw TransportError("sample '" + sample.id + "': model '" + model.id + "' timed out after " +
                           std::to_string(timeout_.count()) + " ms");
    std::vector<double> row;
    row.reserve(result->size());
    try {
      for (double v : *result) row.push_back(clip_logprob(v));
    } catch (const DataError&) {
      throw DataError("sample '" + sample.id + "': model '" + model.id + "' returned NaN");
    }
    rows.push_back(std::move(row));
  }
  return TokenProbMatrix::from_rows(sample.id, std::move(rows));
}

}  // namespace kinscope
