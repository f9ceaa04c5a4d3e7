#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "core/dataset.hpp"
#include "core/errors.hpp"
#include "core/io.hpp"
#include "core/random.hpp"
#include "test_util.hpp"

using namespace kinscope;
using kinscope::testing::generated;
using kinscope::testing::human;

namespace {

std::string line_of(const LabeledSample& s) {
  DatasetManifest m;
  m.samples = {s};
  return serialize_manifest(m);
}

}  // namespace

TEST(Registry, LabelSpaceGrowsWithOthers) {
  const auto plain = FamilyRegistry::from_ids({"llama", "gemma", "mistral"}, false);
  const auto extended = FamilyRegistry::from_ids({"llama", "gemma", "mistral"}, true);
  EXPECT_EQ(plain.family_count(), 3u);
  EXPECT_EQ(extended.family_count(), 4u);
  EXPECT_EQ(extended.family_name(3), "others");
  EXPECT_EQ(extended.family_index("others"), 3u);
  EXPECT_FALSE(plain.family_index("others"));
}

TEST(Registry, RejectsEmptyAndDuplicateModels) {
  EXPECT_THROW(FamilyRegistry::from_ids({}, false), ConfigError);
  EXPECT_THROW(FamilyRegistry::from_ids({"a", "a"}, false), Error);
}

TEST(Sample, LabelInvariants) {
  auto g = generated("g1", "llama", "base");
  EXPECT_NO_THROW(validate_sample(g));
  g.family_label.reset();
  EXPECT_THROW(validate_sample(g), ValidationError);

  auto h = human("h1");
  h.family_label = "llama";
  EXPECT_THROW(validate_sample(h), ValidationError);

  auto blank = human("h2");
  blank.text = " \t\n";
  EXPECT_THROW(validate_sample(blank), ValidationError);
}

TEST(Matrix, ClipsAndRejectsNan) {
  EXPECT_EQ(clip_logprob(-100.0), -30.0);
  EXPECT_EQ(clip_logprob(0.5), 0.0);
  EXPECT_EQ(clip_logprob(-2.5), -2.5);
  EXPECT_THROW(clip_logprob(std::nan("")), DataError);
}

TEST(Dataset, MinimalFourLineManifest) {
  std::string text;
  text += line_of(human("h1", Split::test));
  text += line_of(human("h2"));
  text += line_of(generated("g1", "llama", "cs", Split::test));
  text += line_of(generated("g2", "gemma", "base"));
  const auto m = parse_dataset(text);
  EXPECT_EQ(m.samples.size(), 4u);
  EXPECT_EQ(m.registry.model_count(), 2u);
  EXPECT_EQ(m.heldout_domain, "cs");
}

TEST(Dataset, MissingFamilyNamesSampleId) {
  std::string text = line_of(human("h1"));
  text += R"({"id":"bad-7","text":"x y","binary_label":"generated","family_label":null,"ft_domain":"cs","split":null})"
          "\n";
  try {
    parse_dataset(text);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("bad-7"), std::string::npos);
  }
}

TEST(Dataset, MalformedLineNamesLineNumber) {
  std::string text = line_of(human("h1")) + line_of(generated("g1", "llama", "base")) + "{not json\n";
  try {
    parse_dataset(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Dataset, DuplicateIdRejected) {
  const std::string text = line_of(human("h1")) + line_of(human("h1")) + line_of(generated("g", "llama", "base"));
  EXPECT_THROW(parse_dataset(text), ValidationError);
}

TEST(Dataset, TestGeneratedOutsideHeldoutRejected) {
  DatasetManifest m;
  m.samples = {generated("g1", "llama", "cs", Split::test), generated("g2", "llama", "fin", Split::test)};
  m.registry = FamilyRegistry::from_ids({"llama"}, false);
  m.heldout_domain = "cs";
  EXPECT_THROW(validate_manifest(m), ValidationError);
}

// Q&A-style test shape: 204 per fine-tuned family plus 612 humans.
TEST(Dataset, QaTestShapeCounts) {
  std::string text;
  const std::vector<std::string> fams{"llama", "gemma", "mistral"};
  for (const auto& f : fams)
    for (int i = 0; i < 204; ++i) text += line_of(generated(f + "-fin-" + std::to_string(i), f, "fin", Split::test));
  for (const auto& f : fams)
    for (int i = 0; i < 50; ++i) text += line_of(generated(f + "-base-" + std::to_string(i), f, "base"));
  for (int i = 0; i < 612; ++i) text += line_of(human("h-test-" + std::to_string(i), Split::test));
  for (int i = 0; i < 100; ++i) text += line_of(human("h-train-" + std::to_string(i)));
  const auto m = parse_dataset(text);
  ASSERT_EQ(m.heldout_domain, "fin");
  const auto parts = split_by_unseen_domain(m.samples, m.heldout_domain, 0.1, 3);
  std::map<std::string, int> counts;
  for (const auto& s : parts.test) ++counts[s.family_label.value_or("human")];
  EXPECT_EQ(counts["llama"], 204);
  EXPECT_EQ(counts["gemma"], 204);
  EXPECT_EQ(counts["mistral"], 204);
  EXPECT_EQ(counts["human"], 612);
  for (const auto& s : parts.test)
    if (s.is_generated()) EXPECT_EQ(s.ft_domain, "fin");
}

TEST(Dataset, RoundTrip) {
  DatasetManifest m;
  m.samples = {human("h1", Split::test), human("h2"), generated("g1", "llama", "cs", Split::test),
               generated("g2", "gemma", "base", Split::val), generated("g3", "others", "base")};
  m.samples[0].text = "unicode \xc3\xa9\xe2\x80\x94 and \"quotes\"\nnewline";
  m.registry = FamilyRegistry::from_ids({"llama", "gemma"}, true);
  m.heldout_domain = "cs";
  const auto back = parse_dataset(serialize_manifest(m));
  EXPECT_EQ(back, m);
}

TEST(Split, HoldoutLandsInTest) {
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 3; ++i) samples.push_back(generated("cs" + std::to_string(i), "llama", "cs"));
  for (int i = 0; i < 4; ++i) samples.push_back(generated("b" + std::to_string(i), "gemma", "base"));
  samples.push_back(human("h-test", Split::test));
  samples.push_back(human("h1"));
  samples.push_back(human("h2"));
  const auto parts = split_by_unseen_domain(samples, "cs", 0.2, 1);
  std::set<std::string> test_ids;
  for (const auto& s : parts.test) test_ids.insert(s.id);
  EXPECT_EQ(test_ids, (std::set<std::string>{"cs0", "cs1", "cs2", "h-test"}));
}

TEST(Split, ExhaustiveDisjointDeterministic) {
  std::vector<LabeledSample> samples;
  for (int i = 0; i < 40; ++i) samples.push_back(generated("a" + std::to_string(i), "llama", i % 4 ? "base" : "cs"));
  for (int i = 0; i < 40; ++i) samples.push_back(generated("b" + std::to_string(i), "gemma", i % 4 ? "phy" : "cs"));
  for (int i = 0; i < 60; ++i) samples.push_back(human("h" + std::to_string(i), i < 10 ? std::optional(Split::test) : std::nullopt));
  const auto p1 = split_by_unseen_domain(samples, "cs", 0.1, 42);
  const auto p2 = split_by_unseen_domain(samples, "cs", 0.1, 42);
  auto ids = [](const std::vector<LabeledSample>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.id);
    return out;
  };
  EXPECT_EQ(ids(p1.train), ids(p2.train));
  EXPECT_EQ(ids(p1.val), ids(p2.val));
  EXPECT_EQ(ids(p1.test), ids(p2.test));

  std::multiset<std::string> all;
  for (const auto* part : {&p1.train, &p1.val, &p1.test})
    for (const auto& s : *part) all.insert(s.id);
  EXPECT_EQ(all.size(), samples.size());
  EXPECT_EQ(std::set<std::string>(all.begin(), all.end()).size(), samples.size());

  // stratified: each (label, family) stratum contributes to val
  std::map<std::string, int> val_strata;
  for (const auto& s : p1.val) ++val_strata[s.family_label.value_or("human")];
  EXPECT_EQ(val_strata["llama"], 3);
  EXPECT_EQ(val_strata["gemma"], 3);
  EXPECT_EQ(val_strata["human"], 5);
}

TEST(Split, MissingHeldoutIsConfigError) {
  std::vector<LabeledSample> samples{generated("g", "llama", "base"), human("h")};
  EXPECT_THROW(split_by_unseen_domain(samples, "cs", 0.1, 0), ConfigError);
  samples.push_back(generated("c", "llama", "cs"));
  EXPECT_THROW(split_by_unseen_domain(samples, "cs", 0.0, 0), ConfigError);
}

TEST(Io, AtomicWriteLeavesNoPartial) {
  kinscope::testing::TempDir dir("io");
  const auto path = dir.path() / "sub" / "f.txt";
  write_file_atomic(path, "hello");
  EXPECT_EQ(read_text_file(path), "hello");
  EXPECT_FALSE(std::filesystem::exists(path.string() + ".partial"));
  EXPECT_THROW(read_text_file(dir.path() / "missing"), IoError);
}

TEST(Io, FormatDoubleRoundTrips) {
  for (double v : {0.1, -2.0 / 3.0, 1e-300, -29.999999999}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(Random, DeriveSeedIsStableAndSpreads) {
  EXPECT_EQ(derive_seed(7, "abc"), derive_seed(7, "abc"));
  EXPECT_NE(derive_seed(7, "abc"), derive_seed(8, "abc"));
  EXPECT_NE(derive_seed(7, "abc"), derive_seed(7, "abd"));
  EXPECT_NE(derive_seed(7, 1, 2), derive_seed(7, 2, 1));
}
