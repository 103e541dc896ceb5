#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "test_support.hpp"

using namespace piculet;
using namespace piculet::testing;

namespace {

const std::string kPredefined = "Answer the question based on the image and the factual information provided.";

std::vector<Detection> dets(std::initializer_list<const char*> labels) {
  std::vector<Detection> out;
  for (const char* l : labels) out.push_back({l, 0.9, {0, 0, 1, 1}});
  return out;
}

std::vector<OcrSpan> spans(std::initializer_list<const char*> texts) {
  std::vector<OcrSpan> out;
  for (const char* t : texts) out.push_back({t, 0.9, {0, 0, 1, 1}});
  return out;
}

std::vector<FaceMatch> faces(std::initializer_list<const char*> names) {
  std::vector<FaceMatch> out;
  for (const char* n : names) out.push_back({n, 0.9, {0, 0, 1, 1}});
  return out;
}

}  // namespace

// ---- sentence rendering --------------------------------------------------------

TEST(FormatDetections, GroupsAndCounts) {
  EXPECT_EQ(format_detections(dets({"person", "person", "cup"})),
            "the image contains these objects: there are 2 persons, there is 1 cup.");
}

TEST(FormatDetections, EmptyIsAbsent) { EXPECT_FALSE(format_detections({})); }

TEST(FormatDetections, OrdersByCountThenLabel) {
  EXPECT_EQ(format_detections(dets({"zebra", "cat", "cat", "apple", "bed", "bed"})),
            "the image contains these objects: there are 2 beds, there are 2 cats, there is 1 apple, "
            "there is 1 zebra.");
}

TEST(FormatOcr, JoinsInBackendOrder) {
  EXPECT_EQ(format_ocr(spans({"HELLO", "WORLD"})), "The text content contained in the image: HELLO, WORLD.");
  EXPECT_FALSE(format_ocr({}));
}

TEST(FormatFaces, SingularPluralAndDuplicates) {
  EXPECT_EQ(format_faces(faces({"Ada Lovelace"})), "the celebrity in the image is: Ada Lovelace.");
  EXPECT_EQ(format_faces(faces({"B", "A", "B"})), "the celebrities in the image are: B, A.");
  EXPECT_FALSE(format_faces({}));
}

TEST(Pluralize, RegularIrregularAndSingular) {
  const auto irregular = default_irregular_plurals();
  EXPECT_EQ(pluralize("dog", 1, irregular), "dog");
  EXPECT_EQ(pluralize("dog", 2, irregular), "dogs");
  EXPECT_EQ(pluralize("dog", 0, irregular), "dogs");
  EXPECT_EQ(pluralize("mouse", 2, irregular), "mice");
  EXPECT_EQ(pluralize("sheep", 4, irregular), "sheep");
  EXPECT_EQ(pluralize("bus", 2, irregular), "buses");
  EXPECT_EQ(pluralize("wine glass", 3, irregular), "wine glasses");
  EXPECT_EQ(pluralize("knife", 1, irregular), "knife");
  EXPECT_EQ(pluralize("mouse", 2), "mouses");
}

TEST(FillSlot, ReplacesOnlyTheNamedSlot) {
  EXPECT_EQ(fill_slot("a {x} b {y}", "{x}", "1"), "a 1 b {y}");
  EXPECT_EQ(fill_slot("{x}", "{x}", "{x}"), "{x}");
  EXPECT_EQ(count_occurrences("{a}{a} {a}", "{a}"), 3u);
}

// ---- assembly ------------------------------------------------------------------

TEST(AssemblePrompt, OrderIsOcrFaceDetectionPredefinedUser) {
  ExtractionBundle b;
  b.detections = dets({"cup"});
  b.ocr = spans({"EXIT"});
  b.faces = faces({"Ada"});
  auto q = assemble_prompt(b, {}, "Is there a cup?");
  ASSERT_EQ(q.parts.size(), 5u);
  EXPECT_EQ(q.parts[0].tag, PartTag::ocr);
  EXPECT_EQ(q.parts[1].tag, PartTag::face);
  EXPECT_EQ(q.parts[2].tag, PartTag::detection);
  EXPECT_EQ(q.parts[3].tag, PartTag::predefined);
  EXPECT_EQ(q.parts[4].tag, PartTag::user);
  EXPECT_EQ(q.parts[3].text, kPredefined);
  EXPECT_EQ(q.text,
            "The text content contained in the image: EXIT.\nthe celebrity in the image is: Ada.\n"
            "the image contains these objects: there is 1 cup.\n" +
                kPredefined + "\nIs there a cup?");
}

TEST(AssemblePrompt, EmptyQueryIsInputError) {
  try {
    assemble_prompt({}, {}, "");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::input);
  }
}

TEST(AssemblePrompt, NoExtractorsGivesPredefinedAndUserOnly) {
  auto q = assemble_prompt({}, {}, "What is this?");
  EXPECT_EQ(q.text, kPredefined + "\nWhat is this?");
}

TEST(AssemblePrompt, CustomTemplatesAreHonoured) {
  PromptTemplateSet t;
  t.final_joiner = " | ";
  t.list_separator = "; ";
  t.predefined_prompt = "Use the facts.";
  ExtractionBundle b;
  b.ocr = spans({"A", "B"});
  EXPECT_EQ(assemble_prompt(b, t, "Q?").text, "The text content contained in the image: A; B. | Use the facts. | Q?");
}

TEST(AssemblePrompt, TaggedRenderingListsEveryPart) {
  ExtractionBundle b;
  b.detections = dets({"dog"});
  auto text = render_tagged(assemble_prompt(b, {}, "Dog?"));
  EXPECT_EQ(text, "[detection] the image contains these objects: there is 1 dog.\n[predefined] " + kPredefined +
                      "\n[user] Dog?\n");
}

TEST(AssemblePrompt, JsonRoundTripKeepsParts) {
  ExtractionBundle b;
  b.faces = faces({"Ada", "Grace"});
  auto q = assemble_prompt(b, {}, "Who?");
  json j = q;
  FormulatedQuery back;
  back.text = j["text"];
  for (const auto& p : j["parts"]) {
    static const std::map<std::string, PartTag> tags{{"ocr", PartTag::ocr}, {"face", PartTag::face},
                                                     {"detection", PartTag::detection},
                                                     {"predefined", PartTag::predefined}, {"user", PartTag::user}};
    back.parts.push_back({tags.at(p["tag"]), p["text"]});
  }
  EXPECT_EQ(back, q);
}

// ---- templates ----------------------------------------------------------------

TEST(Templates, ValidateRequiresEachSlotOnce) {
  PromptTemplateSet t;
  EXPECT_NO_THROW(t.validate());
  t.detection_frame = "objects: {objects} and {objects}";
  EXPECT_THROW(t.validate(), Error);
  t = {};
  t.ocr_frame = "no slot here";
  EXPECT_THROW(t.validate(), Error);
}

TEST(Templates, JsonRoundTripAndUnknownKeys) {
  PromptTemplateSet t;
  t.predefined_prompt = "Be factual.";
  auto back = PromptTemplateSet::from_json(t.to_json());
  EXPECT_EQ(back.predefined_prompt, "Be factual.");
  EXPECT_EQ(back.to_json(), t.to_json());
  EXPECT_THROW(PromptTemplateSet::from_json({{"bogus", "x"}}), Error);
  auto partial = PromptTemplateSet::from_json({{"final_joiner", " "}});
  EXPECT_EQ(partial.final_joiner, " ");
  EXPECT_EQ(partial.detection_frame, PromptTemplateSet{}.detection_frame);
}

// ---- properties ---------------------------------------------------------------

namespace {

ExtractionBundle random_bundle(std::mt19937& rng, bool with_det, bool with_ocr, bool with_face) {
  static const std::vector<std::string> names{"Ada", "Grace", "Alan", "Katherine", "Edsger"};
  static const std::vector<std::string> words{"EXIT", "STOP", "OPEN", "SALE", "CAFE", "BUS 42"};
  ExtractionBundle b;
  if (with_det) {
    b.detections.emplace();
    for (auto n = rng() % 10; n; --n)
      b.detections->push_back({std::string(kCocoLabels[rng() % kCocoLabels.size()]), 0.9, {0, 0, 1, 1}});
  }
  if (with_ocr) {
    b.ocr.emplace();
    for (auto n = rng() % 5; n; --n) b.ocr->push_back({words[rng() % words.size()], 0.9, {0, 0, 1, 1}});
  }
  if (with_face) {
    b.faces.emplace();
    for (auto n = rng() % 4; n; --n) b.faces->push_back({names[rng() % names.size()], 0.9, {0, 0, 1, 1}});
  }
  return b;
}

// Parses "there is/are N <noun>" groups back out of a detection sentence.
std::map<std::string, std::size_t> parse_groups(const std::string& sentence) {
  std::map<std::string, std::size_t> out;
  static const std::regex group(R"(there (?:is|are) (\d+) ([a-z ]+?)(?=, there|\.$))");
  for (std::sregex_iterator it(sentence.begin(), sentence.end(), group), end; it != end; ++it)
    out[(*it)[2]] = std::stoul((*it)[1]);
  return out;
}

}  // namespace

TEST(FormulationProperty, DetectionCountsMatchOracle) {
  std::mt19937 rng(21);
  const auto irregular = default_irregular_plurals();
  for (int iter = 0; iter < 300; ++iter) {
    auto b = random_bundle(rng, true, false, false);
    std::map<std::string, std::size_t> oracle;
    for (const auto& d : *b.detections) ++oracle[pluralize(d.label, 2, irregular) + "#" + d.label];
    auto sentence = format_detections(*b.detections);
    if (b.detections->empty()) {
      EXPECT_FALSE(sentence);
      continue;
    }
    ASSERT_TRUE(sentence);
    auto parsed = parse_groups(*sentence);
    std::size_t total = 0;
    for (const auto& [noun, n] : parsed) total += n;
    EXPECT_EQ(total, b.detections->size()) << *sentence;
    EXPECT_EQ(parsed.size(), oracle.size()) << *sentence;
    for (const auto& [key, n] : oracle) {
      const auto label = key.substr(key.find('#') + 1);
      const auto noun = n == 1 ? label : key.substr(0, key.find('#'));
      ASSERT_TRUE(parsed.count(noun)) << noun << " missing from " << *sentence;
      EXPECT_EQ(parsed[noun], n);
    }
  }
}

TEST(FormulationProperty, PartsFollowFixedOrderAndJoinToText) {
  std::mt19937 rng(5);
  for (int iter = 0; iter < 300; ++iter) {
    auto b = random_bundle(rng, rng() % 2, rng() % 2, rng() % 2);
    auto q = assemble_prompt(b, {}, "Question " + std::to_string(iter) + "?");
    int last = -1;
    std::vector<std::string> texts;
    for (const auto& p : q.parts) {
      EXPECT_GT(static_cast<int>(p.tag), last);
      last = static_cast<int>(p.tag);
      texts.push_back(p.text);
    }
    EXPECT_EQ(join(texts, "\n"), q.text);
    EXPECT_EQ(q.parts.back().tag, PartTag::user);
    EXPECT_EQ(q.parts[q.parts.size() - 2].tag, PartTag::predefined);
  }
}

TEST(FormulationProperty, DisabledAndEmptyAreIndistinguishable) {
  std::mt19937 rng(9);
  for (int iter = 0; iter < 200; ++iter) {
    auto b = random_bundle(rng, true, true, true);
    auto disabled = b;
    auto emptied = b;
    if (rng() % 2) { disabled.detections.reset(); emptied.detections->clear(); }
    if (rng() % 2) { disabled.ocr.reset(); emptied.ocr->clear(); }
    if (rng() % 2) { disabled.faces.reset(); emptied.faces->clear(); }
    EXPECT_EQ(assemble_prompt(disabled, {}, "Q?"), assemble_prompt(emptied, {}, "Q?"));
  }
}

TEST(FormulationProperty, AddingFactsOnlyAddsText) {
  std::mt19937 rng(13);
  for (int iter = 0; iter < 200; ++iter) {
    auto b = random_bundle(rng, true, true, true);
    auto fewer = b;
    fewer.ocr.reset();
    const auto full = assemble_prompt(b, {}, "Q?");
    const auto part = assemble_prompt(fewer, {}, "Q?");
    EXPECT_GE(full.text.size(), part.text.size());
    // Every part of the smaller prompt appears verbatim in the larger one, in order.
    std::size_t pos = 0;
    for (const auto& p : part.parts) {
      pos = full.text.find(p.text, pos);
      ASSERT_NE(pos, std::string::npos) << p.text;
      pos += p.text.size();
    }
  }
}

TEST(FormulationProperty, OutputIsDeterministic) {
  std::mt19937 rng(17);
  for (int iter = 0; iter < 100; ++iter) {
    auto b = random_bundle(rng, true, true, true);
    EXPECT_EQ(assemble_prompt(b, {}, "Q?").text, assemble_prompt(b, {}, "Q?").text);
  }
}

// ---- golden corpus -------------------------------------------------------------

TEST(GoldenPrompts, CorpusHasAtLeastTwelveCases) { EXPECT_GE(golden_cases().size(), 12u); }

TEST(GoldenPrompts, MatchByteForByte) {
  for (const auto& c : golden_cases()) {
    EXPECT_EQ(assemble_prompt(c.bundle, {}, c.query).text, c.expected) << c.name;
  }
}
