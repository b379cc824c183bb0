#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "ophvqa/dataengine.hpp"

using namespace ophvqa;

namespace {

DatasetManifest synthetic_manifest(std::size_t n) {
  std::vector<VqaRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    VqaRecord r;
    r.id = "id-" + std::to_string(i);
    r.image_ref = "img/" + std::to_string(i) + ".png";
    r.modality = kAllModalities[i % kAllModalities.size()];
    r.task = TaskKind::OpenQA;
    r.question = "q?";
    r.reference_answer = "a";
    recs.push_back(r);
  }
  return DatasetManifest(std::move(recs));
}

const std::vector<std::string> kFiveReviewers = {"r1", "r2", "r3", "r4", "r5"};

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

TEST(Templates, DefaultLibraryIsValid) {
  const auto& lib = default_template_library();
  EXPECT_NO_THROW(lib.validate());
  EXPECT_EQ(lib.question_sets.size(), 2u);
  EXPECT_EQ(lib.question_sets.at("disease_presence").negative_answers.front(), "No, very healthy.");
  EXPECT_EQ(lib.question_sets.at("disease_identification").positive_answers.front(),
            "The eye in the image exhibits signs of {condition}.");
}

TEST(Templates, JsonRoundTripAndSharedLists) {
  const auto& lib = default_template_library();
  EXPECT_EQ(QaTemplateLibrary::from_json(lib.to_json()), lib);

  auto j = nlohmann::json::parse(R"({
    "question_sets": {"a": ["Q1?"], "b": ["Q2?"]},
    "positive_answers": ["It has {condition}."],
    "negative_answers": {"a": ["No."], "b": ["Healthy."]}
  })");
  auto shared = QaTemplateLibrary::from_json(j);
  EXPECT_EQ(shared.question_sets.at("b").positive_answers.front(), "It has {condition}.");
  EXPECT_EQ(shared.question_sets.at("b").negative_answers.front(), "Healthy.");

  j["positive_answers"] = nlohmann::json::array({"No placeholder."});
  EXPECT_THROW(QaTemplateLibrary::from_json(j), Error);
  j["positive_answers"] = nlohmann::json::array({"{condition} and {condition}"});
  EXPECT_THROW(QaTemplateLibrary::from_json(j), Error);
}

TEST(InstantiateOpenQa, PositiveFirstVariant) {
  const auto& lib = default_template_library();
  LabeledImage img{"fundus/0042.jpg", ImagingModality::Fundus, "diabetic retinopathy"};
  bool found = false;
  for (std::uint64_t seed = 0; seed < 500 && !found; ++seed) {
    auto c = choose_templates(img, lib, seed);
    if (c.set_id != "disease_identification" || c.answer_index != 0) continue;
    found = true;
    auto r = instantiate_open_qa(img, lib, seed);
    EXPECT_EQ(r.reference_answer, "The eye in the image exhibits signs of diabetic retinopathy.");
    EXPECT_EQ(r.task, TaskKind::OpenQA);
    EXPECT_EQ(r.disease_labels, std::vector<std::string>{"diabetic retinopathy"});
  }
  EXPECT_TRUE(found);
}

TEST(InstantiateOpenQa, NegativeFirstVariant) {
  const auto& lib = default_template_library();
  LabeledImage img{"fundus/0007.jpg", ImagingModality::Fundus, std::nullopt};
  bool found = false;
  for (std::uint64_t seed = 0; seed < 500 && !found; ++seed) {
    auto c = choose_templates(img, lib, seed);
    if (c.set_id != "disease_presence" || c.answer_index != 0) continue;
    found = true;
    EXPECT_EQ(instantiate_open_qa(img, lib, seed).reference_answer, "No, very healthy.");
  }
  EXPECT_TRUE(found);
}

TEST(InstantiateOpenQa, DeterministicApartFromId) {
  const auto& lib = default_template_library();
  LabeledImage img{"oct/9.png", ImagingModality::OCT, "macular hole"};
  auto a = instantiate_open_qa(img, lib, 77);
  auto b = instantiate_open_qa(img, lib, 77, "custom-id");
  b.id = a.id;
  EXPECT_EQ(a, b);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  EXPECT_THROW(instantiate_open_qa({"x", ImagingModality::OCT, "  "}, lib, 1), Error);
}

TEST(InstantiateOpenQa, TemplateFidelity) {
  const auto& lib = default_template_library();
  const std::vector<std::string> conditions = {"glaucoma", "retinal detachment", "keratitis",
                                               "age-related macular degeneration"};
  for (int i = 0; i < 2000; ++i) {
    LabeledImage img;
    img.image_ref = "img/" + std::to_string(i) + ".jpg";
    img.modality = kAllModalities[static_cast<std::size_t>(i) % 8];
    if (i % 3) img.condition = conditions[static_cast<std::size_t>(i) % conditions.size()];
    auto r = instantiate_open_qa(img, lib, static_cast<std::uint64_t>(i) * 31);

    bool question_ok = false;
    for (const auto& [_, set] : lib.question_sets)
      question_ok = question_ok || contains(set.questions, r.question);
    ASSERT_TRUE(question_ok) << r.question;

    bool positive_hit = false, negative_hit = false;
    for (const auto& [_, set] : lib.question_sets) {
      if (!contains(set.questions, r.question)) continue;
      negative_hit = contains(set.negative_answers, r.reference_answer);
      if (img.condition) {
        // Put the placeholder back where the condition was spliced in.
        auto answer = r.reference_answer;
        auto pos = answer.find(*img.condition);
        if (pos != std::string::npos) {
          answer.replace(pos, img.condition->size(), "{condition}");
          positive_hit = contains(set.positive_answers, answer);
        }
      }
    }
    ASSERT_EQ(positive_hit, img.condition.has_value()) << r.reference_answer;
    ASSERT_EQ(negative_hit, !img.condition.has_value()) << r.reference_answer;
  }
}

TEST(RewritePrompt, NamesHeadingsModalityAndText) {
  RawReport rep{{"ct/1.dcm", "ct/2.dcm"}, ImagingModality::CT,
                "Orbital CT shows thickening of the left medial rectus."};
  auto p = build_rewrite_prompt(rep);
  for (const char* h : {"## Image Type", "## Imaging Findings", "## Diagnostic Suggestions"})
    EXPECT_NE(p.find(h), std::string::npos) << h;
  EXPECT_LT(p.find("## Image Type"), p.find("## Imaging Findings"));
  EXPECT_LT(p.find("## Imaging Findings"), p.find("## Diagnostic Suggestions"));
  EXPECT_NE(p.find("Markdown"), std::string::npos);
  EXPECT_NE(p.find(display_name(ImagingModality::CT)), std::string::npos);
  EXPECT_NE(p.find(rep.extracted_text), std::string::npos);
  EXPECT_EQ(p, build_rewrite_prompt(rep));
  rep.extracted_text = " \n";
  EXPECT_THROW(build_rewrite_prompt(rep), Error);
}

TEST(Sanitize, HeadlineExample) {
  Sanitizer s;
  auto r = s.sanitize("Patient: John Doe, 2023-05-01");
  EXPECT_EQ(r.text, "Patient: [NAME], [DATE]");
  ASSERT_EQ(r.spans.size(), 2u);
  EXPECT_EQ(r.spans[0], (RedactionSpan{9, 17, "NAME"}));
  EXPECT_EQ(r.spans[1], (RedactionSpan{19, 29, "DATE"}));
}

TEST(Sanitize, FixtureCorpusOffsetsAndIdempotence) {
  std::ifstream in(std::string(OPHVQA_TEST_DATA) + "/sanitize_fixture.json");
  ASSERT_TRUE(in);
  auto fixture = nlohmann::json::parse(in);
  Sanitizer s;
  ASSERT_FALSE(fixture["cases"].empty());
  for (const auto& c : fixture["cases"]) {
    const auto text = c["text"].get<std::string>();
    auto r = s.sanitize(text);
    EXPECT_EQ(r.text, c["clean"].get<std::string>()) << text;
    ASSERT_EQ(r.spans.size(), c["spans"].size()) << text;
    for (std::size_t i = 0; i < r.spans.size(); ++i) {
      EXPECT_EQ(r.spans[i].begin, c["spans"][i]["begin"].get<std::size_t>()) << text;
      EXPECT_EQ(r.spans[i].end, c["spans"][i]["end"].get<std::size_t>()) << text;
      EXPECT_EQ(r.spans[i].label, c["spans"][i]["label"].get<std::string>()) << text;
    }
    auto again = s.sanitize(r.text);
    EXPECT_EQ(again.text, r.text);
    EXPECT_TRUE(again.spans.empty()) << r.text;
  }
}

TEST(Sanitize, NoMatchesAndBadPattern) {
  Sanitizer s;
  auto r = s.sanitize("Clear cornea, deep anterior chamber.");
  EXPECT_EQ(r.text, "Clear cornea, deep anterior chamber.");
  EXPECT_TRUE(r.spans.empty());
  EXPECT_THROW(Sanitizer({{"X", "([unclosed", 0}}), Error);
}

TEST(Transforms, AbbreviationsAndChain) {
  AbbreviationExpander ex;
  EXPECT_EQ(ex.apply("IOP 21 mmHg OD, BCVA 0.8 OS."),
            "intraocular pressure 21 mmHg right eye, best-corrected visual acuity 0.8 left eye.");
  EXPECT_EQ(ex.apply("ODE and OCT"), "ODE and OCT");
  Sanitizer s;
  std::vector<const TextTransform*> chain = {&s, &ex};
  EXPECT_EQ(apply_transforms("Patient: Wei Zhang, CNV OD", chain),
            "Patient: [NAME], choroidal neovascularization right eye");
}

TEST(ReviewSampling, SampleSizes) {
  EXPECT_EQ(review_sample_size(100, 0.10), 10u);
  EXPECT_EQ(review_sample_size(7, 0.10), 1u);
  EXPECT_EQ(review_sample_size(30, 0.10), 3u);
  EXPECT_EQ(review_sample_size(0, 0.10), 0u);
  EXPECT_EQ(review_sample_size(5, 1.0), 5u);
  EXPECT_THROW(review_sample_size(5, 0.0), Error);
  EXPECT_THROW(review_sample_size(5, 1.5), Error);
  for (std::size_t n = 1; n <= 2000; ++n)
    ASSERT_EQ(review_sample_size(n, 0.10), (n + 9) / 10) << n;
}

TEST(ReviewSampling, FiveReviewersHundredRecords) {
  auto batch = sample_for_review(synthetic_manifest(100), kFiveReviewers, {0.10, 5});
  ASSERT_EQ(batch.sampled_ids.size(), 10u);
  EXPECT_EQ(std::set<std::string>(batch.sampled_ids.begin(), batch.sampled_ids.end()).size(), 10u);
  auto load = batch.load();
  ASSERT_EQ(load.size(), 5u);
  for (const auto& [_, n] : load) EXPECT_EQ(n, 4u);
  for (const auto& [id, pair] : batch.assignments) EXPECT_NE(pair.first, pair.second);
}

TEST(ReviewSampling, SevenRecordsAndErrors) {
  auto batch = sample_for_review(synthetic_manifest(7), {"a", "b"}, {0.10, 1});
  EXPECT_EQ(batch.sampled_ids.size(), 1u);
  EXPECT_THROW(sample_for_review(synthetic_manifest(7), {"a"}, {}), Error);
  EXPECT_THROW(sample_for_review(synthetic_manifest(7), {"a", "a"}, {}), Error);
}

TEST(ReviewSampling, SeedDeterminismAndBalance) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto m = synthetic_manifest(37 + seed * 13);
    std::vector<std::string> reviewers = {"r3", "r1", "r2"};
    if (seed % 2) reviewers.push_back("r4");
    SampleOptions opt{0.10, seed};
    opt.stratify_by_modality = seed % 3 == 0;
    auto a = sample_for_review(m, reviewers, opt);
    auto b = sample_for_review(m, reviewers, opt);
    EXPECT_EQ(a.sampled_ids, b.sampled_ids);
    EXPECT_EQ(a.assignments, b.assignments);
    ASSERT_EQ(a.sampled_ids.size(), review_sample_size(m.size(), 0.10));
    ASSERT_EQ(a.assignments.size(), a.sampled_ids.size());
    std::size_t lo = SIZE_MAX, hi = 0;
    auto load = a.load();
    for (const auto& r : reviewers) {
      lo = std::min(lo, load[r]);
      hi = std::max(hi, load[r]);
    }
    EXPECT_LE(hi - lo, 1u);
    for (const auto& [id, pair] : a.assignments) {
      EXPECT_NE(pair.first, pair.second);
      EXPECT_NE(m.find(id), nullptr);
    }
  }
}

TEST(ReviewSampling, StratifiedAllocationFollowsModalityShares) {
  std::vector<VqaRecord> recs;
  for (int i = 0; i < 200; ++i) {
    VqaRecord r;
    r.id = "s" + std::to_string(i);
    r.modality = i < 150 ? ImagingModality::OCT : ImagingModality::CT;
    r.task = TaskKind::OpenQA;
    r.question = "q";
    r.reference_answer = "a";
    recs.push_back(r);
  }
  DatasetManifest m(std::move(recs));
  SampleOptions opt{0.10, 3};
  opt.stratify_by_modality = true;
  auto b = sample_for_review(m, kFiveReviewers, opt);
  ASSERT_EQ(b.sampled_ids.size(), 20u);
  int oct = 0;
  for (const auto& id : b.sampled_ids) oct += m.find(id)->modality == ImagingModality::OCT;
  EXPECT_EQ(oct, 15);
}

TEST(ReviewSampling, ChiSquareUniformity) {
  // 10,000 draws on N=20 with rate 0.10 (two ids per draw); every id should
  // be hit 1,000 times in expectation. Critical value for 19 degrees of
  // freedom at alpha 0.01 is 36.191.
  auto m = synthetic_manifest(20);
  std::map<std::string, double> hits;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    auto b = sample_for_review(m, {"a", "b"}, {0.10, static_cast<std::uint64_t>(d) + 1000});
    for (const auto& id : b.sampled_ids) hits[id] += 1;
  }
  const double expected = draws * 2.0 / 20.0;
  double chi2 = 0;
  for (const auto& r : m.records()) {
    double o = hits[r.id];
    chi2 += (o - expected) * (o - expected) / expected;
  }
  EXPECT_LT(chi2, 36.191);
}

TEST(ReviewSampling, BatchJsonlRoundTrip) {
  auto batch = sample_for_review(synthetic_manifest(64), kFiveReviewers, {0.10, 9, false, "b-7"});
  std::ostringstream out;
  write_review_batch(out, batch);
  std::istringstream in(out.str());
  auto back = read_review_batch(in);
  EXPECT_EQ(back.batch_id, "b-7");
  EXPECT_EQ(back.sampled_ids, batch.sampled_ids);
  EXPECT_EQ(back.assignments, batch.assignments);

  std::istringstream bad(R"({"id":"x","reviewer_id":"a","round":1})"
                         "\n"
                         R"({"id":"x","reviewer_id":"a","round":2})");
  EXPECT_THROW(read_review_batch(bad), ManifestError);
}

TEST(InstantiateOpenQa, EveryVariantIsReachable) {
  const auto& lib = default_template_library();
  std::map<std::string, std::set<std::size_t>> questions, positives, negatives;
  for (int i = 0; i < 3000; ++i) {
    LabeledImage img{"img/" + std::to_string(i), ImagingModality::Fundus, std::nullopt};
    if (i % 2) img.condition = "cataract";
    auto c = choose_templates(img, lib, 11);
    questions[c.set_id].insert(c.question_index);
    (c.positive ? positives : negatives)[c.set_id].insert(c.answer_index);
  }
  for (const auto& [id, set] : lib.question_sets) {
    EXPECT_EQ(questions[id].size(), set.questions.size()) << id;
    EXPECT_EQ(positives[id].size(), set.positive_answers.size()) << id;
    EXPECT_EQ(negatives[id].size(), set.negative_answers.size()) << id;
  }
}
