#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <json.hpp>
#include <unordered_map>

#include "marvin/vocal.hpp"
#include "support.hpp"

using namespace marvin;
using namespace marvin::vocal;

namespace {

const task::PoiRegistry& home_pois() {
  static const auto pois = task::PoiRegistry::load(test::data_dir() / "home.pois.json");
  return pois;
}

const IntentCatalogue& catalogue() {
  static const auto cat = IntentCatalogue::load(test::data_dir() / "vocal" / "catalogue.json", home_pois());
  return cat;
}

bool needs_place(const std::string& task) { return task == "navigate_to" || task == "night_assist"; }

// Drives a pipeline with the frames of one spoken command followed by silence
// and returns the first match.
std::optional<IntentMatch> speak(VocalPipeline& p, const std::string& words, double t0) {
  std::optional<IntentMatch> m;
  auto frames = frames_for_text(words, t0);
  const double end = frames.empty() ? t0 : frames.back().stamp;
  for (double t = end + 0.1; t < end + 2.0; t += 0.1) frames.push_back({t, 0.01, std::nullopt});
  for (const auto& f : frames) {
    auto out = p.process(f);
    if (out.match && !m) m = out.match;
  }
  return m;
}

}  // namespace

TEST_CASE("text normalization") {
  CHECK(normalize_text("  Go to the KITCHEN!! ") == "go to the kitchen");
  CHECK(normalize_text("don't\tstop") == "dont stop");
  CHECK(normalize_text("...") == "");
}

TEST_CASE("character n-grams of a short word") {
  const auto g = char_ngrams("go");
  // " go " has two 3-grams and one 4-gram.
  CHECK(g.size() == 3);
  CHECK(g.at(" go") == 1);
  CHECK(g.at("go ") == 1);
  CHECK(g.at(" go ") == 1);
  CHECK(char_ngrams("").empty());
  const auto rep = char_ngrams("aaaa");
  CHECK(rep.at("aaa") == 2);
}

TEST_CASE("retrieval score equals an independently computed tf-idf cosine") {
  const std::map<std::string, std::vector<std::string>> tasks = {
      {"follow", {"follow me", "come with me"}}, {"stop", {"stop", "halt now"}}};
  const IntentCatalogue cat(tasks, {"marvin"}, {}, "marvin", {});

  // Oracle: plain unordered maps, idf = ln((1+N)/(1+df)) + 1, unseen ln(1+N) + 1.
  const std::vector<std::string> docs = {"follow me", "come with me", "stop", "halt now"};
  auto grams = [](const std::string& s) {
    std::unordered_map<std::string, double> out;
    const std::string p = " " + s + " ";
    for (std::size_t n = 3; n <= 5; ++n) {
      for (std::size_t i = 0; i + n <= p.size(); ++i) out[p.substr(i, n)] += 1.0;
    }
    return out;
  };
  std::unordered_map<std::string, double> df;
  for (const auto& d : docs) {
    for (const auto& [g, _] : grams(d)) df[g] += 1.0;
  }
  const double n = static_cast<double>(docs.size());
  auto vec = [&](const std::string& s) {
    auto v = grams(s);
    double norm = 0.0;
    for (auto& [g, w] : v) {
      w *= df.count(g) ? std::log((1 + n) / (1 + df[g])) + 1 : std::log(1 + n) + 1;
      norm += w * w;
    }
    for (auto& [g, w] : v) w /= std::sqrt(norm);
    return v;
  };
  for (const std::string q : {"please follow me", "halt", "come here with me", "stop it now"}) {
    const auto qv = vec(q);
    double best = 0.0;
    std::string best_doc;
    for (const auto& d : docs) {
      const auto dv = vec(d);
      double dot = 0.0;
      for (const auto& [g, w] : qv) {
        if (auto it = dv.find(g); it != dv.end()) dot += w * it->second;
      }
      if (dot > best) best = dot, best_doc = d;
    }
    const auto m = match_intent(q, cat, {0.0});
    CHECK(m.score == doctest::Approx(best).epsilon(1e-12));
    CHECK(m.task == ((best_doc == "stop" || best_doc == "halt now") ? "stop" : "follow"));
  }
}

TEST_CASE("cosine of identical vectors is one and of disjoint ones zero") {
  const auto& cat = catalogue();
  const auto a = cat.embed("follow me");
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, cat.embed("xyz")) == 0.0);
}

TEST_CASE("every catalogue phrase is understood as its own task") {
  const auto& cat = catalogue();
  REQUIRE(cat.phrases().size() > 40);
  for (const auto& p : cat.phrases()) {
    const auto m = match_intent(p.text, cat);
    CHECK_MESSAGE(m.understood, p.text);
    CHECK_MESSAGE(m.task == p.task, p.text);
    CHECK(m.score == doctest::Approx(1.0));
  }
}

TEST_CASE("paraphrases: at least 90 percent understood correctly") {
  const auto set = nlohmann::json::parse(test::slurp(test::data_dir() / "vocal" / "paraphrases.json"));
  REQUIRE(set.size() == 40);
  int correct = 0;
  for (const auto& item : set) {
    const std::string text = item.at("text"), task = item.at("task"), poi = item.at("poi");
    const auto m = match_intent(text, catalogue());
    const bool ok = m.understood && m.task == task && (!needs_place(task) || m.poi == poi);
    if (!ok) MESSAGE("missed: " << text << " -> " << m.task << " " << m.score);
    correct += ok;
  }
  CHECK(correct >= 36);
}

TEST_CASE("requests without a known place are refused") {
  const auto m = match_intent("take me to the attic", catalogue());
  CHECK(!m.understood);
  CHECK(m.task == "navigate_to");
  CHECK(respond(m) == "Sorry, I don't know which place you mean.");
  const auto gibberish = match_intent("qwxz vbnm", catalogue());
  CHECK(!gibberish.understood);
  CHECK(!to_command(gibberish));
  CHECK(!match_intent("", catalogue()).understood);
}

TEST_CASE("intents map to bus commands") {
  const auto nav = to_command(match_intent("go to the kitchen", catalogue()));
  REQUIRE(nav);
  const auto& req = std::get<msg::ActionRequest>(*nav);
  CHECK(req.kind == msg::ActionKind::NavigateTo);
  CHECK(req.poi == "kitchen");
  CHECK(req.source == msg::ActionSource::Vocal);
  const auto yes = to_command(match_intent("yes", catalogue()));
  REQUIRE(yes);
  CHECK(std::get<msg::HelpReply>(*yes).answer == msg::HelpAnswer::Confirm);
}

TEST_CASE("keyword gate opens only on the trigger word") {
  PipelineState s;
  CHECK(keyword_step(s, {0.0, 0.9, "robot"}).phase == Phase::Idle);
  CHECK(keyword_step(s, {0.0, 0.9, std::nullopt}).phase == Phase::Idle);
  const auto open = keyword_step(s, {0.5, 0.9, "MARVIN"});
  CHECK(open.phase == Phase::Capturing);
  CHECK(open.capture_start == 0.5);
}

TEST_CASE("endpointing closes after the hold time below threshold") {
  PipelineParams params;
  PipelineState s;
  s.phase = Phase::Capturing;
  s.capture_start = 0.0;
  auto r = endpoint(s, {0.1, 0.6, "go"}, params);
  r = endpoint(r.state, {0.2, 0.6, "home"}, params);
  r = endpoint(r.state, {0.3, 0.05, std::nullopt}, params);
  CHECK(!r.utterance);
  r = endpoint(r.state, {1.0, 0.05, std::nullopt}, params);
  CHECK(!r.utterance);  // 0.7 s of silence
  r = endpoint(r.state, {1.1, 0.05, std::nullopt}, params);
  REQUIRE(r.utterance);
  CHECK(*r.utterance == "go home");
  CHECK(!r.truncated);

  // A loud word in the pause restarts the hold.
  PipelineState s2 = s;
  auto q = endpoint(s2, {0.3, 0.05, std::nullopt}, params);
  q = endpoint(q.state, {0.9, 0.6, "now"}, params);
  q = endpoint(q.state, {1.2, 0.05, std::nullopt}, params);
  q = endpoint(q.state, {1.9, 0.05, std::nullopt}, params);
  CHECK(!q.utterance);
  q = endpoint(q.state, {2.0, 0.05, std::nullopt}, params);
  CHECK(q.utterance);
}

TEST_CASE("endpointing truncates overlong captures") {
  PipelineParams params;
  PipelineState s;
  s.phase = Phase::Capturing;
  EndpointResult r{s, std::nullopt, false};
  double t = 0.0;
  while (!r.utterance) {
    t += 0.1;
    r = endpoint(r.state, {t, 0.6, "blah"}, params);
  }
  CHECK(r.truncated);
  CHECK(t == doctest::Approx(10.0));
}

TEST_CASE("the whole cascade turns speech into a command") {
  VocalPipeline p(catalogue());
  auto frames = frames_for_text("marvin take me to the bedroom", 1.0);
  for (double t = 1.6; t < 3.0; t += 0.1) frames.push_back({t, 0.0, std::nullopt});
  std::vector<std::string> kinds;
  std::optional<Command> cmd;
  std::optional<std::string> response;
  for (const auto& f : frames) {
    auto out = p.process(f);
    for (const auto& e : out.events) kinds.push_back(e.kind);
    if (out.command) cmd = out.command;
    if (out.response) response = out.response;
  }
  CHECK(kinds == std::vector<std::string>{"Triggered", "Utterance", "Matched"});
  REQUIRE(cmd);
  CHECK(std::get<msg::ActionRequest>(*cmd).poi == "bedroom");
  CHECK(response);
  CHECK(p.state().phase == Phase::Idle);
}

TEST_CASE("no false triggers on ten minutes of silence and noise") {
  VocalPipeline p(catalogue());
  test::Gen g(201);
  std::vector<std::string> distractors = {"martin", "marvel", "marvins", "marvelous", "marlin", "robot", "hey"};
  for (const auto& k : catalogue().keywords()) {
    if (k != catalogue().default_trigger()) distractors.push_back(k);
  }
  int triggers = 0;
  for (int k = 0; k < 30000; ++k) {  // 50 frames per second
    msg::UtteranceFrame f{k * 0.02, g.uniform(0.0, 1.0), std::nullopt};
    if (g.coin(0.3)) f.token = distractors[static_cast<std::size_t>(g.integer(0, static_cast<int>(distractors.size()) - 1))];
    for (const auto& e : p.process(f).events) triggers += e.kind == "Triggered";
  }
  CHECK(triggers == 0);
}

TEST_CASE("the trigger word can be changed to a keyword or name only") {
  VocalPipeline p(catalogue());
  CHECK_THROWS_AS(p.set_trigger("banana"), std::invalid_argument);
  p.set_trigger("sheila");
  CHECK(!speak(p, "marvin go home", 0.0));
  const auto m = speak(p, "sheila go home", 5.0);
  REQUIRE(m);
  CHECK(m->task == "go_away");
}
