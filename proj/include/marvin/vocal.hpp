#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "marvin/messages.hpp"
#include "marvin/taskmgr.hpp"

namespace marvin::vocal {

/// Lowercase, letters/digits/spaces only, single spaces, trimmed.
std::string normalize_text(std::string_view text);

/// Sparse TF-IDF vector over character n-grams, L2-normalized.
using NgramVector = std::map<std::string, double, std::less<>>;

/// Counts of character n-grams (n in [3, 5]) of the text padded with one space on each side.
std::map<std::string, int, std::less<>> char_ngrams(std::string_view normalized);

struct CataloguePhrase {
  std::string task;  // navigate_to, follow, go_away, night_assist, help_request, stop, confirm, deny
  std::string text;  // normalized
  NgramVector vec;
};

class IntentCatalogue {
 public:
  /// `tasks` maps task name to phrases; "{poi}" in a phrase expands over `poi_names`.
  IntentCatalogue(const std::map<std::string, std::vector<std::string>>& tasks, std::vector<std::string> keywords,
                  std::vector<std::string> names, std::string trigger, const std::vector<std::string>& poi_names);

  static IntentCatalogue from_json_text(std::string_view text, const task::PoiRegistry& pois);
  static IntentCatalogue load(const std::filesystem::path& path, const task::PoiRegistry& pois);

  NgramVector embed(std::string_view normalized) const;

  const std::vector<CataloguePhrase>& phrases() const { return phrases_; }
  const std::vector<std::string>& keywords() const { return keywords_; }
  const std::vector<std::string>& poi_names() const { return poi_names_; }
  const std::string& default_trigger() const { return trigger_; }
  /// True when `word` may serve as trigger: a keyword or a configured name.
  bool valid_trigger(std::string_view word) const;

 private:
  std::vector<CataloguePhrase> phrases_;
  std::map<std::string, double, std::less<>> idf_;
  double unseen_idf_ = 1.0;
  std::vector<std::string> keywords_;
  std::vector<std::string> names_;
  std::vector<std::string> poi_names_;
  std::string trigger_;
};

double cosine(const NgramVector& a, const NgramVector& b);

struct IntentMatch {
  bool understood = false;
  std::string task;    // best task even when not understood (empty for empty text)
  double score = 0.0;
  std::string poi;     // empty when the text names no known place
  std::string reason;  // why it was not understood
};

struct MatchParams {
  double threshold = 0.35;
};

IntentMatch match_intent(std::string_view text, const IntentCatalogue& catalogue, const MatchParams& params = {});

/// What a recognised intent turns into on the bus.
using Command = std::variant<msg::ActionRequest, msg::HelpReply>;
std::optional<Command> to_command(const IntentMatch& m);

// --- cascade -----------------------------------------------------------------------------

enum class Phase { Idle, Capturing, Matching, Responding };
std::string_view to_string(Phase p);

struct PipelineParams {
  double energy_threshold = 0.1;
  double hold = 0.8;
  double max_utterance = 10.0;
  MatchParams match;
};

struct PipelineState {
  Phase phase = Phase::Idle;
  std::vector<std::string> buffer;
  double capture_start = 0.0;
  std::optional<double> silence_since;
  std::string trigger = "marvin";
};

/// Idle only: flips to Capturing when the frame token equals the trigger word (case-insensitive).
PipelineState keyword_step(const PipelineState& state, const msg::UtteranceFrame& frame);

struct EndpointResult {
  PipelineState state;
  std::optional<std::string> utterance;  // set when the capture closed
  bool truncated = false;
};

/// Capturing only: collects tokens and closes the capture after `hold` seconds below the energy threshold.
EndpointResult endpoint(const PipelineState& state, const msg::UtteranceFrame& frame, const PipelineParams& params);

struct VocalEvent {
  std::string kind;  // Triggered, UtteranceTruncated, Utterance, Matched, NotUnderstood
  double stamp = 0.0;
  std::string detail;
};

struct StepOutput {
  std::vector<VocalEvent> events;
  std::optional<IntentMatch> match;
  std::optional<Command> command;
  std::optional<std::string> response;
};

/// The whole cascade for one frame.
class VocalPipeline {
 public:
  VocalPipeline(const IntentCatalogue& catalogue, PipelineParams params = {});

  StepOutput process(const msg::UtteranceFrame& frame);
  /// Throws std::invalid_argument when the word is not a keyword or configured name.
  void set_trigger(std::string_view word);
  const PipelineState& state() const { return state_; }

 private:
  const IntentCatalogue* catalogue_;
  PipelineParams params_;
  PipelineState state_;
};

/// Frames for a typed utterance: one voiced frame per word, `spacing` seconds apart.
std::vector<msg::UtteranceFrame> frames_for_text(std::string_view text, double start, double spacing = 0.1,
                                                 double energy = 0.6);

std::string respond(const IntentMatch& m);

}  // namespace marvin::vocal
