#include "marvin/vocal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>

namespace marvin::vocal {

std::string normalize_text(std::string_view text) {
  std::string out;
  bool space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;  // "don't" -> "dont"
    } else {
      space = true;
    }
  }
  return out;
}

std::map<std::string, int, std::less<>> char_ngrams(std::string_view normalized) {
  std::map<std::string, int, std::less<>> grams;
  if (normalized.empty()) return grams;
  const std::string padded = " " + std::string(normalized) + " ";
  for (std::size_t n = 3; n <= 5; ++n) {
    for (std::size_t i = 0; i + n <= padded.size(); ++i) ++grams[padded.substr(i, n)];
  }
  return grams;
}

double cosine(const NgramVector& a, const NgramVector& b) {
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia, ++ib;
    }
  }
  return dot;
}

IntentCatalogue::IntentCatalogue(const std::map<std::string, std::vector<std::string>>& tasks,
                                 std::vector<std::string> keywords, std::vector<std::string> names,
                                 std::string trigger, const std::vector<std::string>& poi_names)
    : keywords_(std::move(keywords)), names_(std::move(names)), trigger_(normalize_text(trigger)) {
  for (auto& k : keywords_) k = normalize_text(k);
  for (auto& n : names_) n = normalize_text(n);
  for (const auto& p : poi_names) poi_names_.push_back(normalize_text(p));
  std::sort(poi_names_.begin(), poi_names_.end());
  if (!valid_trigger(trigger_)) throw std::invalid_argument("trigger word '" + trigger_ + "' is not a keyword or name");

  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& [task, list] : tasks) {
    if (list.empty()) throw std::invalid_argument("task '" + task + "' has no phrases");
    for (const auto& phrase : list) {
      std::vector<std::string> expanded;
      if (const auto at = phrase.find("{poi}"); at != std::string::npos) {
        for (const auto& poi : poi_names_) {
          std::string s = phrase;
          s.replace(at, 5, poi);
          expanded.push_back(std::move(s));
        }
      } else {
        expanded.push_back(phrase);
      }
      for (auto& s : expanded) {
        std::string norm = normalize_text(s);
        if (norm.empty() || !seen.emplace(task, norm).second) continue;
        phrases_.push_back({task, std::move(norm), {}});
      }
    }
  }
  if (phrases_.empty()) throw std::invalid_argument("intent catalogue is empty");

  std::map<std::string, int, std::less<>> df;
  for (const auto& p : phrases_) {
    for (const auto& [g, _] : char_ngrams(p.text)) ++df[g];
  }
  const double n = static_cast<double>(phrases_.size());
  for (const auto& [g, d] : df) idf_[g] = std::log((1.0 + n) / (1.0 + d)) + 1.0;
  unseen_idf_ = std::log(1.0 + n) + 1.0;
  for (auto& p : phrases_) p.vec = embed(p.text);
}

NgramVector IntentCatalogue::embed(std::string_view normalized) const {
  NgramVector v;
  double norm2 = 0.0;
  for (const auto& [g, count] : char_ngrams(normalized)) {
    const auto it = idf_.find(g);
    const double w = count * (it == idf_.end() ? unseen_idf_ : it->second);
    v.emplace(g, w);
    norm2 += w * w;
  }
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& [_, w] : v) w *= inv;
  }
  return v;
}

bool IntentCatalogue::valid_trigger(std::string_view word) const {
  const std::string w = normalize_text(word);
  if (w.empty()) return false;
  return std::find(keywords_.begin(), keywords_.end(), w) != keywords_.end() ||
         std::find(names_.begin(), names_.end(), w) != names_.end();
}

IntentCatalogue IntentCatalogue::from_json_text(std::string_view text, const task::PoiRegistry& pois) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("catalogue: ") + e.what());
  }
  std::map<std::string, std::vector<std::string>> tasks;
  for (const auto& [task, list] : j.at("tasks").items()) tasks[task] = list.get<std::vector<std::string>>();
  return IntentCatalogue(tasks, j.at("keywords").get<std::vector<std::string>>(),
                         j.value("names", std::vector<std::string>{}), j.value("trigger", std::string("marvin")),
                         pois.names());
}

IntentCatalogue IntentCatalogue::load(const std::filesystem::path& path, const task::PoiRegistry& pois) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open catalogue " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str(), pois);
}

namespace {

// Longest registry name occurring as a whole-word substring; earliest on ties.
std::string find_poi(const std::string& text, const std::vector<std::string>& names) {
  const std::string padded = " " + text + " ";
  std::string best;
  std::size_t best_pos = std::string::npos;
  for (const auto& name : names) {
    const auto pos = padded.find(" " + name + " ");
    if (pos == std::string::npos) continue;
    if (name.size() > best.size() || (name.size() == best.size() && pos < best_pos)) {
      best = name;
      best_pos = pos;
    }
  }
  return best;
}

bool task_needs_poi(std::string_view task) { return task == "navigate_to" || task == "night_assist"; }

}  // namespace

IntentMatch match_intent(std::string_view text, const IntentCatalogue& catalogue, const MatchParams& params) {
  IntentMatch m;
  const std::string norm = normalize_text(text);
  if (norm.empty()) {
    m.reason = "empty utterance";
    return m;
  }
  const NgramVector q = catalogue.embed(norm);
  std::map<std::string, double> best_by_task;
  for (const auto& p : catalogue.phrases()) {
    const double s = cosine(q, p.vec);
    auto [it, inserted] = best_by_task.emplace(p.task, s);
    if (!inserted) it->second = std::max(it->second, s);
  }
  // std::map iterates task names in order, so strict > keeps the lexicographically first on ties.
  for (const auto& [task, s] : best_by_task) {
    if (m.task.empty() || s > m.score) {
      m.task = task;
      m.score = s;
    }
  }
  m.poi = find_poi(norm, catalogue.poi_names());
  if (m.score < params.threshold) {
    m.reason = "no phrase is close enough";
    return m;
  }
  if (task_needs_poi(m.task) && m.poi.empty()) {
    m.reason = "no known place in the request";
    return m;
  }
  m.understood = true;
  return m;
}

std::optional<Command> to_command(const IntentMatch& m) {
  if (!m.understood) return std::nullopt;
  if (m.task == "confirm") return msg::HelpReply{msg::HelpAnswer::Confirm};
  if (m.task == "deny") return msg::HelpReply{msg::HelpAnswer::Deny};
  msg::ActionRequest r;
  r.kind = msg::action_kind_from_string(m.task);
  r.source = msg::ActionSource::Vocal;
  if (msg::needs_poi(r.kind)) r.poi = m.poi;
  return r;
}

std::string respond(const IntentMatch& m) {
  if (!m.understood) {
    if (m.reason == "no known place in the request") return "Sorry, I don't know which place you mean.";
    return "Sorry, I did not understand.";
  }
  if (m.task == "confirm") return "Understood.";
  if (m.task == "deny") return "Okay.";
  const auto cmd = to_command(m);
  return task::acknowledgment(std::get<msg::ActionRequest>(*cmd));
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Idle: return "idle";
    case Phase::Capturing: return "capturing";
    case Phase::Matching: return "matching";
    case Phase::Responding: return "responding";
  }
  return "idle";
}

PipelineState keyword_step(const PipelineState& state, const msg::UtteranceFrame& frame) {
  PipelineState next = state;
  if (state.phase != Phase::Idle || !frame.token) return next;
  if (normalize_text(*frame.token) == state.trigger) {
    next.phase = Phase::Capturing;
    next.buffer.clear();
    next.capture_start = frame.stamp;
    next.silence_since.reset();
  }
  return next;
}

EndpointResult endpoint(const PipelineState& state, const msg::UtteranceFrame& frame, const PipelineParams& params) {
  EndpointResult r{state, std::nullopt, false};
  if (state.phase != Phase::Capturing) return r;
  auto& s = r.state;
  auto close = [&] {
    std::string text;
    for (const auto& t : s.buffer) {
      if (!text.empty()) text += ' ';
      text += t;
    }
    r.utterance = std::move(text);
    s.buffer.clear();
    s.silence_since.reset();
    s.phase = Phase::Matching;
  };
  if (frame.energy >= params.energy_threshold) {
    s.silence_since.reset();
    if (frame.token) {
      const std::string tok = normalize_text(*frame.token);
      if (!tok.empty()) s.buffer.push_back(tok);
    }
  } else if (!s.silence_since) {
    s.silence_since = frame.stamp;
  }
  if (frame.stamp - s.capture_start >= params.max_utterance - 1e-9) {
    r.truncated = true;
    close();
  } else if (s.silence_since && frame.stamp - *s.silence_since >= params.hold - 1e-9) {
    close();
  }
  return r;
}

VocalPipeline::VocalPipeline(const IntentCatalogue& catalogue, PipelineParams params)
    : catalogue_(&catalogue), params_(params) {
  state_.trigger = catalogue.default_trigger();
}

void VocalPipeline::set_trigger(std::string_view word) {
  if (!catalogue_->valid_trigger(word)) {
    throw std::invalid_argument("'" + std::string(word) + "' cannot be used as trigger word");
  }
  state_.trigger = normalize_text(word);
}

StepOutput VocalPipeline::process(const msg::UtteranceFrame& frame) {
  if (!(frame.energy >= 0.0 && frame.energy <= 1.0)) throw std::invalid_argument("frame energy outside [0, 1]");
  StepOutput out;
  if (state_.phase == Phase::Idle) {
    state_ = keyword_step(state_, frame);
    if (state_.phase == Phase::Capturing) out.events.push_back({"Triggered", frame.stamp, state_.trigger});
    return out;
  }
  auto ep = endpoint(state_, frame, params_);
  state_ = std::move(ep.state);
  if (ep.truncated) {
    out.events.push_back({"UtteranceTruncated", frame.stamp, std::to_string(params_.max_utterance) + " s"});
  }
  if (!ep.utterance) return out;
  out.events.push_back({"Utterance", frame.stamp, *ep.utterance});
  IntentMatch m = match_intent(*ep.utterance, *catalogue_, params_.match);
  state_.phase = Phase::Responding;
  if (m.understood) {
    out.events.push_back({"Matched", frame.stamp, m.task + (m.poi.empty() ? "" : ":" + m.poi)});
    out.command = to_command(m);
  } else {
    out.events.push_back({"NotUnderstood", frame.stamp, m.reason});
  }
  out.response = respond(m);
  out.match = std::move(m);
  state_.phase = Phase::Idle;
  return out;
}

std::vector<msg::UtteranceFrame> frames_for_text(std::string_view text, double start, double spacing, double energy) {
  std::vector<msg::UtteranceFrame> frames;
  std::istringstream words{std::string(text)};
  std::string w;
  double t = start;
  while (words >> w) {
    frames.push_back({t, energy, w});
    t += spacing;
  }
  return frames;
}

}  // namespace marvin::vocal
