#include "fgnn/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fgnn/error.hpp"

namespace fgnn {
namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

double days_to_seconds(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
  if (!ymd.ok()) return -1.0;
  return static_cast<double>(sys_days{ymd}.time_since_epoch().count()) * 86400.0;
}

// YYYY-MM-DD
std::optional<double> parse_date(std::string_view s) {
  s = trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  const auto y = parse_number(s.substr(0, 4));
  const auto m = parse_number(s.substr(5, 2));
  const auto d = parse_number(s.substr(8, 2));
  if (!y || !m || !d) return std::nullopt;
  const double t = days_to_seconds(static_cast<int>(*y), static_cast<unsigned>(*m),
                                   static_cast<unsigned>(*d));
  if (t < 0.0) return std::nullopt;
  return t;
}

// YYYY-MM-DDTHH:MM:SS[.fff]Z
std::optional<double> parse_iso_timestamp(std::string_view s) {
  s = trim(s);
  if (s.size() < 19 || s[10] != 'T' || s[13] != ':' || s[16] != ':') return std::nullopt;
  const auto day = parse_date(s.substr(0, 10));
  const auto hh = parse_number(s.substr(11, 2));
  const auto mm = parse_number(s.substr(14, 2));
  std::string_view sec = s.substr(17);
  if (!sec.empty() && sec.back() == 'Z') sec.remove_suffix(1);
  const auto ss = parse_number(sec);
  if (!day || !hh || !mm || !ss || *hh >= 24 || *mm >= 60 || *ss >= 61) return std::nullopt;
  return *day + *hh * 3600.0 + *mm * 60.0 + *ss;
}

std::optional<RawClick> parse_row(std::string_view line, ClickFormat format) {
  RawClick click;
  switch (format) {
    case ClickFormat::kYoochoose: {
      const auto f = split(line, ',');
      if (f.size() < 3) return std::nullopt;
      const auto ts = parse_iso_timestamp(f[1]);
      if (!ts) return std::nullopt;
      click = {std::string(trim(f[0])), *ts, std::string(trim(f[2])), *ts};
      break;
    }
    case ClickFormat::kDiginetica: {
      const auto f = split(line, ';');
      if (f.size() < 5) return std::nullopt;
      const auto frame = parse_number(f[3]);
      const auto date = parse_date(f[4]);
      if (!frame || !date) return std::nullopt;
      click = {std::string(trim(f[0])), *date, std::string(trim(f[2])), *frame};
      break;
    }
    case ClickFormat::kGeneric: {
      const auto f = split(line, ',');
      if (f.size() != 3) return std::nullopt;
      const auto ts = parse_number(f[1]);
      if (!ts) return std::nullopt;
      click = {std::string(trim(f[0])), *ts, std::string(trim(f[2])), *ts};
      break;
    }
  }
  if (click.session_id.empty() || click.item_id.empty() || click.timestamp < 0.0) {
    return std::nullopt;
  }
  return click;
}

}  // namespace

ClickFormat parse_click_format(const std::string& name) {
  if (name == "yoochoose") return ClickFormat::kYoochoose;
  if (name == "diginetica") return ClickFormat::kDiginetica;
  if (name == "generic") return ClickFormat::kGeneric;
  throw ValidationError("unknown click format '" + name + "' (yoochoose|diginetica|generic)");
}

ParseResult parse_clicks(std::istream& source, ClickFormat format) {
  ParseResult result;
  std::string line;
  bool first = true;
  while (std::getline(source, line)) {
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    auto click = parse_row(row, format);
    if (!click) {
      if (!first) {
        ++result.skipped_rows;
        ++result.data_rows;
      }
      first = false;
      continue;
    }
    first = false;
    ++result.data_rows;
    result.clicks.push_back(std::move(*click));
  }
  if (source.bad()) throw IoError("parse_clicks: read failure");
  if (result.skipped_rows * 10 > result.data_rows) {
    throw MalformedInputError("parse_clicks: " + std::to_string(result.skipped_rows) + " of " +
                                  std::to_string(result.data_rows) + " rows could not be parsed",
                              result.skipped_rows);
  }
  return result;
}

ParseResult parse_clicks_file(const std::filesystem::path& path, ClickFormat format) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_clicks(in, format);
}

std::vector<RawSession> group_sessions(std::span<const RawClick> clicks) {
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<const RawClick*>> members;
  for (const RawClick& c : clicks) {
    auto [it, inserted] = slot.try_emplace(c.session_id, members.size());
    if (inserted) members.emplace_back();
    members[it->second].push_back(&c);
  }
  std::vector<RawSession> sessions(members.size());
  for (auto& [id, i] : slot) sessions[i].id = id;
  for (std::size_t i = 0; i < members.size(); ++i) {
    auto& m = members[i];
    std::stable_sort(m.begin(), m.end(), [](const RawClick* a, const RawClick* b) {
      return a->order_key < b->order_key;
    });
    RawSession& s = sessions[i];
    s.items.reserve(m.size());
    s.end_time = m.front()->timestamp;
    for (const RawClick* c : m) {
      s.items.push_back(c->item_id);
      s.end_time = std::max(s.end_time, c->timestamp);
    }
  }
  return sessions;
}

ItemIndex Vocabulary::add(const std::string& raw_id) {
  auto [it, inserted] = index_.try_emplace(raw_id, static_cast<ItemIndex>(raw_ids_.size()));
  if (inserted) raw_ids_.push_back(raw_id);
  return it->second;
}

std::optional<ItemIndex> Vocabulary::find(const std::string& raw_id) const {
  const auto it = index_.find(raw_id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::raw_id(ItemIndex index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= raw_ids_.size()) {
    throw VocabError("vocabulary: index " + std::to_string(index) + " out of range");
  }
  return raw_ids_[index];
}

FilteredSessions filter_dataset(std::span<const RawSession> sessions, int min_item_count) {
  std::unordered_map<std::string, int> counts;
  for (const RawSession& s : sessions) {
    for (const std::string& item : s.items) ++counts[item];
  }
  FilteredSessions out;
  for (const RawSession& s : sessions) {
    std::vector<const std::string*> kept;
    for (const std::string& item : s.items) {
      if (counts[item] >= min_item_count) kept.push_back(&item);
    }
    if (kept.size() < 2) continue;
    Session session;
    session.end_time = s.end_time;
    session.items.reserve(kept.size());
    for (const std::string* item : kept) session.items.push_back(out.vocabulary.add(*item));
    out.sessions.push_back(std::move(session));
  }
  if (out.sessions.empty()) throw EmptyDatasetError("filter_dataset: no session survives filtering");
  return out;
}

std::vector<Example> augment(const Session& session) {
  const std::size_t n = session.items.size();
  if (n < 2) {
    throw ContractError("augment: session length " + std::to_string(n) + " < 2");
  }
  std::vector<Example> examples;
  examples.reserve(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    examples.push_back({std::vector<ItemIndex>(session.items.begin(), session.items.begin() + i),
                        session.items[i]});
  }
  return examples;
}

std::vector<Session> recency_split(std::span<const Session> sessions, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ContractError("recency_split: fraction must lie in (0, 1]");
  }
  const std::size_t n = sessions.size();
  // Guard against 1/64 * 64 landing a hair above an integer.
  const auto keep = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sessions[a].end_time > sessions[b].end_time;
  });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<Session> out;
  out.reserve(keep);
  for (std::size_t i : order) out.push_back(sessions[i]);
  return out;
}

double default_test_window_seconds(ClickFormat format) {
  return format == ClickFormat::kDiginetica ? 7.0 * 86400.0 : 86400.0;
}

Dataset build_dataset(const ParseResult& parsed, const PreprocessOptions& options) {
  const auto raw = group_sessions(parsed.clicks);
  const FilteredSessions filtered = filter_dataset(raw, options.min_item_count);

  double last_end = filtered.sessions.front().end_time;
  for (const Session& s : filtered.sessions) last_end = std::max(last_end, s.end_time);
  const double cutoff = last_end - options.test_window_seconds;

  std::vector<Session> train_all;
  std::vector<Session> test_sessions;
  for (const Session& s : filtered.sessions) {
    (options.test_window_seconds > 0.0 && s.end_time > cutoff ? test_sessions : train_all)
        .push_back(s);
  }
  if (train_all.empty()) throw EmptyDatasetError("build_dataset: no training sessions");
  const auto recent = recency_split(train_all, options.recency_fraction);

  Dataset ds;
  for (const Session& s : recent) {
    Session remapped;
    remapped.end_time = s.end_time;
    for (ItemIndex i : s.items) remapped.items.push_back(ds.vocabulary.add(filtered.vocabulary.raw_id(i)));
    ds.train_sessions.push_back(std::move(remapped));
  }
  for (const Session& s : ds.train_sessions) {
    auto ex = augment(s);
    ds.train.insert(ds.train.end(), ex.begin(), ex.end());
  }

  std::size_t dropped = 0;
  std::size_t total_len = 0;
  for (const Session& s : ds.train_sessions) total_len += s.items.size();
  for (const Session& s : test_sessions) {
    total_len += s.items.size();
    for (const Example& e : augment(s)) {
      Example mapped;
      bool known = true;
      for (ItemIndex i : e.input) {
        const auto idx = ds.vocabulary.find(filtered.vocabulary.raw_id(i));
        if (!idx) {
          known = false;
          break;
        }
        mapped.input.push_back(*idx);
      }
      const auto label = ds.vocabulary.find(filtered.vocabulary.raw_id(e.label));
      if (!known || !label) {
        ++dropped;
        continue;
      }
      mapped.label = *label;
      ds.test.push_back(std::move(mapped));
    }
  }

  DatasetStats& st = ds.stats;
  st.clicks = total_len;
  st.train_sessions = ds.train_sessions.size();
  st.train_examples = ds.train.size();
  st.test_sessions = test_sessions.size();
  st.test_examples = ds.test.size();
  st.dropped_test_examples = dropped;
  st.items = ds.vocabulary.size();
  st.avg_length = static_cast<double>(total_len) /
                  static_cast<double>(ds.train_sessions.size() + test_sessions.size());
  st.skipped_rows = parsed.skipped_rows;
  return ds;
}

namespace {

void write_examples(const std::vector<Example>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const Example& e : examples) {
    for (std::size_t i = 0; i < e.input.size(); ++i) out << (i ? " " : "") << e.input[i];
    out << '\t' << e.label << '\n';
  }
}

std::vector<ItemIndex> parse_indices(std::string_view text, const std::string& where) {
  std::vector<ItemIndex> out;
  for (std::string_view tok : split(trim(text), ' ')) {
    if (tok.empty()) continue;
    ItemIndex v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
      throw MalformedInputError(where + ": bad item index '" + std::string(tok) + "'", 1);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::json vocab = nlohmann::json::object();
  for (std::size_t i = 0; i < dataset.vocabulary.size(); ++i) {
    vocab[dataset.vocabulary.raw_id(static_cast<ItemIndex>(i))] = i;
  }
  std::ofstream(dir / "vocab.json", std::ios::binary) << vocab.dump(1) << '\n';

  write_examples(dataset.train, dir / "train.txt");
  write_examples(dataset.test, dir / "test.txt");

  {
    std::ofstream out(dir / "train_sessions.txt", std::ios::binary);
    for (const Session& s : dataset.train_sessions) {
      for (std::size_t i = 0; i < s.items.size(); ++i) out << (i ? " " : "") << s.items[i];
      out << '\n';
    }
  }

  const DatasetStats& st = dataset.stats;
  nlohmann::ordered_json stats = {
      {"clicks", st.clicks},
      {"train_sessions", st.train_sessions},
      {"train_examples", st.train_examples},
      {"test_sessions", st.test_sessions},
      {"test_examples", st.test_examples},
      {"items", st.items},
      {"avg_length", st.avg_length},
      {"dropped_test_examples", st.dropped_test_examples},
      {"skipped_rows", st.skipped_rows},
  };
  std::ofstream(dir / "stats.json", std::ios::binary) << stats.dump(1) << '\n';
}

std::vector<Example> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.filename().string() + ":" + std::to_string(lineno);
    if (tab == std::string::npos) throw MalformedInputError(where + ": missing tab", 1);
    Example e;
    e.input = parse_indices(std::string_view(line).substr(0, tab), where);
    const auto label = parse_indices(std::string_view(line).substr(tab + 1), where);
    if (e.input.empty() || label.size() != 1) {
      throw MalformedInputError(where + ": expected a non-empty input and one label", 1);
    }
    e.label = label.front();
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Session> read_sessions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Session> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Session s;
    s.items = parse_indices(line, path.filename().string() + ":" + std::to_string(lineno));
    out.push_back(std::move(s));
  }
  return out;
}

LoadedDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream vin(dir / "vocab.json");
  if (!vin) throw IoError("cannot open " + (dir / "vocab.json").string());
  nlohmann::json vocab;
  try {
    vin >> vocab;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedInputError("vocab.json: " + std::string(e.what()), 1);
  }
  LoadedDataset ds;
  ds.num_items = vocab.size();
  ds.train_sessions = read_sessions(dir / "train_sessions.txt");
  ds.train = read_examples(dir / "train.txt");
  ds.test = read_examples(dir / "test.txt");
  const auto check = [&](const std::vector<ItemIndex>& items, const char* file) {
    for (ItemIndex i : items) {
      if (static_cast<std::size_t>(i) >= ds.num_items) {
        throw VocabError(std::string(file) + ": item index " + std::to_string(i) +
                         " outside the vocabulary");
      }
    }
  };
  for (const Session& s : ds.train_sessions) check(s.items, "train_sessions.txt");
  for (const auto* set : {&ds.train, &ds.test}) {
    for (const Example& e : *set) {
      check(e.input, "examples");
      check({e.label}, "examples");
    }
  }
  return ds;
}

}  // namespace fgnn
