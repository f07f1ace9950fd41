#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace fgnn {

using ItemIndex = std::int32_t;

enum class ClickFormat { kYoochoose, kDiginetica, kGeneric };

ClickFormat parse_click_format(const std::string& name);

/// One row of a click log.
struct RawClick {
  std::string session_id;
  double timestamp = 0.0;  // seconds since epoch, used for recency
  std::string item_id;
  double order_key = 0.0;  // intra-session ordering key
};

struct ParseResult {
  std::vector<RawClick> clicks;
  std::size_t skipped_rows = 0;
  std::size_t data_rows = 0;
};

/// Reads a delimiter-separated click log.
///
/// yoochoose:  session_id,ISO-8601 timestamp,item_id[,category]
/// diginetica: sessionId;userId;itemId;timeframe;eventdate (header optional)
/// generic:    session_id,timestamp_seconds,item_id
///
/// A first line that does not parse is treated as a header. Other rows that
/// do not parse are skipped and counted; more than 10% skipped rows raises
/// MalformedInputError.
ParseResult parse_clicks(std::istream& source, ClickFormat format);
ParseResult parse_clicks_file(const std::filesystem::path& path, ClickFormat format);

/// Session in raw item-id space, clicks ordered by order key (stable).
struct RawSession {
  std::string id;
  std::vector<std::string> items;
  double end_time = 0.0;
};

/// Groups clicks by session id. Sessions appear in order of their first click
/// in the log.
std::vector<RawSession> group_sessions(std::span<const RawClick> clicks);

struct Session {
  std::vector<ItemIndex> items;
  double end_time = 0.0;
};

/// Dense bijection between raw item ids and [0, size()).
class Vocabulary {
 public:
  ItemIndex add(const std::string& raw_id);
  std::optional<ItemIndex> find(const std::string& raw_id) const;
  const std::string& raw_id(ItemIndex index) const;
  std::size_t size() const { return raw_ids_.size(); }

 private:
  std::vector<std::string> raw_ids_;
  std::unordered_map<std::string, ItemIndex> index_;
};

struct FilteredSessions {
  std::vector<Session> sessions;
  Vocabulary vocabulary;
};

/// Drops items seen fewer than `min_item_count` times in `sessions`, then
/// sessions left shorter than two clicks, then assigns indices in order of
/// first appearance among the survivors. Applied once, not to a fixpoint.
FilteredSessions filter_dataset(std::span<const RawSession> sessions, int min_item_count = 5);

/// A prefix of a session together with the item that followed it.
struct Example {
  std::vector<ItemIndex> input;
  ItemIndex label = 0;
};

/// The n - 1 prefix/next-item pairs of a session of length n >= 2.
std::vector<Example> augment(const Session& session);

/// The ceil(fraction * N) sessions with the latest end_time, in input order.
/// Ties on end_time favour sessions earlier in the input.
std::vector<Session> recency_split(std::span<const Session> sessions, double fraction);

struct PreprocessOptions {
  ClickFormat format = ClickFormat::kGeneric;
  double recency_fraction = 1.0;
  // Sessions ending within this window before the last session end are test
  // sessions.
  double test_window_seconds = 86400.0;
  int min_item_count = 5;
};

double default_test_window_seconds(ClickFormat format);

struct DatasetStats {
  std::size_t clicks = 0;
  std::size_t train_sessions = 0;
  std::size_t train_examples = 0;
  std::size_t test_sessions = 0;
  std::size_t test_examples = 0;
  std::size_t dropped_test_examples = 0;
  std::size_t items = 0;
  double avg_length = 0.0;
  std::size_t skipped_rows = 0;
};

/// Preprocessed corpus. Item indices refer to `vocabulary`, which holds the
/// items of the training sessions only.
struct Dataset {
  Vocabulary vocabulary;
  std::vector<Session> train_sessions;
  std::vector<Example> train;
  std::vector<Example> test;
  DatasetStats stats;
};

/// Full preprocessing: frequency filter, time split, recency split of the
/// training part, re-indexing over training items, augmentation, and removal
/// of test examples that mention items unseen in training.
Dataset build_dataset(const ParseResult& parsed, const PreprocessOptions& options);

/// Writes vocab.json, train.txt, test.txt, train_sessions.txt and stats.json.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct LoadedDataset {
  std::size_t num_items = 0;
  std::vector<Session> train_sessions;
  std::vector<Example> train;
  std::vector<Example> test;
};

LoadedDataset read_dataset(const std::filesystem::path& dir);

std::vector<Example> read_examples(const std::filesystem::path& path);
std::vector<Session> read_sessions(const std::filesystem::path& path);

}  // namespace fgnn
