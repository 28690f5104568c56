#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "algnet/rng.hpp"
#include "algnet/tensor.hpp"

namespace algnet {

class DataError : public Error {
 public:
  using Error::Error;
};

/// Bijection between string codes and dense indices 0..size-1.
class CodeTable {
 public:
  std::size_t intern(const std::string& code) {
    auto [it, inserted] = index_.emplace(code, codes_.size());
    if (inserted) codes_.push_back(code);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& code) const {
    auto it = index_.find(code);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& code(std::size_t index) const { return codes_.at(index); }
  std::size_t size() const noexcept { return codes_.size(); }
  const std::vector<std::string>& codes() const noexcept { return codes_; }

  bool operator==(const CodeTable& o) const { return codes_ == o.codes_; }

 private:
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct CodeVocab {
  CodeTable diag;
  CodeTable proc;
  CodeTable med;

  bool operator==(const CodeVocab&) const = default;
};

/// Code-index sets for one encounter, each sorted ascending without repeats.
struct Visit {
  std::vector<std::size_t> diag;
  std::vector<std::size_t> proc;
  std::vector<std::size_t> med;

  bool operator==(const Visit&) const = default;
};

struct PatientRecord {
  std::string id;
  std::vector<Visit> visits;  // chronological

  bool operator==(const PatientRecord&) const = default;
};

inline void normalize_code_set(std::vector<std::size_t>& s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
}

// ---------------------------------------------------------------------------
// Vocab file: {"diag": {"code": index, ...}, "proc": {...}, "med": {...}}

inline nlohmann::json vocab_to_json(const CodeVocab& vocab) {
  auto table = [](const CodeTable& t) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t i = 0; i < t.size(); ++i) j[t.code(i)] = i;
    return j;
  };
  return {{"diag", table(vocab.diag)}, {"proc", table(vocab.proc)}, {"med", table(vocab.med)}};
}

inline CodeVocab vocab_from_json(const nlohmann::json& j) {
  auto table = [&](const char* key) {
    if (!j.contains(key) || !j.at(key).is_object()) {
      throw DataError(std::string("vocab: missing table '") + key + "'");
    }
    const auto& obj = j.at(key);
    std::vector<std::string> codes(obj.size());
    std::vector<bool> seen(obj.size(), false);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      const auto idx = it.value().get<std::size_t>();
      if (idx >= codes.size() || seen[idx]) {
        throw DataError(std::string("vocab: indices of '") + key + "' are not contiguous from 0");
      }
      seen[idx] = true;
      codes[idx] = it.key();
    }
    CodeTable t;
    for (const auto& c : codes) t.intern(c);
    return t;
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "diag" && it.key() != "proc" && it.key() != "med") {
      throw DataError("vocab: unknown table '" + it.key() + "'");
    }
  }
  return CodeVocab{table("diag"), table("proc"), table("med")};
}

inline void save_vocab(const std::string& path, const CodeVocab& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write vocab file " + path);
  out << vocab_to_json(vocab).dump(2) << '\n';
}

inline CodeVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read vocab file " + path);
  try {
    return vocab_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("vocab file " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Records file: one JSON object per line,
//   {"patient_id": "...", "visits": [{"diag": [...], "proc": [...], "med": [...]}, ...]}

struct LoadedRecords {
  CodeVocab vocab;
  std::vector<PatientRecord> records;
};

namespace detail {

inline std::vector<std::size_t> encode_codes(const nlohmann::json& arr, CodeTable& table,
                                             bool frozen, const char* field, std::size_t line) {
  if (!arr.is_array()) {
    throw DataError("line " + std::to_string(line) + ": '" + field + "' must be an array");
  }
  std::vector<std::size_t> out;
  for (const auto& c : arr) {
    if (!c.is_string()) {
      throw DataError("line " + std::to_string(line) + ": codes in '" + field +
                      "' must be strings");
    }
    const auto code = c.get<std::string>();
    if (frozen) {
      auto idx = table.find(code);
      if (!idx) {
        throw DataError("line " + std::to_string(line) + ": unknown " + field + " code '" +
                        code + "'");
      }
      out.push_back(*idx);
    } else {
      out.push_back(table.intern(code));
    }
  }
  normalize_code_set(out);
  return out;
}

inline PatientRecord parse_record_line(const nlohmann::json& j, CodeVocab& vocab, bool frozen,
                                       std::size_t line) {
  const auto where = "line " + std::to_string(line) + ": ";
  if (!j.is_object()) throw DataError(where + "expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "patient_id" && it.key() != "visits") {
      throw DataError(where + "unknown field '" + it.key() + "'");
    }
  }
  if (!j.contains("patient_id") || !j.at("patient_id").is_string()) {
    throw DataError(where + "missing string field 'patient_id'");
  }
  if (!j.contains("visits") || !j.at("visits").is_array()) {
    throw DataError(where + "missing array field 'visits'");
  }
  PatientRecord rec;
  rec.id = j.at("patient_id").get<std::string>();
  for (const auto& v : j.at("visits")) {
    if (!v.is_object()) throw DataError(where + "visit must be an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "diag" && it.key() != "proc" && it.key() != "med") {
        throw DataError(where + "unknown visit field '" + it.key() + "'");
      }
    }
    for (const char* f : {"diag", "proc", "med"}) {
      if (!v.contains(f)) throw DataError(where + "visit missing '" + f + "'");
    }
    Visit visit;
    visit.diag = encode_codes(v.at("diag"), vocab.diag, frozen, "diag", line);
    visit.proc = encode_codes(v.at("proc"), vocab.proc, frozen, "proc", line);
    visit.med = encode_codes(v.at("med"), vocab.med, frozen, "med", line);
    if (visit.diag.empty() || visit.proc.empty()) {
      throw DataError(where + "visit has an empty diagnosis or procedure set");
    }
    if (visit.med.empty()) throw DataError(where + "visit has an empty medication set");
    rec.visits.push_back(std::move(visit));
  }
  if (rec.visits.empty()) throw DataError(where + "patient has no visits");
  return rec;
}

inline LoadedRecords parse_records(std::istream& in, CodeVocab vocab, bool frozen) {
  LoadedRecords out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(line) + ": malformed JSON (" + e.what() + ")");
    }
    out.records.push_back(parse_record_line(j, vocab, frozen, line));
  }
  out.vocab = std::move(vocab);
  return out;
}

}  // namespace detail

/// Vocabularies are built from codes in order of first appearance.
inline LoadedRecords read_records(std::istream& in) {
  return detail::parse_records(in, CodeVocab{}, false);
}

/// Encodes against a fixed vocabulary; unknown codes are an error.
inline LoadedRecords read_records(std::istream& in, const CodeVocab& vocab) {
  return detail::parse_records(in, vocab, true);
}

inline LoadedRecords load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read records file " + path);
  return read_records(in);
}

inline LoadedRecords load_records(const std::string& path, const CodeVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read records file " + path);
  return read_records(in, vocab);
}

inline nlohmann::json record_to_json(const PatientRecord& rec, const CodeVocab& vocab) {
  nlohmann::json visits = nlohmann::json::array();
  auto decode = [](const std::vector<std::size_t>& idx, const CodeTable& t) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t i : idx) a.push_back(t.code(i));
    return a;
  };
  for (const auto& v : rec.visits) {
    visits.push_back({{"diag", decode(v.diag, vocab.diag)},
                      {"proc", decode(v.proc, vocab.proc)},
                      {"med", decode(v.med, vocab.med)}});
  }
  return {{"patient_id", rec.id}, {"visits", std::move(visits)}};
}

inline void write_records(std::ostream& out, const std::vector<PatientRecord>& records,
                          const CodeVocab& vocab) {
  for (const auto& r : records) out << record_to_json(r, vocab).dump() << '\n';
}

inline void save_records(const std::string& path, const std::vector<PatientRecord>& records,
                         const CodeVocab& vocab) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write records file " + path);
  write_records(out, records, vocab);
}

// ---------------------------------------------------------------------------
// Adjacency

enum class AdjacencyKind { EhrCooccurrence, Ddi };

/// Dense symmetric medication graph with zero diagonal.
struct AdjacencyMatrix {
  std::size_t size = 0;
  AdjacencyKind kind = AdjacencyKind::EhrCooccurrence;
  std::vector<double> values;        // size*size, row-major
  std::vector<std::size_t> counts;   // raw co-occurrence counts (EHR kind only)

  AdjacencyMatrix() = default;
  AdjacencyMatrix(std::size_t n, AdjacencyKind k) : size(n), kind(k), values(n * n, 0.0) {}

  double operator()(std::size_t i, std::size_t j) const { return values[i * size + j]; }

  void set_edge(std::size_t i, std::size_t j, double w) {
    values[i * size + j] = w;
    values[j * size + i] = w;
  }

  std::size_t edge_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = i + 1; j < size; ++j) n += values[i * size + j] != 0.0;
    return n;
  }

  Tensor to_tensor() const { return Tensor(Shape{size, size}, values); }

  /// Throws unless symmetric, nonnegative, zero-diagonal (and 0/1 for DDI).
  void validate() const {
    if (values.size() != size * size) throw DataError("adjacency: storage size mismatch");
    for (std::size_t i = 0; i < size; ++i) {
      if (values[i * size + i] != 0.0) throw DataError("adjacency: nonzero diagonal");
      for (std::size_t j = 0; j < size; ++j) {
        const double v = values[i * size + j];
        if (v < 0.0 || !std::isfinite(v)) throw DataError("adjacency: negative or non-finite entry");
        if (v != values[j * size + i]) throw DataError("adjacency: not symmetric");
        if (kind == AdjacencyKind::Ddi && v != 0.0 && v != 1.0) {
          throw DataError("adjacency: DDI entries must be 0/1");
        }
      }
    }
  }
};

/// A_e: 1 where two medications share at least one visit. Raw counts are
/// kept in `counts`.
inline AdjacencyMatrix build_ehr_adjacency(const std::vector<PatientRecord>& records,
                                           std::size_t n_med) {
  AdjacencyMatrix a(n_med, AdjacencyKind::EhrCooccurrence);
  a.counts.assign(n_med * n_med, 0);
  for (const auto& rec : records) {
    for (const auto& v : rec.visits) {
      for (std::size_t x = 0; x < v.med.size(); ++x) {
        for (std::size_t y = x + 1; y < v.med.size(); ++y) {
          const std::size_t i = v.med[x], j = v.med[y];
          if (i >= n_med || j >= n_med) throw DataError("build_ehr_adjacency: index out of range");
          if (i == j) continue;
          ++a.counts[i * n_med + j];
          ++a.counts[j * n_med + i];
          a.set_edge(i, j, 1.0);
        }
      }
    }
  }
  a.validate();
  return a;
}

struct DdiLoad {
  AdjacencyMatrix matrix;
  std::size_t edges_read = 0;
  std::size_t skipped_unknown = 0;
  std::size_t skipped_self = 0;
};

inline AdjacencyMatrix ddi_from_pairs(const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                                      std::size_t n_med) {
  AdjacencyMatrix a(n_med, AdjacencyKind::Ddi);
  for (auto [i, j] : edges) {
    if (i >= n_med || j >= n_med) throw DataError("ddi edge index out of range");
    if (i != j) a.set_edge(i, j, 1.0);
  }
  a.validate();
  return a;
}

/// Edge list, one "<med_code> <med_code>" per line. Unknown codes and
/// self-edges are skipped and counted. Blank lines and '#' comments are
/// ignored.
inline DdiLoad read_ddi_edges(std::istream& in, const CodeVocab& vocab) {
  DdiLoad out;
  out.matrix = AdjacencyMatrix(vocab.med.size(), AdjacencyKind::Ddi);
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    std::istringstream ls(text);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (a[0] == '#') continue;
    if (!(ls >> b) || (ls >> extra)) {
      throw DataError("ddi line " + std::to_string(line) + ": expected two medication codes");
    }
    ++out.edges_read;
    auto i = vocab.med.find(a), j = vocab.med.find(b);
    if (!i || !j) {
      ++out.skipped_unknown;
      continue;
    }
    if (*i == *j) {
      ++out.skipped_self;
      continue;
    }
    out.matrix.set_edge(*i, *j, 1.0);
  }
  out.matrix.validate();
  return out;
}

inline DdiLoad build_ddi_adjacency(const std::string& path, const CodeVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read DDI file " + path);
  return read_ddi_edges(in, vocab);
}

inline void write_ddi_edges(std::ostream& out,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges,
                            const CodeVocab& vocab) {
  for (auto [i, j] : edges) out << vocab.med.code(i) << ' ' << vocab.med.code(j) << '\n';
}

// ---------------------------------------------------------------------------
// Split

struct SplitRatios {
  double train = 2.0 / 3.0;
  double val = 1.0 / 6.0;
  double test = 1.0 / 6.0;
};

struct DatasetSplit {
  std::vector<PatientRecord> train;
  std::vector<PatientRecord> val;
  std::vector<PatientRecord> test;
};

/// Sizes of each part for n records: train and val are rounded, test takes
/// the remainder.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& r) {
  const double total = r.train + r.val + r.test;
  auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.train / total));
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.val / total));
  n_train = std::min(n_train, n);
  n_val = std::min(n_val, n - n_train);
  return {n_train, n_val, n - n_train - n_val};
}

/// Patient-level random partition, deterministic per seed. Order within each
/// part follows the shuffled order.
inline DatasetSplit split_dataset(const std::vector<PatientRecord>& records, std::uint64_t seed,
                                  const SplitRatios& ratios = {}) {
  if (records.size() < 6) {
    throw DataError("split_dataset: need at least 6 records, got " +
                    std::to_string(records.size()));
  }
  if (ratios.train <= 0 || ratios.val <= 0 || ratios.test <= 0) {
    throw DataError("split_dataset: ratios must be positive");
  }
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed ^ 0x5b1d5eedULL);
  rng.shuffle(order);
  const auto sizes = split_sizes(records.size(), ratios);
  DatasetSplit out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < sizes[0] ? out.train : (k < sizes[0] + sizes[1] ? out.val : out.test);
    dst.push_back(records[order[k]]);
  }
  return out;
}

}  // namespace algnet
