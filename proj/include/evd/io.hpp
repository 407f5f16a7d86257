#pragma once

// Output files: the per-step ledger CSV, field snapshots, and a background
// writer thread that owns all disk access during a run.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "evd/stepper.hpp"

namespace evd {

/// Column names of the ledger CSV, in order. Changing this list breaks readers.
const std::vector<std::string>& ledger_columns();
std::string ledger_header();

struct LedgerRow {
  long step = 0;
  EnergyLedger energy;
  double mass = 0.0;
  StepReport report;
};

std::string format_ledger_row(const LedgerRow& row);

/// Reads a ledger CSV back as named columns; throws Error on a header mismatch.
struct LedgerTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::vector<double> column(const std::string& name) const;
};
LedgerTable read_ledger(const std::filesystem::path& path);

struct Snapshot {
  int dim = 2;
  std::array<int, 3> cells{1, 1, 1};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::string boundary = "periodic";
  double time = 0.0;
  long step = 0;
  /// (name, components); each component holds one value per cell in row-major order.
  std::vector<std::pair<std::string, std::vector<Eigen::VectorXd>>> fields;
};

Snapshot make_snapshot(const Grid& g, const State& s, long step);
void write_snapshot(const std::filesystem::path& path, const Snapshot& snap, bool binary);
Snapshot read_snapshot(const std::filesystem::path& path);

/// Single background thread executing queued jobs in order.
class AsyncWriter {
 public:
  AsyncWriter();
  ~AsyncWriter();
  AsyncWriter(const AsyncWriter&) = delete;
  AsyncWriter& operator=(const AsyncWriter&) = delete;

  void post(std::function<void()> job);
  /// Blocks until every posted job has run; rethrows the first job error.
  void flush();

 private:
  void loop();

  std::mutex m_;
  std::condition_variable cv_;
  std::condition_variable idle_;
  std::deque<std::function<void()>> jobs_;
  bool busy_ = false;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

/// Streams ledger rows and snapshots of a run into a directory.
class RunWriter {
 public:
  RunWriter(std::filesystem::path dir, Grid grid, int snapshot_every, bool binary);
  ~RunWriter();

  void ledger(const LedgerRow& row);
  void snapshot(const State& s, long step);
  /// Writes the final snapshot unconditionally and flushes.
  void finish(const State& s, long step);

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  Grid grid_;
  int every_;
  bool binary_;
  std::ofstream csv_;
  AsyncWriter writer_;
};

}  // namespace evd
