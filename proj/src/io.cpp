#include "evd/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <sstream>

#include "evd/errors.hpp"

namespace evd {

namespace fs = std::filesystem;

namespace {

std::string num(double x) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
  double x = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), x);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("cannot parse number '" + std::string(s) + "'");
  return x;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

const std::vector<std::string>& ledger_columns() {
  static const std::vector<std::string> cols = {
      "step",          "t",
      "tau",           "kinetic",
      "stored",        "energy",
      "stokes",        "hyper",
      "plastic",       "damage",
      "diffusion",     "dissipation",
      "power",         "residual_step",
      "residual",      "mass",
      "min_rho",       "max_inv_rho",
      "min_det_fe",    "max_norm_fe",
      "max_inv_det_fe", "activation",
      "newton_iterations", "continuation",
      "fe_iterations", "alpha_iterations",
      "alpha_residual", "complementarity",
      "bound_violation", "retries",
      "cfl",
  };
  return cols;
}

std::string ledger_header() {
  std::string h;
  for (const auto& c : ledger_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string format_ledger_row(const LedgerRow& row) {
  const auto& e = row.energy;
  const auto& r = row.report;
  const auto& m = r.monitors;
  std::vector<std::string> v = {
      std::to_string(row.step),
      num(e.t),
      num(r.tau),
      num(e.kinetic),
      num(e.stored),
      num(e.energy()),
      num(e.stokes),
      num(e.hyper),
      num(e.plastic),
      num(e.damage),
      num(e.diffusion),
      num(e.dissipation()),
      num(e.power),
      num(e.residual_step),
      num(e.residual),
      num(row.mass),
      num(m.min_rho),
      num(m.max_inv_rho),
      num(m.min_det_fe),
      num(m.max_norm_fe),
      num(m.max_inv_det_fe),
      num(m.activation),
      std::to_string(r.momentum.iterations + r.momentum.continuation_iterations),
      std::to_string(r.momentum.continuation ? 1 : 0),
      std::to_string(r.fe_iterations),
      std::to_string(r.alpha_iterations),
      num(r.alpha_residual),
      num(r.complementarity),
      num(r.bound_violation),
      std::to_string(r.retries),
      num(r.cfl),
  };
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::vector<double> LedgerTable::column(const std::string& name) const {
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] != name) continue;
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[k]);
    return out;
  }
  throw Error("ledger has no column '" + name + "'");
}

LedgerTable read_ledger(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open ledger " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != ledger_header())
    throw Error("ledger header mismatch in " + path.string());
  LedgerTable t;
  t.columns = ledger_columns();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto parts = split(line, ',');
    if (parts.size() != t.columns.size()) throw Error("ledger row has wrong width: " + line);
    std::vector<double> row;
    row.reserve(parts.size());
    for (auto p : parts) row.push_back(parse_double(p));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Snapshot make_snapshot(const Grid& g, const State& s, long step) {
  Snapshot snap;
  snap.dim = g.dim;
  snap.cells = g.n;
  snap.spacing = g.h;
  snap.boundary = to_string(g.bc);
  snap.time = s.t;
  snap.step = step;
  snap.fields.push_back({"rho", {s.rho}});
  snap.fields.push_back({"v", {s.v.begin(), s.v.end()}});
  snap.fields.push_back({"Fe", {s.Fe.begin(), s.Fe.end()}});
  snap.fields.push_back({"xi", {s.xi.begin(), s.xi.end()}});
  snap.fields.push_back({"alpha", {s.alpha}});
  if (s.mu.size() == s.rho.size()) snap.fields.push_back({"mu", {s.mu}});
  if (s.dual.size() == s.rho.size()) snap.fields.push_back({"dual", {s.dual}});
  return snap;
}

void write_snapshot(const fs::path& path, const Snapshot& snap, bool binary) {
  static_assert(std::endian::native == std::endian::little, "snapshot writer assumes little endian");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write snapshot " + path.string());
  out << "evd-snapshot 1\n";
  out << "dim " << snap.dim << "\n";
  out << "cells " << snap.cells[0] << " " << snap.cells[1] << " " << snap.cells[2] << "\n";
  out << "spacing " << num(snap.spacing[0]) << " " << num(snap.spacing[1]) << " "
      << num(snap.spacing[2]) << "\n";
  out << "boundary " << snap.boundary << "\n";
  out << "time " << num(snap.time) << "\n";
  out << "step " << snap.step << "\n";
  out << "order row-major index=(i*ny+j)*nz+k\n";
  out << "encoding " << (binary ? "binary-f64-le" : "ascii") << "\n";
  out << "fields";
  for (const auto& [name, comps] : snap.fields) out << " " << name << ":" << comps.size();
  out << "\nend\n";
  for (const auto& [name, comps] : snap.fields) {
    for (const auto& c : comps) {
      if (binary) {
        out.write(reinterpret_cast<const char*>(c.data()),
                  static_cast<std::streamsize>(c.size() * sizeof(double)));
      } else {
        for (Eigen::Index k = 0; k < c.size(); ++k) out << (k ? " " : "") << num(c[k]);
        out << "\n";
      }
    }
  }
  if (!out) throw Error("error while writing snapshot " + path.string());
}

Snapshot read_snapshot(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open snapshot " + path.string());
  Snapshot snap;
  std::string line;
  if (!std::getline(in, line) || line != "evd-snapshot 1")
    throw Error("not a snapshot file: " + path.string());
  bool binary = true;
  std::vector<std::pair<std::string, int>> layout;
  while (std::getline(in, line) && line != "end") {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "dim") {
      ls >> snap.dim;
    } else if (key == "cells") {
      ls >> snap.cells[0] >> snap.cells[1] >> snap.cells[2];
    } else if (key == "spacing") {
      std::string a, b, c;
      ls >> a >> b >> c;
      snap.spacing = {parse_double(a), parse_double(b), parse_double(c)};
    } else if (key == "boundary") {
      ls >> snap.boundary;
    } else if (key == "time") {
      std::string t;
      ls >> t;
      snap.time = parse_double(t);
    } else if (key == "step") {
      ls >> snap.step;
    } else if (key == "encoding") {
      std::string e;
      ls >> e;
      binary = e == "binary-f64-le";
    } else if (key == "fields") {
      std::string f;
      while (ls >> f) {
        auto colon = f.find(':');
        if (colon == std::string::npos) throw Error("bad field entry '" + f + "'");
        layout.push_back({f.substr(0, colon), std::stoi(f.substr(colon + 1))});
      }
    }
  }
  if (line != "end") throw Error("truncated snapshot header in " + path.string());
  const Eigen::Index n =
      static_cast<Eigen::Index>(snap.cells[0]) * snap.cells[1] * snap.cells[2];
  for (const auto& [name, count] : layout) {
    std::vector<Eigen::VectorXd> comps;
    for (int c = 0; c < count; ++c) {
      Eigen::VectorXd v(n);
      if (binary) {
        in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
      } else {
        if (!std::getline(in, line)) throw Error("truncated snapshot data in " + path.string());
        auto parts = split(line, ' ');
        if (static_cast<Eigen::Index>(parts.size()) != n)
          throw Error("wrong value count for field " + name);
        for (Eigen::Index k = 0; k < n; ++k) v[k] = parse_double(parts[static_cast<std::size_t>(k)]);
      }
      if (!in) throw Error("truncated snapshot data in " + path.string());
      comps.push_back(std::move(v));
    }
    snap.fields.push_back({name, std::move(comps)});
  }
  return snap;
}

AsyncWriter::AsyncWriter() : worker_([this] { loop(); }) {}

AsyncWriter::~AsyncWriter() {
  {
    std::lock_guard lock(m_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void AsyncWriter::post(std::function<void()> job) {
  {
    std::lock_guard lock(m_);
    jobs_.push_back(std::move(job));
  }
  cv_.notify_one();
}

void AsyncWriter::flush() {
  std::unique_lock lock(m_);
  idle_.wait(lock, [this] { return jobs_.empty() && !busy_; });
  if (error_) {
    auto e = error_;
    error_ = nullptr;
    std::rethrow_exception(e);
  }
}

void AsyncWriter::loop() {
  std::unique_lock lock(m_);
  while (true) {
    cv_.wait(lock, [this] { return stop_ || !jobs_.empty(); });
    if (jobs_.empty() && stop_) return;
    auto job = std::move(jobs_.front());
    jobs_.pop_front();
    busy_ = true;
    lock.unlock();
    try {
      job();
    } catch (...) {
      std::lock_guard g(m_);
      if (!error_) error_ = std::current_exception();
    }
    lock.lock();
    busy_ = false;
    if (jobs_.empty()) idle_.notify_all();
  }
}

RunWriter::RunWriter(fs::path dir, Grid grid, int snapshot_every, bool binary)
    : dir_(std::move(dir)), grid_(std::move(grid)), every_(snapshot_every), binary_(binary) {
  fs::create_directories(dir_);
  csv_.open(dir_ / "ledger.csv");
  if (!csv_) throw Error("cannot write " + (dir_ / "ledger.csv").string());
  csv_ << ledger_header() << "\n";
}

RunWriter::~RunWriter() {
  try {
    writer_.flush();
  } catch (...) {
  }
}

void RunWriter::ledger(const LedgerRow& row) {
  writer_.post([this, row] { csv_ << format_ledger_row(row) << "\n" << std::flush; });
}

void RunWriter::snapshot(const State& s, long step) {
  if (every_ <= 0 || step % every_ != 0) return;
  auto snap = std::make_shared<const Snapshot>(make_snapshot(grid_, s, step));
  char name[64];
  std::snprintf(name, sizeof name, "snapshot_%06ld.evd", step);
  auto path = dir_ / name;
  bool binary = binary_;
  writer_.post([snap, path, binary] { write_snapshot(path, *snap, binary); });
}

void RunWriter::finish(const State& s, long step) {
  auto snap = std::make_shared<const Snapshot>(make_snapshot(grid_, s, step));
  auto path = dir_ / "final.evd";
  bool binary = binary_;
  writer_.post([snap, path, binary] { write_snapshot(path, *snap, binary); });
  writer_.flush();
}

}  // namespace evd
