#include "apcde/sdr.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "apcde/inference.hpp"
#include "apcde/train.hpp"

namespace apcde {

namespace {
// first categorical column: (slot offset, class count)
std::pair<int, int> label_column(const std::vector<ColumnSpec>& schema) {
  int off = 0;
  for (const ColumnSpec& c : schema) {
    if (c.kind == HeadKind::categorical) return {off, c.K};
    off += c.m;
  }
  throw ConfigError("sdr: dataset has no categorical column");
}

NodeId probe_logits_tape(const ProbeClassifier& probe, Tape& tape, NodeId y) {
  NodeId h = y;
  if (probe.hidden > 0) {
    h = tape.vtanh(tape.add(tape.matvec(tape.param(probe.store.find("probe.W0")), h),
                            tape.param(probe.store.find("probe.b0"))));
  }
  return tape.add(tape.matvec(tape.param(probe.store.find("probe.W")), h),
                  tape.param(probe.store.find("probe.b")));
}

Tensor probe_logits(const ProbeClassifier& probe, const Tensor& y) {
  Tensor h = y;
  if (probe.hidden > 0)
    h = vtanh(add(matvec(probe.store.value(probe.store.find("probe.W0")), h),
                  probe.store.value(probe.store.find("probe.b0"))));
  return add(matvec(probe.store.value(probe.store.find("probe.W")), h),
             probe.store.value(probe.store.find("probe.b")));
}
}  // namespace

ProbeClassifier train_probe(const Dataset& data, const ProbeConfig& cfg) {
  auto [label_off, classes] = label_column(data.schema);
  const int n = data.n();
  const int p = data.p();
  if (n < 2) throw DataError("train_probe: at least two samples required");

  std::set<int> seen;
  for (int i = 0; i < n; ++i) seen.insert(static_cast<int>(data.x.at(i, label_off)));
  if (seen.size() < 2) throw DegenerateDataError("train_probe: single-class dataset");

  ProbeClassifier probe;
  probe.cfg = cfg;
  probe.input_dim = p;
  probe.classes = classes;
  probe.hidden = cfg.hidden;

  Rng rng(cfg.seed, Stream::probe);
  const std::size_t pu = static_cast<std::size_t>(p);
  const std::size_t ku = static_cast<std::size_t>(classes);
  if (cfg.hidden > 0) {
    const std::size_t hu = static_cast<std::size_t>(cfg.hidden);
    Tensor w0 = Tensor::zeros({hu, pu});
    double sd = 1.0 / std::sqrt(static_cast<double>(p));
    for (double& v : w0.data()) v = sd * rng.normal();
    probe.store.add("probe.W0", std::move(w0));
    probe.store.add("probe.b0", Tensor::zeros({hu}));
    probe.store.add("probe.W", Tensor::zeros({ku, hu}));
  } else {
    probe.store.add("probe.W", Tensor::zeros({ku, pu}));
  }
  probe.store.add("probe.b", Tensor::zeros({ku}));

  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  int holdout = std::min(n - 1, static_cast<int>(std::floor(cfg.holdout_frac * n)));
  std::vector<int> train_idx(perm.begin(), perm.end() - holdout);
  std::vector<int> held_idx(perm.end() - holdout, perm.end());

  TrainConfig adam_cfg;  // Adam moment defaults; schedule unused
  AdamState adam = adam_init(probe.store);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      std::size_t stop = std::min(start + cfg.batch_size, train_idx.size());
      Tape tape(&probe.store);
      NodeId acc = -1;
      for (std::size_t i = start; i < stop; ++i) {
        int row = train_idx[i];
        NodeId logits = probe_logits_tape(probe, tape, tape.constant(data.row_y(row)));
        int label = static_cast<int>(data.x.at(row, label_off));
        NodeId hit = tape.sum(tape.slice(logits, label - 1, label));
        NodeId li = tape.sub(tape.logsumexp(logits), hit);
        acc = acc < 0 ? li : tape.add(acc, li);
      }
      NodeId loss = tape.scale(acc, 1.0 / static_cast<double>(stop - start));
      adam_step(probe.store, tape.gradient_of(loss), adam, cfg.lr, adam_cfg);
    }
  }

  if (!held_idx.empty()) {
    int correct = 0;
    for (int row : held_idx)
      if (probe_predict(probe, data.row_y(row)) == static_cast<int>(data.x.at(row, label_off)))
        ++correct;
    probe.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(held_idx.size());
  }
  return probe;
}

int probe_predict(const ProbeClassifier& probe, const Tensor& y) {
  Tensor logits = probe_logits(probe, y);
  int best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  return best + 1;
}

SdrResult sdr_agreement(const Model& model, const ProbeClassifier& probe, const Dataset& data,
                        int draws, std::uint64_t seed) {
  if (draws < 1) throw ArgumentError("sdr_agreement: J must be >= 1");
  if (probe.input_dim != data.p()) throw ConfigError("sdr_agreement: probe width mismatch");
  auto [label_off, classes] = label_column(data.schema);
  (void)classes;

  SdrResult result;
  result.draws = draws;
  long agreements = 0;
  for (int i = 0; i < data.n(); ++i) {
    Embedding emb = embed(model, data.row_y(i));
    Rng rng(seed, 0x20000u + static_cast<std::uint64_t>(i));
    std::vector<Tensor> regen = generate_fixed_zp(model, emb.zp, draws, rng);
    SdrRow row;
    row.id = i;
    row.observed = static_cast<int>(data.x.at(i, label_off));
    for (const Tensor& y : regen) {
      int pred = probe_predict(probe, y);
      row.predicted.push_back(pred);
      if (pred == row.observed) ++row.agree;
    }
    agreements += row.agree;
    result.rows.push_back(std::move(row));
  }
  result.rate = static_cast<double>(agreements) /
                (static_cast<double>(data.n()) * static_cast<double>(draws));
  return result;
}

void write_sdr_csv(const SdrResult& result, int label_base, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_sdr_csv: cannot open " + path);
  out << "id,observed";
  for (int j = 0; j < result.draws; ++j) out << ",pred" << (j + 1);
  out << ",agree\n";
  const int shift = label_base == 0 ? -1 : 0;
  for (const SdrRow& row : result.rows) {
    out << row.id << "," << (row.observed + shift);
    for (int pred : row.predicted) out << "," << (pred + shift);
    out << "," << row.agree << "\n";
  }
  if (!out) throw DataError("write_sdr_csv: write failed for " + path);
}

}  // namespace apcde
