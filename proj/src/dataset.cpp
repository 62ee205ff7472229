#include "gridshed/dataset.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <sstream>

#include "gridshed/errors.hpp"
#include "gridshed/util.hpp"

namespace gridshed {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw InvalidInput("unknown split tag '" + s + "'");
}

std::vector<int> LabeledDataset::rows_in(Split s) const {
  std::vector<int> out;
  for (int r = 0; r < rows(); ++r)
    if (split.at(static_cast<size_t>(r)) == s) out.push_back(r);
  return out;
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& rows_sel) const {
  LabeledDataset out;
  out.n_bus = n_bus;
  out.seed = seed;
  const auto m = static_cast<Eigen::Index>(rows_sel.size());
  out.features.resize(m, features.cols());
  out.gen_scale.resize(m, gen_scale.cols());
  out.load_scale.resize(m, load_scale.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const int r = rows_sel[static_cast<size_t>(k)];
    out.features.row(k) = features.row(r);
    out.gen_scale.row(k) = gen_scale.row(r);
    out.load_scale.row(k) = load_scale.row(r);
    out.labels.push_back(labels.at(static_cast<size_t>(r)));
    out.binding.push_back(binding.at(static_cast<size_t>(r)));
    if (!split.empty()) out.split.push_back(split[static_cast<size_t>(r)]);
  }
  return out;
}

void LabeledDataset::validate() const {
  const auto m = static_cast<Eigen::Index>(labels.size());
  if (features.rows() != m || features.cols() != 4 * n_bus)
    throw InvalidInput("dataset feature shape does not match labels");
  if (static_cast<Eigen::Index>(binding.size()) != m || gen_scale.rows() != m ||
      load_scale.rows() != m)
    throw InvalidInput("dataset side tables do not match labels");
  if (!split.empty() && static_cast<Eigen::Index>(split.size()) != m)
    throw InvalidInput("dataset split tags do not match labels");
}

LabeledDataset generate_dataset(const Network& base, const std::vector<Contingency>& set,
                                int m, std::uint64_t seed, const GenerateOptions& opts) {
  if (m < 1) throw InvalidInput("dataset size must be at least 1");
  const int n = base.bus_count();
  LabeledDataset ds;
  ds.n_bus = n;
  ds.seed = seed;
  ds.features.resize(m, 4 * n);
  ds.gen_scale.resize(m, static_cast<Eigen::Index>(base.generators.size()));
  ds.load_scale.resize(m, static_cast<Eigen::Index>(base.loads.size()));
  ds.labels.resize(static_cast<size_t>(m));
  ds.binding.resize(static_cast<size_t>(m));
  for (int r = 0; r < m; ++r) {
    const OperatingPoint op =
        sample_operating_point(base, derive_seed(seed, "data", static_cast<std::uint64_t>(r)),
                               opts.ranges);
    const FsaVerdict v = run_fsa_tds(op.solved, set, opts.thresholds, opts.sim);
    const std::vector<double> row = bus_features(op.solved);
    for (int c = 0; c < 4 * n; ++c) ds.features(r, c) = row[static_cast<size_t>(c)];
    for (size_t g = 0; g < op.gen_scale.size(); ++g)
      ds.gen_scale(r, static_cast<Eigen::Index>(g)) = op.gen_scale[g];
    for (size_t l = 0; l < op.load_scale.size(); ++l)
      ds.load_scale(r, static_cast<Eigen::Index>(l)) = op.load_scale[l];
    ds.labels[static_cast<size_t>(r)] = v.safe ? 1 : 0;
    const int b = v.binding(opts.thresholds);
    ds.binding[static_cast<size_t>(r)] = b < 0 ? -1 : v.per_contingency[static_cast<size_t>(b)].id;
    if (opts.progress) opts.progress(r + 1, m);
  }
  return ds;
}

void split_dataset(LabeledDataset& ds, std::uint64_t seed, double val_fraction,
                   double test_fraction) {
  const int m = ds.rows();
  if (m < 10) throw InvalidInput("split_dataset needs at least 10 rows");
  if (val_fraction < 0 || test_fraction < 0 || val_fraction + test_fraction >= 1.0)
    throw InvalidInput("split fractions must leave a training share");
  std::vector<int> perm(static_cast<size_t>(m));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int n_val = static_cast<int>(std::floor(val_fraction * m + 1e-9));
  const int n_test = static_cast<int>(std::floor(test_fraction * m + 1e-9));
  const int n_train = m - n_val - n_test;
  ds.split.assign(static_cast<size_t>(m), Split::Train);
  for (int k = n_train; k < n_train + n_val; ++k) ds.split[static_cast<size_t>(perm[static_cast<size_t>(k)])] = Split::Val;
  for (int k = n_train + n_val; k < m; ++k) ds.split[static_cast<size_t>(perm[static_cast<size_t>(k)])] = Split::Test;
}

std::vector<int> mask_buses(Eigen::Ref<Eigen::RowVectorXd> row, int n_bus, double fraction,
                            std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidInput("mask fraction must be in [0, 1)");
  if (row.size() != 4 * n_bus) throw InvalidInput("mask_buses: row length is not 4N");
  const int k = static_cast<int>(std::floor(fraction * n_bus + 1e-9));
  std::vector<int> ids(static_cast<size_t>(n_bus));
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(static_cast<size_t>(k));
  std::sort(ids.begin(), ids.end());
  for (int b : ids) row.segment(4 * b, 4).setZero();
  return ids;
}

RowMatrix mask_dataset(const RowMatrix& features, int n_bus, double fraction,
                       std::uint64_t seed) {
  RowMatrix out = features;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Eigen::RowVectorXd row = out.row(r);
    mask_buses(row, n_bus, fraction, derive_seed(seed, "mask", static_cast<std::uint64_t>(r)));
    out.row(r) = row;
  }
  return out;
}

Standardizer Standardizer::fit(const RowMatrix& x, const std::vector<int>& rows) {
  if (rows.empty()) throw InvalidInput("standardizer needs at least one row");
  Standardizer s;
  s.mean = Eigen::RowVectorXd::Zero(x.cols());
  for (int r : rows) s.mean += x.row(r);
  s.mean /= static_cast<double>(rows.size());
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(x.cols());
  for (int r : rows) var += (x.row(r) - s.mean).array().square().matrix();
  var /= static_cast<double>(rows.size());
  s.scale = var.array().sqrt();
  for (Eigen::Index c = 0; c < s.scale.size(); ++c)
    if (!(s.scale(c) > 1e-12)) s.scale(c) = 1.0;
  return s;
}

RowMatrix Standardizer::apply(const RowMatrix& x) const {
  RowMatrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = apply_row(x.row(r));
  return out;
}

Eigen::RowVectorXd Standardizer::apply_row(const Eigen::RowVectorXd& x) const {
  if (x.size() != mean.size()) throw InvalidInput("standardizer width mismatch");
  return ((x - mean).array() / scale.array()).matrix();
}

void to_json(json& j, const Standardizer& s) {
  j = {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
       {"scale", std::vector<double>(s.scale.data(), s.scale.data() + s.scale.size())}};
}

void from_json(const json& j, Standardizer& s) {
  const auto m = j.at("mean").get<std::vector<double>>();
  const auto sc = j.at("scale").get<std::vector<double>>();
  if (m.size() != sc.size()) throw InvalidInput("standardizer mean/scale size mismatch");
  s.mean = Eigen::Map<const Eigen::RowVectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.scale = Eigen::Map<const Eigen::RowVectorXd>(sc.data(), static_cast<Eigen::Index>(sc.size()));
}

namespace {

std::string matrix_csv(const RowMatrix& x, const std::vector<std::string>& header) {
  std::string out;
  for (size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
  out += "\n";
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) out += ",";
      out += fmt_exact(x(r, c));
    }
    out += "\n";
  }
  return out;
}

RowMatrix to_matrix(const std::vector<std::vector<double>>& rows, size_t first, size_t cols) {
  RowMatrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() < first + cols) throw InvalidInput("ragged dataset csv");
    for (size_t c = 0; c < cols; ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][first + c];
  }
  return x;
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir,
                  const json& manifest_extra) {
  ds.validate();
  std::vector<std::string> fh;
  for (int b = 0; b < ds.n_bus; ++b)
    for (const char* f : {"v", "delta", "p", "q"}) fh.push_back(std::string(f) + "_" + std::to_string(b));
  write_file(dir / "features.csv", matrix_csv(ds.features, fh));

  std::string labels = "row,label,split,binding\n";
  for (int r = 0; r < ds.rows(); ++r) {
    labels += std::to_string(r) + "," + std::to_string(ds.labels[static_cast<size_t>(r)]) + "," +
              (ds.split.empty() ? std::string("none") : to_string(ds.split[static_cast<size_t>(r)])) +
              "," + std::to_string(ds.binding[static_cast<size_t>(r)]) + "\n";
  }
  write_file(dir / "labels.csv", labels);

  std::vector<std::string> sh;
  for (Eigen::Index g = 0; g < ds.gen_scale.cols(); ++g) sh.push_back("gen_" + std::to_string(g));
  for (Eigen::Index l = 0; l < ds.load_scale.cols(); ++l) sh.push_back("load_" + std::to_string(l));
  RowMatrix scales(ds.gen_scale.rows(), ds.gen_scale.cols() + ds.load_scale.cols());
  scales << ds.gen_scale, ds.load_scale;
  write_file(dir / "scales.csv", matrix_csv(scales, sh));

  int safe = 0;
  for (int l : ds.labels) safe += l;
  json manifest = manifest_extra.is_object() ? manifest_extra : json::object();
  manifest["rows"] = ds.rows();
  manifest["n_bus"] = ds.n_bus;
  manifest["n_gen"] = ds.gen_scale.cols();
  manifest["n_load"] = ds.load_scale.cols();
  manifest["seed"] = ds.seed;
  manifest["safe"] = safe;
  manifest["unsafe"] = ds.rows() - safe;
  if (!ds.split.empty()) {
    for (Split s : {Split::Train, Split::Val, Split::Test})
      manifest["split_" + to_string(s)] = ds.rows_in(s).size();
  }
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

LabeledDataset load_dataset(const std::filesystem::path& dir) {
  const json manifest = json::parse(read_file(dir / "manifest.json"));
  LabeledDataset ds;
  ds.n_bus = manifest.at("n_bus").get<int>();
  ds.seed = manifest.value("seed", std::uint64_t{0});
  const auto n_gen = manifest.at("n_gen").get<size_t>();
  const auto n_load = manifest.at("n_load").get<size_t>();

  ds.features = to_matrix(read_numeric_csv(dir / "features.csv"), 0, 4 * static_cast<size_t>(ds.n_bus));
  const auto scales = read_numeric_csv(dir / "scales.csv");
  ds.gen_scale = to_matrix(scales, 0, n_gen);
  ds.load_scale = to_matrix(scales, n_gen, n_load);

  std::istringstream in(read_file(dir / "labels.csv"));
  std::string line;
  std::getline(in, line);
  bool tagged = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw InvalidInput("labels.csv needs 4 columns");
    ds.labels.push_back(std::stoi(cells[1]));
    if (cells[2] == "none") {
      tagged = false;
    } else {
      ds.split.push_back(split_from_string(cells[2]));
    }
    ds.binding.push_back(std::stoi(cells[3]));
  }
  if (!tagged) ds.split.clear();
  ds.validate();
  return ds;
}

}  // namespace gridshed
