#include "diva/estimator.hpp"

#include "diva/error.hpp"
#include "diva/model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <numeric>

namespace diva {

OutcomeHead::OutcomeHead(const std::string& name, int input_dim, int hidden, Rng& init_rng) : affine_(hidden == 0) {
  if (input_dim <= 0 || hidden < 0) throw ConfigError("outcome head: invalid dimensions");
  if (affine_) {
    w1 = make_parameter(name + ".w1", ag::Matrix::Zero(input_dim, 0));
    b1 = make_parameter(name + ".b1", ag::Matrix::Zero(1, 0));
    w2 = make_parameter(name + ".w2", glorot(input_dim, 1, init_rng));
  } else {
    w1 = make_parameter(name + ".w1", glorot(input_dim, hidden, init_rng));
    b1 = make_parameter(name + ".b1", ag::Matrix::Zero(1, hidden));
    w2 = make_parameter(name + ".w2", glorot(hidden, 1, init_rng));
  }
  b2 = make_parameter(name + ".b2", ag::Matrix::Zero(1, 1));
}

ParameterList OutcomeHead::parameters() {
  ParameterList list;
  if (!affine_) {
    list.add(w1);
    list.add(b1);
  }
  list.add(w2);
  list.add(b2);
  return list;
}

ag::Var OutcomeHead::forward(const ag::Var& x, const Dropout* dropout) const {
  ag::Var in = apply_dropout(x, dropout);
  if (!affine_) in = ag::tanh(ag::add_row(ag::matmul(in, w1.var), b1.var));
  return ag::add_row(ag::matmul(in, w2.var), b2.var);
}

QHeads::QHeads(int latent_dim, int hidden, OutcomeKind kind, Rng& init_rng)
    : head0("q.head0", 2 * latent_dim, hidden, init_rng),
      head1("q.head1", 2 * latent_dim, hidden, init_rng),
      kind_(kind),
      latent_dim_(latent_dim) {}

ParameterList QHeads::parameters() {
  ParameterList list;
  list.append(head0.parameters());
  list.append(head1.parameters());
  return list;
}

namespace {

ag::Var concat_yc(const ag::Var& z_y, const ag::Var& z_c, int latent_dim) {
  if (z_y.cols() != latent_dim || z_c.cols() != latent_dim || z_y.rows() != z_c.rows()) {
    throw DataError("q heads: latent width mismatch");
  }
  const std::array<ag::Var, 2> parts{z_y, z_c};
  return ag::concat_cols(parts);
}

}  // namespace

ag::Var QHeads::raw(int t, const ag::Var& z_y, const ag::Var& z_c, const Dropout* dropout) const {
  if (t != 0 && t != 1) throw DataError("q heads: treatment must be 0 or 1");
  const ag::Var x = concat_yc(z_y, z_c, latent_dim_);
  return (t == 1 ? head1 : head0).forward(x, dropout);
}

ag::Var QHeads::factual_raw(std::span<const int> treatment, const ag::Var& z_y, const ag::Var& z_c,
                            const Dropout* dropout) const {
  const ag::Var x = apply_dropout(concat_yc(z_y, z_c, latent_dim_), dropout);
  if (static_cast<ag::Index>(treatment.size()) != x.rows()) throw DataError("q heads: treatment count mismatch");
  ag::Matrix m1(x.rows(), 1);
  for (ag::Index i = 0; i < x.rows(); ++i) m1(i, 0) = treatment[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
  const ag::Matrix m0 = ag::Matrix::Ones(x.rows(), 1) - m1;
  return ag::add(ag::mul_const(head1.forward(x), m1), ag::mul_const(head0.forward(x), m0));
}

ag::Matrix QHeads::predict(int t, const ag::Matrix& z_y, const ag::Matrix& z_c) const {
  ag::Matrix out = raw(t, ag::constant(z_y), ag::constant(z_c)).value();
  if (kind_ == OutcomeKind::binary) out = (1.0 / (1.0 + (-out.array()).exp())).matrix();
  return out;
}

double q_predict(const QHeads& q, int t, const ag::Vector& z_y, const ag::Vector& z_c) {
  return q.predict(t, z_y.transpose(), z_c.transpose())(0, 0);
}

EffectEstimate make_estimate(std::vector<std::string> ids, std::vector<double> ite_hat, std::string split,
                             std::uint64_t seed, std::string model_id) {
  if (ite_hat.empty()) throw DataError("effect estimate: no examples");
  if (ids.size() != ite_hat.size()) throw DataError("effect estimate: id/ite length mismatch");
  EffectEstimate est;
  est.ate_hat = std::accumulate(ite_hat.begin(), ite_hat.end(), 0.0) / static_cast<double>(ite_hat.size());
  est.ids = std::move(ids);
  est.ite_hat = std::move(ite_hat);
  est.split = std::move(split);
  est.seed = seed;
  est.model_id = std::move(model_id);
  return est;
}

void write_effects(const EffectEstimate& est, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write effects file " + path.string());
  for (std::size_t i = 0; i < est.ids.size(); ++i) {
    out << nlohmann::json{{"id", est.ids[i]}, {"ite_hat", est.ite_hat[i]}}.dump() << '\n';
  }
  nlohmann::json footer{{"aggregate",
                         {{"ate_hat", est.ate_hat},
                          {"n", est.ite_hat.size()},
                          {"split", est.split},
                          {"seed", est.seed},
                          {"model_id", est.model_id}}}};
  out << footer.dump() << '\n';
}

EffectEstimate read_effects(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open effects file " + path.string());
  std::vector<std::string> ids;
  std::vector<double> ites;
  nlohmann::json footer;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = nlohmann::json::parse(line);
    if (rec.contains("aggregate")) {
      footer = rec.at("aggregate");
    } else {
      ids.push_back(rec.at("id").get<std::string>());
      ites.push_back(rec.at("ite_hat").get<double>());
    }
  }
  if (footer.is_null()) throw DataError("effects file " + path.string() + " has no aggregate footer");
  return make_estimate(std::move(ids), std::move(ites), footer.value("split", ""), footer.value("seed", std::uint64_t{0}),
                       footer.value("model_id", ""));
}

std::vector<double> estimate_ites(const DivaModel& model, std::span<const Document* const> docs) {
  if (!model.initialized()) throw Error("estimate_ite: model is not initialized");
  if (docs.empty()) return {};
  const auto means = model.posterior_means(docs);
  const ag::Matrix q1 = model.q.predict(1, means.y, means.c);
  const ag::Matrix q0 = model.q.predict(0, means.y, means.c);
  std::vector<double> out(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) out[i] = q1(static_cast<ag::Index>(i), 0) - q0(static_cast<ag::Index>(i), 0);
  return out;
}

double estimate_ite(const DivaModel& model, const Document& doc) {
  const Document* one = &doc;
  return estimate_ites(model, std::span<const Document* const>(&one, 1)).front();
}

EffectEstimate estimate_ate(const DivaModel& model, const Dataset& ds, const std::string& split) {
  const auto idx = ds.select(split);
  if (idx.empty()) throw DataError("estimate_ate: split '" + split + "' is empty");
  std::vector<const Document*> docs;
  std::vector<std::string> ids;
  for (std::size_t i : idx) {
    docs.push_back(&ds.documents[i]);
    ids.push_back(ds.documents[i].id);
  }
  // Fixed-size chunks keep memory flat; results do not depend on chunking.
  constexpr std::size_t kChunk = 256;
  std::vector<double> ites;
  ites.reserve(docs.size());
  for (std::size_t begin = 0; begin < docs.size(); begin += kChunk) {
    const std::size_t len = std::min(kChunk, docs.size() - begin);
    auto part = estimate_ites(model, std::span<const Document* const>(docs.data() + begin, len));
    ites.insert(ites.end(), part.begin(), part.end());
  }
  return make_estimate(std::move(ids), std::move(ites), split, 0, "diva");
}

}  // namespace diva
