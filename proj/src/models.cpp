#include "capmatch/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "capmatch/toyworld.hpp"

namespace capmatch {

namespace {

Tensor init_weight(std::size_t out, std::size_t in, Rng& rng) {
  Tensor w({out, in});
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& x : w.data) x = rng.normal(0.0, std);
  return w;
}

Tensor init_bias(std::size_t out, std::size_t fan_in, Rng& rng) {
  // uniform in +-1/sqrt(fan_in); keeps relu pre-activations off exact zero
  Tensor b({out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& x : b.data) x = rng.uniform(-bound, bound);
  return b;
}

Linear init_linear(std::size_t out, std::size_t in, Rng& rng) {
  return Linear{init_weight(out, in, rng), init_bias(out, in, rng)};
}

RnnCell init_cell(std::size_t hidden, std::size_t embed, Rng& rng) {
  return RnnCell{init_weight(hidden, hidden, rng),
                 init_weight(hidden, embed, rng),
                 init_bias(hidden, hidden, rng)};
}

void check_tokens(std::span<const int> tokens, std::size_t vocab) {
  if (tokens.empty())
    throw std::invalid_argument("caption: empty token sequence");
  for (int t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw std::out_of_range("caption: token " + std::to_string(t) +
                              " outside vocabulary of " +
                              std::to_string(vocab));
}

}  // namespace

void DecodeConfig::validate() const {
  if (beam_width < 1)
    throw std::invalid_argument("DecodeConfig: beam width must be >= 1");
  if (max_length < 1)
    throw std::invalid_argument("DecodeConfig: max length must be >= 1");
}

ModelBundle ModelBundle::init(const ModelConfig& cfg, Rng& rng) {
  ModelBundle m;
  m.config = cfg;
  const std::size_t d = cfg.latent_dim;
  const std::size_t hid = cfg.image_hidden;
  const std::size_t dd = 2 * d;

  m.f.h1 = init_linear(hid, cfg.feature_dim, rng);
  m.f.h2 = init_linear(hid, hid, rng);
  m.f.proj = init_linear(d, hid, rng);

  m.g.embedding = init_weight(cfg.embed_dim, cfg.vocab_size, rng);
  m.g.cell = init_cell(d, cfg.embed_dim, rng);

  m.h.embedding = init_weight(cfg.embed_dim, cfg.vocab_size, rng);
  m.h.cell = init_cell(d, cfg.embed_dim, rng);
  m.h.out = init_linear(cfg.vocab_size, d, rng);

  // The transformers start as an exact identity on the tanh-bounded latent
  // cube: the +1 shift keeps every relu in its linear region for |z| < 1.
  // Paired regression then aligns the two latent spaces directly from the
  // first step instead of through an arbitrary random warp.
  for (FeatureTransformer* t : {&m.t_vc, &m.t_cv}) {
    auto identity = [&](double bias) {
      Linear l;
      l.w = Tensor({d, d});
      for (std::size_t i = 0; i < d; ++i) l.w.at(i, i) = 1.0;
      l.b = Tensor::full({d}, bias);
      return l;
    };
    t->l1 = identity(1.0);
    t->l2 = identity(0.0);
    t->l3 = identity(0.0);
    t->l4 = identity(-1.0);
  }

  m.d.bilinear = init_weight(d, d, rng);
  m.d.head = init_linear(1, dd, rng);

  m.r.l1 = init_linear(hid, hid, rng);
  m.r.head = init_linear(cfg.concept_dim, hid, rng);

  for (DomainDiscriminator* dx : {&m.d_x, &m.d_y}) {
    dx->l1 = init_linear(dd, d, rng);
    dx->l2 = init_linear(dd, dd, rng);
    dx->head = init_linear(1, dd, rng);
  }
  return m;
}

namespace {

void push_linear(std::vector<NamedParam>& out, const std::string& prefix,
                 Linear& l) {
  out.push_back({prefix + ".w", &l.w});
  out.push_back({prefix + ".b", &l.b});
}

void push_cell(std::vector<NamedParam>& out, const std::string& prefix,
               RnnCell& c) {
  out.push_back({prefix + ".w_h", &c.w_h});
  out.push_back({prefix + ".w_e", &c.w_e});
  out.push_back({prefix + ".b", &c.b});
}

void push_transformer(std::vector<NamedParam>& out, const std::string& prefix,
                      FeatureTransformer& t) {
  push_linear(out, prefix + ".l1", t.l1);
  push_linear(out, prefix + ".l2", t.l2);
  push_linear(out, prefix + ".l3", t.l3);
  push_linear(out, prefix + ".l4", t.l4);
}

}  // namespace

std::vector<NamedParam> generator_parameters(ModelBundle& m) {
  std::vector<NamedParam> out;
  push_linear(out, "f.h1", m.f.h1);
  push_linear(out, "f.h2", m.f.h2);
  push_linear(out, "f.proj", m.f.proj);
  out.push_back({"g.embedding", &m.g.embedding});
  push_cell(out, "g.cell", m.g.cell);
  out.push_back({"h.embedding", &m.h.embedding});
  push_cell(out, "h.cell", m.h.cell);
  push_linear(out, "h.out", m.h.out);
  push_transformer(out, "t_vc", m.t_vc);
  push_transformer(out, "t_cv", m.t_cv);
  push_linear(out, "r.l1", m.r.l1);
  push_linear(out, "r.head", m.r.head);
  return out;
}

std::vector<NamedParam> discriminator_parameters(ModelBundle& m) {
  std::vector<NamedParam> out;
  out.push_back({"d.bilinear", &m.d.bilinear});
  push_linear(out, "d.head", m.d.head);
  return out;
}

std::vector<NamedParam> domain_discriminator_parameters(ModelBundle& m) {
  std::vector<NamedParam> out;
  push_linear(out, "d_x.l1", m.d_x.l1);
  push_linear(out, "d_x.l2", m.d_x.l2);
  push_linear(out, "d_x.head", m.d_x.head);
  push_linear(out, "d_y.l1", m.d_y.l1);
  push_linear(out, "d_y.l2", m.d_y.l2);
  push_linear(out, "d_y.head", m.d_y.head);
  return out;
}

std::vector<NamedParam> named_parameters(ModelBundle& m) {
  std::vector<NamedParam> out = generator_parameters(m);
  for (const NamedParam& p : discriminator_parameters(m)) out.push_back(p);
  for (const NamedParam& p : domain_discriminator_parameters(m))
    out.push_back(p);
  return out;
}

ModelGraph::ModelGraph(Tape& tape, const ModelBundle& m)
    : tape_(&tape), model_(&m) {
  // registration order matches named_parameters for reproducibility
  for (const NamedParam& p :
       named_parameters(const_cast<ModelBundle&>(m)))
    nodes_.emplace(p.tensor, tape_->parameter(*p.tensor));
}

NodeId ModelGraph::param_node(const Tensor& t) const {
  auto it = nodes_.find(&t);
  if (it == nodes_.end())
    throw std::logic_error("ModelGraph: tensor is not a registered parameter");
  return it->second;
}

NodeId ModelGraph::linear(const Linear& l, NodeId x) {
  return tape_->add(tape_->matmul(param_node(l.w), x), param_node(l.b));
}

NodeId ModelGraph::embed(const Tensor& table, int token) {
  Tensor onehot({table.shape[1]});
  onehot.data[static_cast<std::size_t>(token)] = 1.0;
  return tape_->matmul(param_node(table), tape_->input(std::move(onehot)));
}

NodeId ModelGraph::rnn_step(const RnnCell& cell, NodeId h, NodeId e) {
  NodeId pre = tape_->add(tape_->matmul(param_node(cell.w_h), h),
                          tape_->matmul(param_node(cell.w_e), e));
  return tape_->tanh(tape_->add(pre, param_node(cell.b)));
}

NodeId ModelGraph::image_penultimate(const Tensor& features) {
  if (features.numel() != model_->config.feature_dim)
    throw std::invalid_argument("encode_image: feature dim " +
                                features.shape_str() + " does not match " +
                                std::to_string(model_->config.feature_dim));
  NodeId x = tape_->input(features);
  NodeId a = tape_->relu(linear(model_->f.h1, x));
  return tape_->relu(linear(model_->f.h2, a));
}

NodeId ModelGraph::encode_image(const Tensor& features) {
  // tanh-bounded so both modalities share the same latent geometry
  return tape_->tanh(linear(model_->f.proj, image_penultimate(features)));
}

NodeId ModelGraph::encode_caption(std::span<const int> tokens) {
  check_tokens(tokens, model_->config.vocab_size);
  NodeId h = tape_->input(Tensor({model_->config.latent_dim}));
  for (int t : tokens)
    h = rnn_step(model_->g.cell, h, embed(model_->g.embedding, t));
  return h;
}

std::vector<NodeId> ModelGraph::teacher_logits(NodeId z_x,
                                               std::span<const int> tokens) {
  check_tokens(tokens, model_->config.vocab_size);
  if (tokens.size() < 2)
    throw std::invalid_argument(
        "teacher_logits: need at least two tokens (start + target)");
  std::vector<NodeId> logits;
  logits.reserve(tokens.size() - 1);
  NodeId h = z_x;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    h = rnn_step(model_->h.cell, h, embed(model_->h.embedding, tokens[t]));
    logits.push_back(linear(model_->h.out, h));
  }
  return logits;
}

NodeId ModelGraph::transform_vc(NodeId z_x) {
  const FeatureTransformer& t = model_->t_vc;
  NodeId a = tape_->relu(linear(t.l1, z_x));
  NodeId b = tape_->relu(linear(t.l2, a));
  NodeId c = tape_->relu(linear(t.l3, b));
  return linear(t.l4, c);
}

NodeId ModelGraph::transform_cv(NodeId z_y) {
  const FeatureTransformer& t = model_->t_cv;
  NodeId a = tape_->relu(linear(t.l1, z_y));
  NodeId b = tape_->relu(linear(t.l2, a));
  NodeId c = tape_->relu(linear(t.l3, b));
  return linear(t.l4, c);
}

NodeId ModelGraph::pair_logit(NodeId z_x, NodeId z_y) {
  NodeId compat = tape_->sum(
      tape_->mul(z_x, tape_->matmul(param_node(model_->d.bilinear), z_y)));
  return tape_->add(compat, linear(model_->d.head, tape_->concat(z_x, z_y)));
}

NodeId ModelGraph::pair_score(NodeId z_x, NodeId z_y) {
  return tape_->sigmoid(pair_logit(z_x, z_y));
}

NodeId ModelGraph::concept_regress(NodeId penultimate) {
  NodeId a = tape_->relu(linear(model_->r.l1, penultimate));
  return linear(model_->r.head, a);
}

NodeId ModelGraph::domain_logit_x(NodeId z) {
  NodeId a = tape_->relu(linear(model_->d_x.l1, z));
  NodeId b = tape_->relu(linear(model_->d_x.l2, a));
  return linear(model_->d_x.head, b);
}

NodeId ModelGraph::domain_logit_y(NodeId z) {
  NodeId a = tape_->relu(linear(model_->d_y.l1, z));
  NodeId b = tape_->relu(linear(model_->d_y.l2, a));
  return linear(model_->d_y.head, b);
}

namespace infer {

namespace {

Tensor linear_fwd(const Linear& l, const Tensor& x) {
  Tensor out = matvec(l.w, x);
  add_inplace(out, l.b);
  return out;
}

Tensor embed_col(const Tensor& table, int token) {
  Tensor e({table.shape[0]});
  const std::size_t v = table.shape[1];
  for (std::size_t i = 0; i < e.numel(); ++i)
    e.data[i] = table.data[i * v + static_cast<std::size_t>(token)];
  return e;
}

Tensor rnn_fwd(const RnnCell& cell, const Tensor& h, const Tensor& e) {
  Tensor out = matvec(cell.w_h, h);
  Tensor ex = matvec(cell.w_e, e);
  add_inplace(out, ex);
  add_inplace(out, cell.b);
  tanh_inplace(out);
  return out;
}

Tensor transformer_fwd(const FeatureTransformer& t, const Tensor& z) {
  Tensor a = linear_fwd(t.l1, z);
  relu_inplace(a);
  Tensor b = linear_fwd(t.l2, a);
  relu_inplace(b);
  Tensor c = linear_fwd(t.l3, b);
  relu_inplace(c);
  return linear_fwd(t.l4, c);
}

// log-softmax of logits, written into `out`
void log_softmax(const Tensor& logits, std::vector<double>& out) {
  out.resize(logits.numel());
  double mx = logits.data[0];
  for (double x : logits.data) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : logits.data) z += std::exp(x - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < logits.numel(); ++i)
    out[i] = logits.data[i] - lse;
}

struct Hypothesis {
  std::vector<int> tokens;  // includes start, excludes end until finished
  Tensor hidden;
  double score = 0.0;  // sum of token log-probs
  bool finished = false;
};

// Standard beam search at a fixed width; used by decode() below.
Hypothesis beam_at_width(const ModelBundle& m, const Tensor& z_x, int width,
                         int max_length) {
  std::vector<Hypothesis> beams;
  beams.push_back({{Vocabulary::kStartToken}, z_x, 0.0, false});
  std::vector<Hypothesis> completed;
  std::vector<double> logp;

  while (true) {
    bool any_live = false;
    for (const Hypothesis& h : beams) any_live |= !h.finished;
    if (!any_live) break;
    std::vector<Hypothesis> candidates;
    for (const Hypothesis& h : beams) {
      Tensor next = rnn_fwd(m.h.cell, h.hidden,
                            embed_col(m.h.embedding, h.tokens.back()));
      Tensor logits = linear_fwd(m.h.out, next);
      log_softmax(logits, logp);
      for (std::size_t tok = 0; tok < logp.size(); ++tok) {
        Hypothesis c;
        c.tokens = h.tokens;
        c.tokens.push_back(static_cast<int>(tok));
        c.hidden = next;
        c.score = h.score + logp[tok];
        c.finished = static_cast<int>(tok) == Vocabulary::kEndToken ||
                     static_cast<int>(c.tokens.size()) >= max_length;
        candidates.push_back(std::move(c));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Hypothesis& a, const Hypothesis& b) {
                       return a.score > b.score;
                     });
    if (candidates.size() > static_cast<std::size_t>(width))
      candidates.resize(static_cast<std::size_t>(width));
    beams = std::move(candidates);
    for (const Hypothesis& h : beams)
      if (h.finished) completed.push_back(h);
    beams.erase(std::remove_if(beams.begin(), beams.end(),
                               [](const Hypothesis& h) { return h.finished; }),
                beams.end());
    if (beams.empty()) break;
  }
  if (completed.empty())
    throw std::logic_error("beam search produced no finished hypothesis");
  Hypothesis best = completed.front();
  for (const Hypothesis& h : completed)
    if (h.score > best.score) best = h;
  return best;
}

}  // namespace

Tensor image_penultimate(const ModelBundle& m, const Tensor& features) {
  if (features.numel() != m.config.feature_dim)
    throw std::invalid_argument("encode_image: feature dim " +
                                features.shape_str() + " does not match " +
                                std::to_string(m.config.feature_dim));
  Tensor a = linear_fwd(m.f.h1, features);
  relu_inplace(a);
  Tensor b = linear_fwd(m.f.h2, a);
  relu_inplace(b);
  return b;
}

Tensor encode_image(const ModelBundle& m, const Tensor& features) {
  Tensor z = linear_fwd(m.f.proj, image_penultimate(m, features));
  tanh_inplace(z);
  return z;
}

Tensor encode_caption(const ModelBundle& m, std::span<const int> tokens) {
  check_tokens(tokens, m.config.vocab_size);
  Tensor h({m.config.latent_dim});
  for (int t : tokens)
    h = rnn_fwd(m.g.cell, h, embed_col(m.g.embedding, t));
  return h;
}

Tensor transform_vc(const ModelBundle& m, const Tensor& z_x) {
  return transformer_fwd(m.t_vc, z_x);
}

Tensor transform_cv(const ModelBundle& m, const Tensor& z_y) {
  return transformer_fwd(m.t_cv, z_y);
}

double discriminate(const ModelBundle& m, const Tensor& z_x,
                    const Tensor& z_y) {
  if (z_x.numel() != m.config.latent_dim ||
      z_y.numel() != m.config.latent_dim)
    throw std::invalid_argument("discriminate: latent dim mismatch " +
                                z_x.shape_str() + ", " + z_y.shape_str());
  const Tensor wy = matvec(m.d.bilinear, z_y);
  double compat = 0.0;
  for (std::size_t i = 0; i < z_x.numel(); ++i)
    compat += z_x.data[i] * wy.data[i];
  const Tensor logit = linear_fwd(m.d.head, concat(z_x, z_y));
  return sigmoid(compat + logit.data[0]);
}

Tensor concept_regress(const ModelBundle& m, const Tensor& penultimate) {
  if (penultimate.numel() != m.config.image_hidden)
    throw std::invalid_argument("concept_regress: penultimate dim mismatch " +
                                penultimate.shape_str());
  Tensor a = linear_fwd(m.r.l1, penultimate);
  relu_inplace(a);
  return linear_fwd(m.r.head, a);
}

std::vector<int> decode(const ModelBundle& m, const Tensor& z_x,
                        const DecodeConfig& cfg) {
  cfg.validate();
  if (cfg.mode == DecodeConfig::Mode::kTeacherForcing)
    throw std::invalid_argument(
        "decode: teacher forcing requires a target; use teacher_logits");
  if (z_x.numel() != m.config.latent_dim)
    throw std::invalid_argument("decode: latent dim mismatch " +
                                z_x.shape_str());
  const int width =
      cfg.mode == DecodeConfig::Mode::kGreedy ? 1 : cfg.beam_width;
  // Laddered widths: take the best-scoring result over widths 1..w, which
  // makes the returned score monotone in the beam width.
  Hypothesis best = beam_at_width(m, z_x, 1, cfg.max_length);
  for (int w = 2; w <= width; ++w) {
    Hypothesis h = beam_at_width(m, z_x, w, cfg.max_length);
    if (h.score > best.score) best = h;
  }
  return best.tokens;
}

double sequence_log_prob(const ModelBundle& m, const Tensor& z_x,
                         std::span<const int> tokens) {
  check_tokens(tokens, m.config.vocab_size);
  if (tokens.size() < 2)
    throw std::invalid_argument("sequence_log_prob: need start + tokens");
  Tensor h = z_x;
  std::vector<double> logp;
  double score = 0.0;
  for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
    h = rnn_fwd(m.h.cell, h, embed_col(m.h.embedding, tokens[t]));
    Tensor logits = linear_fwd(m.h.out, h);
    log_softmax(logits, logp);
    score += logp[static_cast<std::size_t>(tokens[t + 1])];
  }
  return score;
}

}  // namespace infer

}  // namespace capmatch
