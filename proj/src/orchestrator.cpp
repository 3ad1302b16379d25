#include "fomo/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <fmt/format.h>

#include "fomo/baselines.hpp"
#include "fomo/errors.hpp"
#include "fomo/rng.hpp"
#include "fomo/trainer.hpp"

namespace fomo {

void ModelStore::upload(ClientId id, ParamVector params) {
  params.check_finite("uploaded model");
  latest_.insert_or_assign(id.index, std::move(params));
}

const ParamVector& ModelStore::get(ClientId id) const {
  const auto it = latest_.find(id.index);
  if (it == latest_.end()) {
    throw StructuralError(
        fmt::format("model store has no upload from client {}", id.index));
  }
  return it->second;
}

std::vector<ClientId> ModelStore::uploaded() const {
  std::vector<ClientId> out;
  out.reserve(latest_.size());
  for (const auto& [id, _] : latest_) out.push_back(ClientId{id});
  return out;
}

bool CommLedger::consistent() const {
  RoundComm sum;
  for (const auto& r : per_round) {
    sum.uploads += r.uploads;
    sum.downloads += r.downloads;
    sum.transfers += r.transfers;
  }
  return sum.uploads == upload_events && sum.downloads == download_events &&
         sum.transfers == models_transferred;
}

FederationState init_federation(const Federation& fed) {
  fed.config.validate();
  fed.arch.validate();
  fed.partition.validate();
  const std::size_t k = fed.config.clients;
  if (fed.partition.num_clients() != k) {
    throw ConfigError("clients", fmt::format(
        "partition holds {} clients, config expects {}",
        fed.partition.num_clients(), k));
  }
  if (fed.partition.dataset->n_features != fed.arch.n_features ||
      fed.partition.dataset->n_classes > fed.arch.n_classes) {
    throw StructuralError("architecture does not match dataset dimensions");
  }
  const ParamVector init =
      init_params(fed.arch, derive_seed(fed.config.seed, "init"));
  FederationState state;
  state.affinity = AffinityMatrix(k);
  state.participations.assign(k, 0);
  state.ledger.events_per_client.assign(k, 0);
  for (std::size_t i = 0; i < k; ++i) {
    ClientState c;
    c.id = ClientId{i};
    c.params = init;
    c.prev_params = init;
    c.affinity_row.assign(state.affinity.row(i).begin(),
                          state.affinity.row(i).end());
    c.optimizer.lr = fed.config.optimizer.lr;
    c.splits = fed.partition.clients[i];
    c.check_invariants(k);
    state.clients.push_back(std::move(c));
  }
  return state;
}

namespace {

struct Outcome {
  ClientRoundRecord record;
  ParamVector start_params;
  TrainResult trained;
  std::optional<std::vector<double>> affinity_row;
  bool communicated = false;
};

std::vector<std::size_t> sample_participants(const FederationConfig& cfg,
                                             std::size_t round) {
  std::vector<std::size_t> ids(cfg.clients);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  if (cfg.active < cfg.clients) {
    Rng rng = make_rng(cfg.seed, "participation", round);
    for (std::size_t i = 0; i < cfg.active; ++i) {
      const std::size_t j = i + uniform_index(rng, ids.size() - i);
      std::swap(ids[i], ids[j]);
    }
    ids.resize(cfg.active);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

TrainOptions train_options(const Federation& fed) {
  const FederationConfig& cfg = fed.config;
  TrainOptions o;
  o.epochs = cfg.local_epochs;
  o.batch_size = cfg.batch_size;
  o.optimizer = cfg.optimizer;
  o.dp = cfg.dp;
  o.fedprox_mu = cfg.strategy == Strategy::kFedProx ? cfg.fedprox_mu : 0.0;
  o.clip_observer = fed.clip_observer;
  return o;
}

/// First-order personalised update for one participant.
ParamVector fomo_update(const ClientState& client, const FederationState& state,
                        const Federation& fed, const DownloadPlan& plan,
                        const Dataset& data, ClientRoundRecord& record,
                        std::optional<std::vector<double>>& new_row) {
  const auto& val = client.splits.val;
  auto val_loss = [&](const ParamVector& p) {
    return evaluate(p, fed.arch, data, val).loss;
  };
  std::vector<CandidateModel> candidates;
  candidates.push_back({client.id, client.params, val_loss(client.params)});
  for (ClientId owner : plan.chosen) {
    const ParamVector& p = state.store.get(owner);
    candidates.push_back({owner, p, val_loss(p)});
  }

  std::vector<double> raw;
  if (fed.config.strategy == Strategy::kFedFomo) {
    raw = fomo_raw_weights(client.prev_params, val_loss(client.prev_params),
                           candidates);
  } else {
    std::vector<ParamVector> models;
    for (const auto& c : candidates) models.push_back(c.params);
    for (std::size_t n = 0; n < models.size(); ++n) {
      raw.push_back(fomo_model_average_weight(val_loss, models, n));
    }
  }
  const WeightVector weights = normalize_weights(raw);
  record.self_weight = weights.normalized.front();
  record.weights.assign(weights.normalized.begin() + 1,
                        weights.normalized.end());
  new_row = update_affinity(state.affinity.row(client.id.index), candidates, raw);
  return apply_fomo_update(client.prev_params, candidates, weights);
}

Outcome process_participant(const FederationState& state, const Federation& fed,
                            std::size_t client_index, std::size_t round,
                            double epsilon) {
  const FederationConfig& cfg = fed.config;
  const Dataset& data = *fed.partition.dataset;
  const ClientState& client = state.clients[client_index];
  Outcome out;
  out.record.round = round;
  out.record.client = client_index;
  out.record.epsilon = epsilon;
  out.communicated = cfg.strategy != Strategy::kLocal;

  ParamVector start = client.params;
  if (is_fomo(cfg.strategy)) {
    if (client.splits.val.empty()) {
      throw ConfigError("val_fraction", fmt::format(
          "client {} has an empty validation split", client_index));
    }
    Rng rng = make_rng(cfg.seed, "exploration", round, client_index);
    const auto available = state.store.uploaded();
    const DownloadPlan plan =
        select_downloads(state.affinity.row(client_index), client.id, available,
                         cfg.downloads, epsilon, rng);
    for (std::size_t s = 0; s < plan.chosen.size(); ++s) {
      out.record.downloads.push_back(plan.chosen[s].index);
      out.record.explored.push_back(plan.explored[s]);
    }
    out.record.transfers = plan.chosen.size();
    // Without foreign models there is nothing to combine; training simply
    // continues from the current local model.
    if (!plan.chosen.empty()) {
      start = fomo_update(client, state, fed, plan, data, out.record,
                          out.affinity_row);
    }
  } else if (is_global(cfg.strategy) && state.global_model) {
    start = *state.global_model;
    out.record.transfers = 1;
  }

  if (!client.splits.val.empty()) {
    out.record.val_loss = evaluate(start, fed.arch, data, client.splits.val).loss;
  }
  if (!client.splits.test.empty()) {
    const EvalResult test = evaluate(start, fed.arch, data, client.splits.test);
    out.record.test_loss = test.loss;
    out.record.test_acc = test.accuracy;
  }

  ClientState training = client;
  training.params = start;
  training.optimizer.lr =
      cfg.optimizer.lr *
      std::pow(cfg.optimizer.lr_decay, static_cast<double>(round - 1));
  const std::uint64_t seed =
      derive_seed(cfg.seed, "batching", client_index, round);
  const TrainOptions options = train_options(fed);
  out.trained = cfg.strategy == Strategy::kLocal
                    ? local_only_round(training, fed.arch, data, options, seed)
                    : train_local(training, fed.arch, data, options, seed);
  out.start_params = std::move(start);
  return out;
}

template <typename Fn>
void for_each_index(std::size_t n, std::size_t workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  const std::size_t threads = std::min(workers, n);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

RoundMetrics run_round(FederationState& state, const Federation& fed,
                       std::size_t round) {
  const FederationConfig& cfg = fed.config;
  RoundMetrics metrics;
  metrics.round = round;
  metrics.participants = sample_participants(cfg, round);
  const double epsilon = cfg.epsilon_at(round);

  std::vector<std::optional<Outcome>> outcomes(metrics.participants.size());
  for_each_index(metrics.participants.size(), cfg.workers, [&](std::size_t p) {
    const std::size_t client = metrics.participants[p];
    try {
      outcomes[p] = process_participant(state, fed, client, round, epsilon);
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw Error(
          fmt::format("round {}, client {}: {}", round, client, e.what()));
    }
  });

  // Round barrier: every write happens here, in participant order.
  std::vector<ParamVector> uploads;
  std::vector<std::size_t> sizes;
  for (std::size_t p = 0; p < outcomes.size(); ++p) {
    Outcome& o = *outcomes[p];
    const std::size_t id = metrics.participants[p];
    ClientState& client = state.clients[id];
    client.prev_params = std::move(o.start_params);
    client.params = o.trained.params;
    client.optimizer = o.trained.optimizer;
    if (o.affinity_row) {
      state.affinity.set_row(id, *o.affinity_row);
      client.affinity_row = *o.affinity_row;
    }
    ++state.participations[id];
    if (o.communicated) {
      state.store.upload(client.id, o.trained.params);
      metrics.comm.uploads += 1;
      metrics.comm.downloads += 1;
      metrics.comm.transfers += o.record.transfers;
      state.ledger.events_per_client[id] += 2;
    }
    uploads.push_back(std::move(o.trained.params));
    sizes.push_back(client.splits.train.size());
    metrics.clients.push_back(std::move(o.record));
  }
  if (is_global(cfg.strategy)) {
    state.global_model = fedavg_aggregate({std::move(uploads), std::move(sizes)});
  }
  state.ledger.upload_events += metrics.comm.uploads;
  state.ledger.download_events += metrics.comm.downloads;
  state.ledger.models_transferred += metrics.comm.transfers;
  state.ledger.per_round.push_back(metrics.comm);
  state.rounds_completed = round;
  return metrics;
}

ExperimentSummary summarize(const Federation& fed, const FederationState& state,
                            const std::vector<RoundMetrics>& rounds) {
  const FederationConfig& cfg = fed.config;
  ExperimentSummary s;
  s.strategy = std::string(to_string(cfg.strategy));
  s.rounds = rounds.size();
  s.final_test_acc.assign(cfg.clients, std::nullopt);
  std::vector<std::optional<double>> final_loss(cfg.clients);
  for (const auto& r : rounds) {
    for (const auto& c : r.clients) {
      if (c.test_acc) s.final_test_acc[c.client] = c.test_acc;
      if (c.test_loss) final_loss[c.client] = c.test_loss;
    }
    s.total_transfers += r.comm.transfers;
    s.max_round_transfers = std::max(s.max_round_transfers, r.comm.transfers);
  }
  double acc_sum = 0.0, acc_sq = 0.0, loss_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < cfg.clients; ++i) {
    if (!s.final_test_acc[i]) continue;
    acc_sum += *s.final_test_acc[i];
    acc_sq += *s.final_test_acc[i] * *s.final_test_acc[i];
    loss_sum += final_loss[i].value_or(0.0);
    ++n;
  }
  if (n) {
    const double dn = static_cast<double>(n);
    s.mean_test_acc = acc_sum / dn;
    s.std_test_acc = std::sqrt(std::max(0.0, acc_sq / dn - s.mean_test_acc * s.mean_test_acc));
    s.mean_test_loss = loss_sum / dn;
  }
  s.communications_per_client = state.ledger.events_per_client;
  for (std::size_t p : state.participations) {
    s.local_epochs_per_client.push_back(p * cfg.local_epochs);
  }
  bool any_train = true;
  for (const auto& c : fed.partition.clients) any_train &= !c.train.empty();
  if (any_train) s.emd = compute_emd(fed.partition).mean;
  if (is_fomo(cfg.strategy) && cfg.clients > 1) {
    const auto& part = fed.partition;
    std::vector<std::size_t> targets(cfg.clients);
    for (std::size_t i = 0; i < cfg.clients; ++i) {
      targets[i] = part.target_distribution(i);
    }
    s.affinity_train_groups = affinity_mass(
        state.affinity, part.distribution_of_client, part.distribution_of_client);
    s.affinity_target_groups =
        affinity_mass(state.affinity, targets, part.distribution_of_client);
  }
  if (cfg.dp) {
    DPReport dp;
    dp.noise_multiplier = cfg.dp->noise_multiplier;
    dp.clip_norm = cfg.dp->clip_norm;
    dp.delta = cfg.dp->delta;
    std::size_t smallest = std::numeric_limits<std::size_t>::max();
    for (const auto& c : state.clients) {
      const std::size_t per_epoch =
          (c.splits.train.size() + cfg.batch_size - 1) / cfg.batch_size;
      dp.max_steps = std::max(
          dp.max_steps, per_epoch * cfg.local_epochs * state.participations[c.id.index]);
      smallest = std::min(smallest, c.splits.train.size());
    }
    dp.sample_rate = smallest ? std::min(1.0, static_cast<double>(cfg.batch_size) /
                                                  static_cast<double>(smallest))
                              : 0.0;
    s.dp = dp;
  }
  return s;
}

ExperimentResult run_experiment(const Federation& fed,
                                const RoundObserver& observer) {
  ExperimentResult result;
  result.final_state = init_federation(fed);
  for (std::size_t r = 1; r <= fed.config.rounds; ++r) {
    result.rounds.push_back(run_round(result.final_state, fed, r));
    if (observer) observer(result.rounds.back(), result.final_state);
  }
  result.summary = summarize(fed, result.final_state, result.rounds);
  return result;
}

}  // namespace fomo
