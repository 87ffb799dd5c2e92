#include <algorithm>
#include <cmath>
#include <map>

#include "comfed/error.hpp"
#include "comfed/trainer.hpp"

namespace comfed {

std::string to_string(BaselineKind kind) {
    return kind == BaselineKind::local_only ? "local_only" : "modality_fedavg";
}

RunResult run_baseline(BaselineKind kind, std::vector<Client>& clients, const TrainConfig& cfg) {
    cfg.validate();
    if (clients.empty()) throw ConfigError("no clients");
    const std::size_t n = clients.size();

    std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
    if (kind == BaselineKind::modality_fedavg) {
        for (std::size_t i = 0; i < n; ++i) {
            auto names = clients[i].model.architecture().modality_names();
            std::sort(names.begin(), names.end());
            groups[names].push_back(i);
        }
        for (const auto& [names, members] : groups) {
            for (std::size_t i : members) {
                if (!(clients[i].model.architecture() == clients[members.front()].model.architecture())) {
                    throw ConfigError("modality_fedavg: clients " + std::to_string(members.front()) + " and " +
                                      std::to_string(i) + " share a modality subset but differ in architecture");
                }
            }
        }
    }

    TrainConfig local = cfg;
    local.lambda = 0.0;
    RunResult result;
    result.ledger = CommLedger(n);
    const LatentMap no_targets;
    for (std::size_t t = 0; t < cfg.rounds; ++t) {
        result.ledger.begin_round(t);
        std::vector<double> losses(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
                const Batch batch = gather(*clients[i].data, clients[i].sampler.next(cfg.batch_size));
                losses[i] = local_weight_step(clients[i], batch, no_targets, local).task_loss;
            }
            if (!std::isfinite(losses[i])) throw NumericError(t, i, "non-finite training loss");
        }

        for (const auto& [_, members] : groups) {
            const std::size_t count = clients[members.front()].model.parameter_count();
            std::vector<double> mean(count, 0.0);
            for (std::size_t i : members) {
                const auto params = clients[i].model.parameters();
                for (std::size_t k = 0; k < count; ++k) mean[k] += params[k];
                result.ledger.charge_uplink(i, 4 * count);
            }
            for (double& v : mean) v /= static_cast<double>(members.size());
            for (std::size_t i : members) {
                clients[i].model.assign_parameters(mean);
                result.ledger.charge_downlink(i, 4 * count);
            }
        }

        RoundRecord record{t, {}};
        const bool eval = (t + 1) % cfg.eval_every == 0 || t + 1 == cfg.rounds;
        for (std::size_t i = 0; i < n; ++i) {
            ClientRoundStats s{i, losses[i], 0.0, std::nullopt, result.ledger.cumulative_uplink(i), false};
            if (eval) s.test_acc = evaluate(clients[i].model, *clients[i].data, clients[i].data->test);
            record.clients.push_back(s);
        }
        result.records.push_back(std::move(record));
    }
    return result;
}

}  // namespace comfed
