#pragma once

// Deterministic data-parallel mini-batch loop shared by the trainers.

#include <algorithm>
#include <cmath>
#include <exception>
#include <span>
#include <thread>
#include <vector>

#include "report_kg/params.hpp"
#include "report_kg/tensor.hpp"

namespace rkg::detail {

// Runs fn(w) for w in [0, n) on separate threads (inline when n == 1).
template <typename Fn>
void run_parallel(std::size_t n, Fn&& fn) {
  if (n <= 1) {
    if (n == 1) fn(std::size_t{0});
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> threads;
    threads.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
      threads.emplace_back([&, w] {
        try {
          fn(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <typename Model>
struct Replica {
  Model model;
  ParamSet params;
  GradBuffer grads;
  double loss = 0.0;
};

template <typename Model>
std::vector<Replica<Model>> make_replicas(const Model& model, std::size_t n) {
  std::vector<Replica<Model>> out(std::max<std::size_t>(1, n));
  for (auto& r : out) {
    r.model = model.clone();
    r.params = r.model.params();
    r.grads = zeros_like(r.params);
  }
  return out;
}

// One pass over `order` in mini-batches. loss_fn(model, example_index) builds
// a scalar loss on the replica's parameters. Per-example gradients are summed
// in batch order, so the update is the same for any replica count. Returns
// the summed loss.
template <typename Model, typename LossFn>
double run_epoch(ParamSet& params, Adam& adam, std::vector<Replica<Model>>& replicas,
                 std::span<const std::size_t> order, std::size_t batch_size, LossFn&& loss_fn) {
  GradBuffer batch = zeros_like(params);
  const std::size_t n_rep = replicas.size();
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    for (auto& g : batch) std::fill(g.begin(), g.end(), 0.0);
    for (auto& r : replicas) r.params.copy_values_from(params);

    for (std::size_t round = start; round < end; round += n_rep) {
      const std::size_t active = std::min(n_rep, end - round);
      run_parallel(active, [&](std::size_t w) {
        auto& rep = replicas[w];
        rep.params.zero_grad();
        const Tensor loss = loss_fn(rep.model, order[round + w]);
        rep.loss = loss.item();
        if (!std::isfinite(rep.loss)) return;
        backward(loss);
        for (auto& g : rep.grads) std::fill(g.begin(), g.end(), 0.0);
        accumulate_grads(rep.grads, rep.params);
      });
      for (std::size_t w = 0; w < active; ++w) {
        loss_sum += replicas[w].loss;
        for (std::size_t k = 0; k < batch.size(); ++k) {
          auto& dst = batch[k];
          const auto& src = replicas[w].grads[k];
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      if (!std::isfinite(loss_sum)) return loss_sum;
    }
    scale_grads(batch, 1.0 / static_cast<double>(end - start));
    adam.step(params, batch);
  }
  return loss_sum;
}

}  // namespace rkg::detail
