#pragma once

#include <cstdint>

#include "oemb/objective.hpp"
#include "oemb/params.hpp"

namespace oemb {

struct TrainConfig {
    Arch arch = Arch::m2;
    std::size_t batch_size = 200;
    double lr = 0.001;
    double clip_threshold = 2.0;
    double margin = 0.05;
    LossKind loss_kind = LossKind::pairwise;
    std::size_t d_e = 950;
    std::size_t d_a = 300;
    std::size_t monitor_size = 1000;
    /// Epochs without monitor improvement before stopping.
    std::size_t patience = 5;
    std::size_t max_epochs = 50;
    std::uint64_t rng_seed = 0;
};

}  // namespace oemb
