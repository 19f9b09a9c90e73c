#pragma once

#include "oemb/checkpoint.hpp"
#include "oemb/config.hpp"
#include "oemb/data.hpp"
#include "oemb/encoders.hpp"
#include "oemb/error.hpp"
#include "oemb/eval.hpp"
#include "oemb/gradients.hpp"
#include "oemb/mctest.hpp"
#include "oemb/objective.hpp"
#include "oemb/optim.hpp"
#include "oemb/parallel.hpp"
#include "oemb/params.hpp"
#include "oemb/tensor.hpp"
#include "oemb/trainer.hpp"
