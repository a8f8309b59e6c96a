#pragma once

#include "actreg/analyze.hpp"
#include "actreg/autodiff.hpp"
#include "actreg/config.hpp"
#include "actreg/data.hpp"
#include "actreg/energy.hpp"
#include "actreg/error.hpp"
#include "actreg/gradcheck.hpp"
#include "actreg/objective.hpp"
#include "actreg/optim.hpp"
#include "actreg/record.hpp"
#include "actreg/rng.hpp"
#include "actreg/stats/special.hpp"
#include "actreg/stats/stats.hpp"
#include "actreg/sweep.hpp"
#include "actreg/tensor.hpp"
#include "actreg/train.hpp"
#include "actreg/zoo.hpp"
