#pragma once

#include "setrec/core.hpp"
#include "setrec/set_models.hpp"
#include "setrec/qp.hpp"
#include "setrec/training.hpp"
#include "setrec/baselines.hpp"
#include "setrec/synthgen.hpp"
#include "setrec/evaluation.hpp"
#include "setrec/analysis.hpp"
#include "setrec/io.hpp"
