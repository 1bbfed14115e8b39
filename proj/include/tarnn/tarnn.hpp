#pragma once

#include "tarnn/errors.hpp"
#include "tarnn/tensor.hpp"
#include "tarnn/tape.hpp"
#include "tarnn/diffmath.hpp"
#include "tarnn/rng.hpp"
#include "tarnn/cells.hpp"
#include "tarnn/integrators.hpp"
#include "tarnn/data.hpp"
#include "tarnn/model.hpp"
#include "tarnn/dynamics.hpp"
#include "tarnn/evaluation.hpp"
#include "tarnn/training.hpp"
#include "tarnn/benchmark.hpp"
#include "tarnn/checks.hpp"
